use std::path::PathBuf;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    default_target, explained_rows, ground_truth_linear, import_table, integrated_gradients, random_explanations,
    AttributionTable, IgConfig, KernelShapConfig, KernelShapPlan, Method,
};
use crate::baselines::{constant_median, BaselineKind, ClassSource, ReferencePool, DEFAULT_K};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Architecture, DenseModel, Target};
use crate::scalar::Scalar;
use crate::seed;

/// Which tables to produce for one (dataset, model) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Baseline-dependent methods.
    pub methods: Vec<Method>,
    pub baseline_kinds: Vec<BaselineKind>,
    pub repeats: usize,
    pub k: usize,
    pub random: bool,
    /// `None` adds ground truth exactly when the model is linear.
    pub ground_truth: Option<bool>,
    pub ig_steps: usize,
    pub kernel_shap: KernelShapConfig,
    /// `None` picks logit for linear models and probability otherwise.
    pub target: Option<Target>,
    pub class_source: ClassSource,
    /// Directory holding `<label>/<baseline>_r<repeat>.csv` for imported methods.
    pub import_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            methods: vec![Method::IntegratedGradients, Method::KernelShap],
            baseline_kinds: BaselineKind::ALL.to_vec(),
            repeats: 3,
            k: DEFAULT_K,
            random: true,
            ground_truth: None,
            ig_steps: 50,
            kernel_shap: KernelShapConfig::default(),
            target: None,
            class_source: ClassSource::Predicted,
            import_dir: None,
            seed: 0,
        }
    }
}

/// One table of the grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCell {
    pub method: Method,
    pub baseline_kind: Option<BaselineKind>,
    pub repeat: usize,
}

impl GridCell {
    pub fn candidate(&self) -> String {
        match self.baseline_kind {
            Some(b) => format!("{}/{}", self.method, b),
            None => self.method.to_string(),
        }
    }

    /// File stem used for this cell's artifacts.
    pub fn stem(&self) -> String {
        format!("{}__r{}", self.candidate().replace(['/', ':'], "_"), self.repeat)
    }

    pub fn seed(&self, grid_seed: u64) -> u64 {
        seed::derive_index(seed::derive(grid_seed, &self.candidate()), self.repeat as u64)
    }
}

impl GridSpec {
    pub fn validate(&self, arch: Architecture) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        for m in &self.methods {
            match m {
                Method::Random | Method::GroundTruth => {
                    return Err(Error::Config(format!("{m} is a control, not a baseline-dependent method")))
                }
                Method::Imported(_) if self.import_dir.is_none() => {
                    return Err(Error::Config(format!("{m} needs an import directory")))
                }
                _ => {}
            }
        }
        if !self.methods.is_empty() && self.baseline_kinds.is_empty() {
            return Err(Error::Config("no baseline kinds given".into()));
        }
        if self.ground_truth == Some(true) && arch != Architecture::Linear {
            return Err(Error::Config(format!("ground truth requested for a {arch} model")));
        }
        IgConfig {
            steps: self.ig_steps,
            target: Target::Logit,
        }
        .validate()
    }

    pub fn target_for(&self, arch: Architecture) -> Target {
        self.target.unwrap_or_else(|| default_target(arch))
    }

    /// Every cell in production order.
    pub fn cells(&self, arch: Architecture) -> Result<Vec<GridCell>> {
        self.validate(arch)?;
        let mut out = Vec::new();
        for m in &self.methods {
            for &b in &self.baseline_kinds {
                for r in 0..self.repeats {
                    out.push(GridCell {
                        method: m.clone(),
                        baseline_kind: Some(b),
                        repeat: r,
                    });
                }
            }
        }
        let mut controls = Vec::new();
        if self.random {
            controls.push(Method::Random);
        }
        if self.ground_truth.unwrap_or(arch == Architecture::Linear) {
            controls.push(Method::GroundTruth);
        }
        for m in controls {
            for r in 0..self.repeats {
                out.push(GridCell {
                    method: m.clone(),
                    baseline_kind: None,
                    repeat: r,
                });
            }
        }
        Ok(out)
    }

    /// Produces the table of a single cell.
    pub fn generate_cell<T: Scalar>(&self, ds: &Dataset<T>, model: &DenseModel<T>, cell: &GridCell) -> Result<AttributionTable<T>> {
        let arch = model.architecture();
        self.validate(arch)?;
        if model.input_dim() != ds.n_features() {
            return Err(Error::Shape {
                expected: ds.n_features(),
                got: model.input_dim(),
            });
        }
        let rows = explained_rows(ds);
        let seed = cell.seed(self.seed);
        let target = self.target_for(arch);
        let finish = |mut t: AttributionTable<T>| {
            t.repeat = cell.repeat;
            t.seed = seed;
            t.dataset_hash = ds.hash();
            t.check(ds, rows.len())?;
            Ok(t)
        };
        match (&cell.method, cell.baseline_kind) {
            (Method::Random, None) => finish(random_explanations(rows.len(), ds.n_features(), seed)),
            (Method::GroundTruth, None) => finish(ground_truth_linear(model, ds, &rows)?),
            (Method::Imported(label), Some(b)) => self.import_cell(ds, label, b, cell.repeat, rows.len()),
            (m @ (Method::IntegratedGradients | Method::KernelShap), Some(b)) => {
                let values = self.explain(ds, model, m, b, seed, target, &rows)?;
                finish(AttributionTable {
                    values,
                    method: m.clone(),
                    baseline_kind: Some(b),
                    k: if b == BaselineKind::ConstantMedian { 1 } else { self.k },
                    repeat: cell.repeat,
                    seed,
                    dataset_hash: String::new(),
                    target,
                })
            }
            _ => Err(Error::Config(format!("invalid grid cell {}", cell.candidate()))),
        }
    }

    fn import_cell<T: Scalar>(&self, ds: &Dataset<T>, label: &str, b: BaselineKind, repeat: usize, n: usize) -> Result<AttributionTable<T>> {
        let dir = self.import_dir.as_ref().ok_or_else(|| Error::Config("no import directory".into()))?;
        let path = dir.join(label).join(format!("{b}_r{repeat}.csv"));
        let t = import_table::<T>(&path, n, ds.n_features())?;
        let expected = Method::Imported(label.to_string());
        if t.method != expected || t.baseline_kind != Some(b) || t.repeat != repeat {
            return Err(Error::Import(format!(
                "{} carries metadata for {} repeat {}",
                path.display(),
                t.candidate(),
                t.repeat
            )));
        }
        if t.dataset_hash != ds.hash() {
            return Err(Error::Import(format!("{} was produced for another dataset", path.display())));
        }
        Ok(t)
    }

    #[allow(clippy::too_many_arguments)]
    fn explain<T: Scalar>(
        &self,
        ds: &Dataset<T>,
        model: &DenseModel<T>,
        method: &Method,
        kind: BaselineKind,
        seed: u64,
        target: Target,
        rows: &[usize],
    ) -> Result<Array2<T>> {
        let d = ds.n_features();
        let pool = match kind {
            BaselineKind::OppositeClass => ReferencePool::new(ds, model, self.class_source)?,
            _ => ReferencePool::without_model(ds),
        };
        let global = match kind {
            BaselineKind::ConstantMedian => Some(constant_median(ds)?.references),
            BaselineKind::Training => Some(pool.training_sample(self.k, seed)?.references),
            _ => None,
        };
        let ig = IgConfig {
            steps: self.ig_steps,
            target,
        };
        let plan = match method {
            Method::KernelShap => Some(KernelShapPlan::new(
                d,
                &KernelShapConfig {
                    seed: seed::derive(seed, "coalitions"),
                    target,
                    ..self.kernel_shap
                },
            )?),
            _ => None,
        };
        let explained: Vec<Array1<T>> = rows
            .par_iter()
            .map(|&i| {
                let x = ds.row(i);
                let local;
                let refs = match &global {
                    Some(r) => r.view(),
                    None => {
                        local = match kind {
                            BaselineKind::OppositeClass => pool.opposite_class(model, x, self.k, seed)?,
                            _ => pool.nearest_neighbors(x, self.k, seed)?,
                        };
                        local.references.view()
                    }
                };
                match &plan {
                    Some(p) => p.explain(model, x, refs, target),
                    None => integrated_gradients(model, x, refs, &ig),
                }
                .map_err(|e| e.context(format!("row {i}")))
            })
            .collect::<Result<_>>()?;
        let mut out = Array2::zeros((rows.len(), d));
        for (r, v) in explained.iter().enumerate() {
            out.row_mut(r).assign(v);
        }
        Ok(out)
    }
}

/// All tables of the grid, failing on the first broken cell.
pub fn generate_grid<T: Scalar>(ds: &Dataset<T>, model: &DenseModel<T>, spec: &GridSpec) -> Result<Vec<AttributionTable<T>>> {
    spec.cells(model.architecture())?
        .iter()
        .map(|c| spec.generate_cell(ds, model, c).map_err(|e| e.context(c.candidate())))
        .collect()
}
