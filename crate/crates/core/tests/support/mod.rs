//! Stand-in for an external Deep SHAP run: DeepLIFT rescale multipliers
//! averaged over each cell's references, written as importable tables.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use faithbench::attribution::{explained_rows, export_table, AttributionTable, GridCell, Method};
use faithbench::baselines::{constant_median, BaselineKind, ReferencePool};
use faithbench::data::Dataset;
use faithbench::harness::{grid_spec_for, ExperimentConfig};
use faithbench::model::{Activation, Architecture, DenseModel, Target};
use faithbench::scalar::sigmoid;

pub const LABEL: &str = "deep_shap";

fn secant(fx: f64, fb: f64, zx: f64, zb: f64, slope_at_x: f64) -> f64 {
    if (zx - zb).abs() > 1e-12 {
        (fx - fb) / (zx - zb)
    } else {
        slope_at_x
    }
}

/// Rescale-rule attributions of `x` against one reference; they sum to
/// `f(x) - f(b)` exactly.
pub fn rescale(model: &DenseModel<f64>, x: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, target: Target) -> Array1<f64> {
    let (mut ax, mut ab) = (x.to_owned(), b.to_owned());
    let mut slopes = Vec::new();
    for l in model.layers() {
        let zx = l.weights.dot(&ax) + &l.bias;
        let zb = l.weights.dot(&ab) + &l.bias;
        let (nx, nb) = match l.activation {
            Activation::Relu => (zx.mapv(|v| v.max(0.0)), zb.mapv(|v| v.max(0.0))),
            Activation::Identity => (zx.clone(), zb.clone()),
        };
        let mut s = Array1::zeros(zx.len());
        Zip::from(&mut s).and(&zx).and(&zb).and(&nx).and(&nb).for_each(|s, &zx, &zb, &fx, &fb| {
            let local = match l.activation {
                Activation::Relu => f64::from(u8::from(zx > 0.0)),
                Activation::Identity => 1.0,
            };
            *s = secant(fx, fb, zx, zb, local);
        });
        slopes.push(s);
        ax = nx;
        ab = nb;
    }
    let (zx, zb) = (ax[0], ab[0]);
    let out = match target {
        Target::Logit => 1.0,
        Target::Probability => {
            let p = sigmoid(zx);
            secant(p, sigmoid(zb), zx, zb, p * (1.0 - p))
        }
    };
    let mut m = Array1::from_elem(1, out);
    for (l, s) in model.layers().iter().zip(&slopes).rev() {
        m = l.weights.t().dot(&(&m * s));
    }
    (&x - &b) * &m
}

pub fn deep_shap(model: &DenseModel<f64>, x: ArrayView1<'_, f64>, refs: ArrayView2<'_, f64>, target: Target) -> Array1<f64> {
    let mut total = Array1::zeros(x.len());
    for b in refs.outer_iter() {
        total += &rescale(model, x, b, target);
    }
    total / refs.nrows() as f64
}

/// Writes every imported cell of `arch` under the config's import directory,
/// with references drawn exactly as the grid draws them for native methods.
pub fn produce(cfg: &ExperimentConfig, ds: &Dataset<f64>, model: &DenseModel<f64>, arch: Architecture) {
    let spec = grid_spec_for(cfg, arch);
    let dir = spec.import_dir.clone().expect("import directory configured");
    let target = spec.target_for(arch);
    let rows = explained_rows(ds);
    let opposite = ReferencePool::new(ds, model, spec.class_source).unwrap();
    let plain = ReferencePool::without_model(ds);
    for cell in spec.cells(arch).unwrap() {
        let (Method::Imported(label), Some(kind)) = (&cell.method, cell.baseline_kind) else {
            continue;
        };
        assert_eq!(label, LABEL);
        let seed = cell.seed(spec.seed);
        let global = match kind {
            BaselineKind::ConstantMedian => Some(constant_median(ds).unwrap().references),
            BaselineKind::Training => Some(plain.training_sample(spec.k, seed).unwrap().references),
            _ => None,
        };
        let mut values = Array2::zeros((rows.len(), ds.n_features()));
        for (r, &i) in rows.iter().enumerate() {
            let x = ds.row(i);
            let refs = match &global {
                Some(g) => g.clone(),
                None => match kind {
                    BaselineKind::OppositeClass => opposite.opposite_class(model, x, spec.k, seed).unwrap().references,
                    _ => plain.nearest_neighbors(x, spec.k, seed).unwrap().references,
                },
            };
            values.row_mut(r).assign(&deep_shap(model, x, refs.view(), target));
        }
        let table = AttributionTable {
            values,
            method: cell.method.clone(),
            baseline_kind: Some(kind),
            k: spec.k,
            repeat: cell.repeat,
            seed,
            dataset_hash: ds.hash(),
            target,
        };
        write(&dir, &cell, &table);
    }
}

fn write(dir: &Path, cell: &GridCell, table: &AttributionTable<f64>) {
    let kind = cell.baseline_kind.expect("imported cells carry a baseline");
    let path = dir.join(LABEL).join(format!("{kind}_r{}.csv", cell.repeat));
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    export_table(table, &path).unwrap();
}
