use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{explained_rows, AttributionTable};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::DenseModel;
use crate::perturb::{rank_units, PerturbSpec, Perturber};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgiConfig {
    /// `None` uses [`default_k`].
    pub k: Option<usize>,
    pub m: usize,
    pub aggregate: bool,
    /// Larger explained sets are subsampled to this many rows.
    pub max_rows: usize,
    pub perturb: PerturbSpec,
}

impl Default for PgiConfig {
    fn default() -> Self {
        PgiConfig {
            k: None,
            m: 10,
            aggregate: false,
            max_rows: 1000,
            perturb: PerturbSpec::default(),
        }
    }
}

pub fn default_k(units: usize) -> usize {
    ((0.25 * units as f64).round() as usize).max(1)
}

struct Setup<'a, T> {
    perturber: Perturber<T>,
    /// (table position, dataset row)
    rows: Vec<(usize, usize)>,
    units: usize,
    model: &'a DenseModel<T>,
    ds: &'a Dataset<T>,
}

fn setup<'a, T: Scalar>(model: &'a DenseModel<T>, ds: &'a Dataset<T>, table: &AttributionTable<T>, cfg: &PgiConfig) -> Result<Setup<'a, T>> {
    cfg.perturb.validate()?;
    if cfg.m == 0 {
        return Err(Error::Config("PGI needs m >= 1".into()));
    }
    let explained = explained_rows(ds);
    table.check(ds, explained.len())?;
    if model.input_dim() != ds.n_features() {
        return Err(Error::Shape {
            expected: ds.n_features(),
            got: model.input_dim(),
        });
    }
    let mut positions: Vec<usize> = (0..explained.len()).collect();
    if positions.len() > cfg.max_rows {
        let mut rng = seed::rng(seed::derive(cfg.perturb.seed, "pgi-rows"));
        positions = rand::seq::index::sample(&mut rng, explained.len(), cfg.max_rows).into_vec();
        positions.sort_unstable();
    }
    if positions.is_empty() {
        return Err(Error::Precondition("no rows to evaluate".into()));
    }
    Ok(Setup {
        perturber: Perturber::new(ds),
        rows: positions.into_iter().map(|p| (p, explained[p])).collect(),
        units: ds.schema().units(cfg.aggregate).len(),
        model,
        ds,
    })
}

fn check_k(k: usize, units: usize) -> Result<()> {
    if k == 0 || k > units {
        return Err(Error::Config(format!("k = {k} is outside 1..={units} selectable units")));
    }
    Ok(())
}

impl<T: Scalar> Setup<'_, T> {
    fn score(&self, table: &AttributionTable<T>, cfg: &PgiConfig, k: usize) -> Result<f64> {
        let d = self.ds.n_features();
        let per_row: Vec<f64> = self
            .rows
            .par_iter()
            .map(|&(p, i)| {
                let x = self.ds.row(i);
                let mut units = rank_units(table.values.row(p), self.ds.schema(), cfg.aggregate);
                units.truncate(k);
                let spec = cfg.perturb.with_seed(seed::derive_index(cfg.perturb.seed, i as u64));
                let perturbed: Array2<T> = self.perturber.apply_batch(x, &units, &spec, cfg.m)?;
                // the clean row shares the batch so both go through one kernel
                let mut batch = Array2::zeros((cfg.m + 1, d));
                batch.row_mut(0).assign(&x);
                batch.slice_mut(ndarray::s![1.., ..]).assign(&perturbed);
                let f = self.model.predict_batch(batch.view())?;
                let fx = f[0];
                Ok(f.iter().skip(1).map(|&v| (fx - v).abs().as_f64()).sum::<f64>() / cfg.m as f64)
            })
            .collect::<Result<_>>()?;
        Ok(per_row.iter().sum::<f64>() / per_row.len() as f64)
    }
}

/// Mean absolute change in predicted probability when the top-k units of each
/// row are perturbed, averaged over `m` draws and the evaluated rows.
pub fn pgi<T: Scalar>(model: &DenseModel<T>, ds: &Dataset<T>, table: &AttributionTable<T>, cfg: &PgiConfig) -> Result<f64> {
    let s = setup(model, ds, table, cfg)?;
    let k = cfg.k.unwrap_or_else(|| default_k(s.units));
    check_k(k, s.units)?;
    s.score(table, cfg, k)
}

/// PGI at each requested `k`, all sharing the same perturbation draws.
pub fn pgi_sweep<T: Scalar>(
    model: &DenseModel<T>,
    ds: &Dataset<T>,
    table: &AttributionTable<T>,
    cfg: &PgiConfig,
    k_values: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if k_values.is_empty() {
        return Err(Error::Config("empty k list".into()));
    }
    let s = setup(model, ds, table, cfg)?;
    k_values
        .iter()
        .map(|&k| {
            check_k(k, s.units)?;
            Ok((k, s.score(table, cfg, k)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{ground_truth_linear, random_explanations};
    use crate::data::{generate_synthetic, ColumnSpec, FeatureSchema, Split, SyntheticSpec};
    use crate::model::{Layer, Activation, Architecture};
    use ndarray::{array, Array1};

    fn synthetic() -> (Dataset<f64>, DenseModel<f64>) {
        let ds = generate_synthetic::<f64>(&SyntheticSpec::new(200, 6, 3)).unwrap().standardize();
        let c: Vec<f64> = (0..6).map(|j| if j % 2 == 0 { 1.5 } else { -0.7 }).collect();
        (ds, DenseModel::linear(&c, 0.1).unwrap())
    }

    fn table_for(ds: &Dataset<f64>, seed: u64) -> AttributionTable<f64> {
        random_explanations(ds.test_indices().len(), ds.n_features(), seed)
    }

    #[test]
    fn zero_for_constant_model_and_identity_perturbation() {
        let (ds, model) = synthetic();
        let t = table_for(&ds, 1);
        let constant = DenseModel::new(
            Architecture::Linear,
            vec![Layer {
                weights: ndarray::Array2::zeros((1, 6)),
                bias: array![0.7f64.ln() - 0.3f64.ln()],
                activation: Activation::Identity,
            }],
        )
        .unwrap();
        assert_eq!(pgi(&constant, &ds, &t, &PgiConfig::default()).unwrap(), 0.0);
        let still = PgiConfig {
            perturb: PerturbSpec::gaussian(0.0, 0.0, 3),
            ..Default::default()
        };
        assert_eq!(pgi(&model, &ds, &t, &still).unwrap(), 0.0);
        assert!(pgi(&model, &ds, &t, &PgiConfig::default()).unwrap() > 0.0);
    }

    #[test]
    fn flip_expectation_matches_seed_stream() {
        // one binary categorical feature, linear model
        let schema = FeatureSchema::new(vec![ColumnSpec::categorical("c", 2)]).unwrap();
        let x = array![[0.0], [1.0], [0.0], [1.0], [1.0]];
        let ds = Dataset::new("c", schema, x, vec![0, 1, 0, 1, 1], vec![Split::Train, Split::Train, Split::Test, Split::Test, Split::Train]).unwrap();
        let model = DenseModel::linear(&[2.0], -1.0).unwrap();
        let table = AttributionTable {
            values: array![[1.0], [1.0]],
            method: crate::attribution::Method::IntegratedGradients,
            ..random_explanations(2, 1, 0)
        };
        let cfg = PgiConfig {
            k: Some(1),
            m: 7,
            perturb: PerturbSpec::gaussian(0.0, 0.3, 11),
            ..Default::default()
        };
        let gap = (crate::scalar::sigmoid(1.0f64) - crate::scalar::sigmoid(-1.0)).abs();
        let p = Perturber::new(&ds);
        let mut expected = 0.0;
        for &i in &[2usize, 3] {
            let spec = cfg.perturb.with_seed(seed::derive_index(11, i as u64));
            let b = p.apply_batch(ds.row(i), &[crate::data::Unit::Column(0)], &spec, 7).unwrap();
            let flips = b.column(0).iter().zip(std::iter::repeat(ds.x()[[i, 0]])).filter(|(a, b)| **a != *b).count();
            expected += flips as f64 * gap / 7.0;
        }
        expected /= 2.0;
        assert!((pgi(&model, &ds, &table, &cfg).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn sweep_is_consistent_and_rescale_invariant() {
        let (ds, model) = synthetic();
        let rows = ds.test_indices();
        let gt = ground_truth_linear(&model, &ds, &rows).unwrap();
        let cfg = PgiConfig::default();
        let ks: Vec<usize> = (1..=6).collect();
        let sweep = pgi_sweep(&model, &ds, &gt, &cfg, &ks).unwrap();
        assert_eq!(sweep.len(), 6);
        assert!(sweep[5].1 >= sweep[0].1);
        let full = pgi(&model, &ds, &gt, &PgiConfig { k: Some(6), ..cfg.clone() }).unwrap();
        assert_eq!(sweep[5].1, full);
        let mut scaled = gt.clone();
        scaled.values.mapv_inplace(|v| v * 3.5);
        assert_eq!(pgi(&model, &ds, &scaled, &cfg).unwrap(), pgi(&model, &ds, &gt, &cfg).unwrap());
        assert!(pgi_sweep(&model, &ds, &gt, &cfg, &[]).is_err());
        assert!(pgi(&model, &ds, &gt, &PgiConfig { k: Some(7), ..cfg.clone() }).is_err());
        let _ = Array1::<f64>::zeros(1);
    }

    #[test]
    fn subsampling_is_seeded() {
        let (ds, model) = synthetic();
        let t = table_for(&ds, 2);
        let cfg = PgiConfig { max_rows: 10, ..Default::default() };
        assert_eq!(pgi(&model, &ds, &t, &cfg).unwrap(), pgi(&model, &ds, &t, &cfg).unwrap());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn prop_non_negative_and_scale_free(seed in 0u64..1000, scale in 1e-3f64..1e3, k in 1usize..=6) {
            let (ds, model) = synthetic();
            let mut table = table_for(&ds, seed);
            table.method = crate::attribution::Method::Imported("scaled".into());
            let mut scaled = table.clone();
            scaled.values.mapv_inplace(|v| v * scale);
            let cfg = PgiConfig { k: Some(k), ..Default::default() };
            let base = pgi(&model, &ds, &table, &cfg).unwrap();
            proptest::prop_assert!(base >= 0.0);
            proptest::prop_assert_eq!(base, pgi(&model, &ds, &scaled, &cfg).unwrap());
        }
    }
}
