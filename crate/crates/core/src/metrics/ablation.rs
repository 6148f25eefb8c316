use std::cmp::Ordering;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::auroc::auroc;
use crate::attribution::{explained_rows, AttributionTable};
use crate::data::{Dataset, Unit};
use crate::error::{Error, Result};
use crate::model::DenseModel;
use crate::perturb::{rank_units, PerturbSpec, Perturber};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationOrder {
    /// Each row ablates its own units in order of its own |attribution|.
    #[default]
    PerRow,
    /// One order for all rows, by mean |attribution| over the explained rows.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub perturb: PerturbSpec,
    pub aggregate: bool,
    pub order: AblationOrder,
    /// Reuse each row's draws across steps; otherwise every step draws afresh.
    pub cumulative: bool,
    /// Perturbed copies of each row per step.
    pub draws: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            perturb: PerturbSpec::marginal(0.3, 0),
            aggregate: true,
            order: AblationOrder::PerRow,
            cumulative: true,
            draws: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCurve {
    pub steps: Vec<usize>,
    pub performance: Vec<f64>,
    pub auc: f64,
}

impl AblationCurve {
    /// Builds a curve over steps `0..performance.len()`.
    pub fn from_performance(performance: Vec<f64>) -> Result<Self> {
        if performance.is_empty() {
            return Err(Error::Precondition("empty ablation curve".into()));
        }
        let s = performance.len() - 1;
        let auc = if s == 0 {
            performance[0]
        } else {
            performance.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum::<f64>() / s as f64
        };
        Ok(AblationCurve {
            steps: (0..=s).collect(),
            performance,
            auc,
        })
    }
}

/// ABC: the normalized area under the curve; lower means more faithful.
pub fn abc(curve: &AblationCurve) -> f64 {
    curve.auc
}

fn global_order<T: Scalar>(table: &AttributionTable<T>, ds: &Dataset<T>, aggregate: bool) -> Vec<Unit> {
    let schema = ds.schema();
    let n = T::of_usize(table.n_rows().max(1));
    let mean_abs: ndarray::Array1<T> = table.values.mapv(|v| v.abs()).sum_axis(ndarray::Axis(0)) / n;
    let mut units = schema.units(aggregate);
    let score = |u: Unit| schema.unit_columns(u).map(|j| mean_abs[j]).sum::<T>();
    units.sort_by(|&a, &b| {
        score(b)
            .partial_cmp(&score(a))
            .unwrap_or(Ordering::Equal)
            .then(schema.unit_columns(a).start.cmp(&schema.unit_columns(b).start))
    });
    units
}

/// Test AUROC as units are perturbed in order of importance, from none to all.
pub fn ablation_curve<T: Scalar>(
    model: &DenseModel<T>,
    ds: &Dataset<T>,
    table: &AttributionTable<T>,
    cfg: &AblationConfig,
) -> Result<AblationCurve> {
    cfg.perturb.validate()?;
    if cfg.draws == 0 {
        return Err(Error::Config("ablation needs draws >= 1".into()));
    }
    let rows = explained_rows(ds);
    if rows.is_empty() {
        return Err(Error::Precondition("test split is empty".into()));
    }
    table.check(ds, rows.len())?;
    let labels: Vec<u8> = ds.labels(&rows);
    let n_units = ds.schema().units(cfg.aggregate).len();
    let global = match cfg.order {
        AblationOrder::Global => Some(global_order(table, ds, cfg.aggregate)),
        AblationOrder::PerRow => None,
    };
    let perturber = Perturber::new(ds);
    let d = ds.n_features();
    // per row: (n_units + 1) × draws perturbed copies
    let blocks: Vec<Array2<T>> = rows
        .par_iter()
        .enumerate()
        .map(|(p, &i)| {
            let order = match &global {
                Some(g) => g.clone(),
                None => rank_units(table.values.row(p), ds.schema(), cfg.aggregate),
            };
            let x = ds.row(i);
            let row_seed = seed::derive_index(cfg.perturb.seed, i as u64);
            let mut block = Array2::zeros(((n_units + 1) * cfg.draws, d));
            for s in 0..=n_units {
                for r in 0..cfg.draws {
                    let mut draw_seed = seed::derive_index(row_seed, r as u64);
                    if !cfg.cumulative {
                        draw_seed = seed::derive_index(draw_seed, s as u64);
                    }
                    let y = perturber.apply(x, &order[..s], &cfg.perturb, draw_seed)?;
                    block.row_mut(s * cfg.draws + r).assign(&y);
                }
            }
            Ok(block)
        })
        .collect::<Result<_>>()?;
    let performance: Vec<f64> = (0..=n_units)
        .into_par_iter()
        .map(|s| {
            let mut batch = Array2::zeros((rows.len() * cfg.draws, d));
            let mut y = Vec::with_capacity(rows.len() * cfg.draws);
            for (p, block) in blocks.iter().enumerate() {
                for r in 0..cfg.draws {
                    batch.row_mut(p * cfg.draws + r).assign(&block.row(s * cfg.draws + r));
                    y.push(labels[p]);
                }
            }
            let scores = model.predict_batch(batch.view())?;
            auroc(scores.as_slice().expect("contiguous"), &y)
        })
        .collect::<Result<_>>()?;
    AblationCurve::from_performance(performance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{ground_truth_linear, random_explanations};
    use crate::data::{generate_synthetic, SyntheticSpec};

    #[test]
    fn trapezoid_examples() {
        let c = AblationCurve::from_performance(vec![1.0, 0.5, 0.0]).unwrap();
        assert_eq!(c.auc, 0.5);
        assert_eq!(c.steps, vec![0, 1, 2]);
        assert_eq!(abc(&AblationCurve::from_performance(vec![0.8; 5]).unwrap()), 0.8);
        let dip = AblationCurve::from_performance(vec![0.9, 0.6, 0.5]).unwrap();
        let flat = AblationCurve::from_performance(vec![0.9, 0.7, 0.5]).unwrap();
        assert!(abc(&dip) < abc(&flat));
    }

    fn setup() -> (Dataset<f64>, DenseModel<f64>) {
        let ds = generate_synthetic::<f64>(&SyntheticSpec::new(400, 8, 5)).unwrap().standardize();
        let c: Vec<f64> = (0..8).map(|j| 2.0 * 0.6f64.powi(j)).collect();
        (ds, DenseModel::linear(&c, 0.0).unwrap())
    }

    #[test]
    fn endpoints_and_determinism() {
        let (ds, model) = setup();
        let rows = ds.test_indices();
        let t = random_explanations(rows.len(), 8, 3);
        let cfg = AblationConfig::default();
        let a = ablation_curve(&model, &ds, &t, &cfg).unwrap();
        assert_eq!(a, ablation_curve(&model, &ds, &t, &cfg).unwrap());
        assert_eq!(a.performance.len(), 9);
        let scores = model.predict_batch(ds.rows(&rows).view()).unwrap();
        assert_eq!(a.performance[0], auroc(scores.as_slice().unwrap(), &ds.labels(&rows)).unwrap());
        assert!(a.performance.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn ground_truth_beats_random() {
        let (ds, model) = setup();
        let rows = ds.test_indices();
        let gt = ground_truth_linear(&model, &ds, &rows).unwrap();
        let rnd = random_explanations(rows.len(), 8, 3);
        for order in [AblationOrder::PerRow, AblationOrder::Global] {
            let cfg = AblationConfig {
                perturb: PerturbSpec::marginal(0.3, 1),
                order,
                ..Default::default()
            };
            let g = abc(&ablation_curve(&model, &ds, &gt, &cfg).unwrap());
            let r = abc(&ablation_curve(&model, &ds, &rnd, &cfg).unwrap());
            assert!(g < r, "{order:?}: {g} vs {r}");
        }
    }
}
