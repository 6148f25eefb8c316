//! Perturbation engines shared by the faithfulness metrics.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, FeatureSchema, Unit};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum NumericMode {
    /// Additive noise with standard deviation `sigma` (standardized units).
    Gaussian { sigma: f64 },
    /// Replace with a uniformly drawn train-split value of the same column.
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub numeric_mode: NumericMode,
    pub categorical_flip_prob: f64,
    pub seed: u64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec {
            numeric_mode: NumericMode::Gaussian { sigma: 0.1 },
            categorical_flip_prob: 0.3,
            seed: 0,
        }
    }
}

impl PerturbSpec {
    pub fn gaussian(sigma: f64, flip: f64, seed: u64) -> Self {
        PerturbSpec {
            numeric_mode: NumericMode::Gaussian { sigma },
            categorical_flip_prob: flip,
            seed,
        }
    }

    pub fn marginal(flip: f64, seed: u64) -> Self {
        PerturbSpec {
            numeric_mode: NumericMode::Marginal,
            categorical_flip_prob: flip,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let NumericMode::Gaussian { sigma } = self.numeric_mode {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::Spec(format!("sigma must be finite and non-negative, got {sigma}")));
            }
        }
        if !(0.0..=1.0).contains(&self.categorical_flip_prob) {
            return Err(Error::Spec(format!(
                "flip probability must lie in [0, 1], got {}",
                self.categorical_flip_prob
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopKMask {
    /// Selected units, most important first.
    pub selected: Vec<Unit>,
    pub k: usize,
}

/// All selectable units ranked by descending |score|; ties go to the unit
/// whose first column comes first. Group scores sum member |attribution|.
pub fn rank_units<T: Scalar>(row: ArrayView1<'_, T>, schema: &FeatureSchema, aggregate: bool) -> Vec<Unit> {
    let mut scored: Vec<(T, usize, Unit)> = schema
        .units(aggregate)
        .into_iter()
        .map(|u| {
            let cols = schema.unit_columns(u);
            let start = cols.start;
            (cols.map(|j| row[j].abs()).sum::<T>(), start, u)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|s| s.2).collect()
}

pub fn top_k_mask<T: Scalar>(row: ArrayView1<'_, T>, schema: &FeatureSchema, k: usize, aggregate: bool) -> Result<TopKMask> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    if row.len() != schema.len() {
        return Err(Error::Shape {
            expected: schema.len(),
            got: row.len(),
        });
    }
    let mut selected = rank_units(row, schema, aggregate);
    selected.truncate(k);
    Ok(TopKMask { selected, k })
}

/// Per-column random numbers drawn up front in a fixed order, so that any mask
/// applied under one seed sees the same draws for the columns it shares.
struct Draws {
    normal: Vec<f64>,
    pick: Vec<f64>,
    flip: Vec<f64>,
    choice: Vec<f64>,
}

impl Draws {
    fn new(d: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut out = Draws {
            normal: Vec::with_capacity(d),
            pick: Vec::with_capacity(d),
            flip: Vec::with_capacity(d),
            choice: Vec::with_capacity(d),
        };
        for _ in 0..d {
            out.normal.push(rng.sample(StandardNormal));
            out.pick.push(rng.random::<f64>());
            out.flip.push(rng.random::<f64>());
            out.choice.push(rng.random::<f64>());
        }
        out
    }
}

/// Uniform choice among `card` categories other than `current`.
fn other_category(current: usize, card: usize, u: f64) -> usize {
    let idx = ((u * (card - 1) as f64) as usize).min(card - 2);
    if idx < current {
        idx
    } else {
        idx + 1
    }
}

/// Perturbation context for one dataset: caches the schema and train columns.
#[derive(Debug, Clone)]
pub struct Perturber<T> {
    schema: FeatureSchema,
    train_columns: Vec<Vec<T>>,
}

impl<T: Scalar> Perturber<T> {
    pub fn new(ds: &Dataset<T>) -> Self {
        let train = ds.train_indices();
        let train_columns = (0..ds.n_features())
            .map(|j| train.iter().map(|&i| ds.x()[[i, j]]).collect())
            .collect();
        Perturber {
            schema: ds.schema().clone(),
            train_columns,
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    /// One perturbation of `x` restricted to `units`, drawn from `seed`.
    pub fn apply(&self, x: ArrayView1<'_, T>, units: &[Unit], spec: &PerturbSpec, seed: u64) -> Result<Array1<T>> {
        let d = self.schema.len();
        if x.len() != d {
            return Err(Error::Shape { expected: d, got: x.len() });
        }
        let draws = Draws::new(d, seed);
        let mut out = x.to_owned();
        for &unit in units {
            match unit {
                Unit::Group(g) => {
                    let group = self
                        .schema
                        .groups()
                        .get(g)
                        .ok_or_else(|| Error::Precondition(format!("unknown one-hot group {g}")))?;
                    let j0 = group.start;
                    if group.len < 2 || draws.flip[j0] >= spec.categorical_flip_prob {
                        continue;
                    }
                    let current = group.columns().position(|j| out[j] == T::one()).unwrap_or(0);
                    let next = other_category(current, group.len, draws.choice[j0]);
                    for (p, j) in group.columns().enumerate() {
                        out[j] = if p == next { T::one() } else { T::zero() };
                    }
                }
                Unit::Column(j) => {
                    if j >= d {
                        return Err(Error::Precondition(format!("column {j} out of range")));
                    }
                    self.perturb_column(&mut out, j, spec, &draws);
                }
            }
        }
        Ok(out)
    }

    fn perturb_column(&self, out: &mut Array1<T>, j: usize, spec: &PerturbSpec, draws: &Draws) {
        let col = &self.schema.columns()[j];
        match col.kind {
            ColumnKind::Numeric => match spec.numeric_mode {
                NumericMode::Gaussian { sigma } => out[j] += T::of(sigma * draws.normal[j]),
                NumericMode::Marginal => {
                    let values = &self.train_columns[j];
                    if !values.is_empty() {
                        let p = ((draws.pick[j] * values.len() as f64) as usize).min(values.len() - 1);
                        out[j] = values[p];
                    }
                }
            },
            ColumnKind::Categorical => {
                let card = col.cardinality.unwrap_or(1);
                if card >= 2 && draws.flip[j] < spec.categorical_flip_prob {
                    let current = out[j].as_f64() as usize;
                    out[j] = T::of_usize(other_category(current, card, draws.choice[j]));
                }
            }
            ColumnKind::OneHotMember => {
                let g = &self.schema.groups()[self.schema.group_of(j).expect("member has a group")];
                if g.len < 2 || draws.flip[j] >= spec.categorical_flip_prob {
                    return;
                }
                let current = g.columns().position(|c| out[c] == T::one()).unwrap_or(0);
                let own = j - g.start;
                // an inactive member switches on; an active one hands over to another category
                let next = if current == own {
                    other_category(current, g.len, draws.choice[j])
                } else {
                    own
                };
                for (p, c) in g.columns().enumerate() {
                    out[c] = if p == next { T::one() } else { T::zero() };
                }
            }
        }
    }

    /// `m` draws; row `r` uses the child seed `derive_index(spec.seed, r)`.
    pub fn apply_batch(&self, x: ArrayView1<'_, T>, units: &[Unit], spec: &PerturbSpec, m: usize) -> Result<Array2<T>> {
        if m == 0 {
            return Err(Error::Precondition("perturbation count must be at least 1".into()));
        }
        let mut out = Array2::zeros((m, x.len()));
        for r in 0..m {
            let row = self.apply(x, units, spec, seed::derive_index(spec.seed, r as u64))?;
            out.row_mut(r).assign(&row);
        }
        Ok(out)
    }
}

/// A single perturbation under `spec.seed`.
pub fn perturb<T: Scalar>(x: ArrayView1<'_, T>, mask: &TopKMask, spec: &PerturbSpec, ds: &Dataset<T>) -> Result<Array1<T>> {
    spec.validate()?;
    Perturber::new(ds).apply(x, &mask.selected, spec, spec.seed)
}

pub fn perturb_batch<T: Scalar>(
    x: ArrayView1<'_, T>,
    mask: &TopKMask,
    spec: &PerturbSpec,
    ds: &Dataset<T>,
    m: usize,
) -> Result<Array2<T>> {
    spec.validate()?;
    Perturber::new(ds).apply_batch(x, &mask.selected, spec, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSpec, Split};
    use ndarray::array;

    fn mixed() -> Dataset<f64> {
        let schema = FeatureSchema::new(vec![
            ColumnSpec::numeric("a"),
            ColumnSpec::one_hot("g=A", "g", 2),
            ColumnSpec::one_hot("g=B", "g", 2),
            ColumnSpec::categorical("c", 3),
            ColumnSpec::numeric("b"),
        ])
        .unwrap();
        let x = array![
            [0.5, 1.0, 0.0, 0.0, 3.0],
            [1.5, 0.0, 1.0, 1.0, 4.0],
            [-2.0, 1.0, 0.0, 2.0, 5.0],
            [7.0, 0.0, 1.0, 0.0, 6.0]
        ];
        Dataset::new("m", schema, x, vec![0, 1, 0, 1], vec![Split::Train; 4]).unwrap()
    }

    #[test]
    fn top_k_examples() {
        let schema = FeatureSchema::numeric(["a", "b", "c"]).unwrap();
        let m = top_k_mask(array![0.1, -0.9, 0.5].view(), &schema, 2, false).unwrap();
        assert_eq!(m.selected, vec![Unit::Column(1), Unit::Column(2)]);
        let m = top_k_mask(array![0.5, 0.5, 0.1].view(), &schema, 1, false).unwrap();
        assert_eq!(m.selected, vec![Unit::Column(0)]);
        let m = top_k_mask(array![0.5, 0.5, 0.1].view(), &schema, 10, false).unwrap();
        assert_eq!(m.selected.len(), 3);
        assert!(top_k_mask(array![0.5, 0.5, 0.1].view(), &schema, 0, false).is_err());

        let grouped = FeatureSchema::new(vec![
            ColumnSpec::numeric("a"),
            ColumnSpec::one_hot("c=x", "c", 2),
            ColumnSpec::one_hot("c=y", "c", 2),
        ])
        .unwrap();
        let m = top_k_mask(array![0.5, 0.3, -0.3].view(), &grouped, 1, true).unwrap();
        assert_eq!(m.selected, vec![Unit::Group(0)]);
        let m = top_k_mask(array![0.5, 0.3, -0.3].view(), &grouped, 1, false).unwrap();
        assert_eq!(m.selected, vec![Unit::Column(0)]);
    }

    #[test]
    fn identity_when_noise_off() {
        let ds = mixed();
        let spec = PerturbSpec::gaussian(0.0, 0.0, 9);
        let units = ds.schema().units(true);
        let mask = TopKMask { k: units.len(), selected: units };
        let x = ds.row(1);
        assert_eq!(perturb(x, &mask, &spec, &ds).unwrap(), x);
        let batch = perturb_batch(x, &mask, &spec, &ds, 4).unwrap();
        for r in batch.outer_iter() {
            assert_eq!(r, x);
        }
    }

    #[test]
    fn certain_flip_switches_binary_group() {
        let ds = mixed();
        let spec = PerturbSpec::gaussian(0.0, 1.0, 0);
        let mask = TopKMask { selected: vec![Unit::Group(0)], k: 1 };
        for s in 0..50 {
            let x = ds.row(0);
            let y = perturb(x, &mask, &spec.with_seed(s), &ds).unwrap();
            assert_eq!((y[1], y[2]), (0.0, 1.0));
            assert_eq!(y[0], x[0]);
            assert_eq!(y[3], x[3]);
        }
    }

    #[test]
    fn member_flip_keeps_group_valid() {
        let ds = mixed();
        let spec = PerturbSpec::gaussian(0.3, 1.0, 0);
        let units: Vec<Unit> = (0..5).map(Unit::Column).collect();
        let p = Perturber::new(&ds);
        for s in 0..100 {
            let y = p.apply(ds.row(2), &units, &spec, s).unwrap();
            assert_eq!(y[1] + y[2], 1.0);
            assert_ne!(y[3], 2.0);
            assert!(y[3] == 0.0 || y[3] == 1.0);
        }
    }

    #[test]
    fn marginal_values_come_from_train() {
        let ds = mixed();
        let spec = PerturbSpec::marginal(0.0, 1);
        let mask = TopKMask { selected: vec![Unit::Column(0), Unit::Column(4)], k: 2 };
        let batch = perturb_batch(ds.row(0), &mask, &spec, &ds, 500).unwrap();
        let train0: Vec<f64> = ds.train_column(0).to_vec();
        let mut seen = std::collections::HashSet::new();
        for r in batch.outer_iter() {
            assert!(train0.contains(&r[0]));
            seen.insert(r[0].to_bits());
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn batch_of_one_matches_child_seed() {
        let ds = mixed();
        let spec = PerturbSpec::default().with_seed(17);
        let mask = top_k_mask(array![1.0, 0.2, 0.1, 0.3, 0.9].view(), ds.schema(), 3, true).unwrap();
        let b = perturb_batch(ds.row(3), &mask, &spec, &ds, 1).unwrap();
        let one = perturb(ds.row(3), &mask, &spec.with_seed(seed::derive_index(17, 0)), &ds).unwrap();
        assert_eq!(b.row(0), one);
        assert!(perturb_batch(ds.row(3), &mask, &spec, &ds, 0).is_err());
    }

    #[test]
    fn gaussian_moment() {
        let ds = mixed();
        let spec = PerturbSpec::gaussian(0.1, 0.0, 5);
        let mask = TopKMask { selected: vec![Unit::Column(0)], k: 1 };
        let b = perturb_batch(ds.row(0), &mask, &spec, &ds, 10_000).unwrap();
        let diffs: Vec<f64> = b.column(0).iter().map(|v| v - 0.5).collect();
        let mu = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let sd = (diffs.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64).sqrt();
        assert!((sd - 0.1).abs() < 0.005, "{sd}");
        for r in b.outer_iter() {
            assert_eq!(r.slice(ndarray::s![1..]), ds.row(0).slice(ndarray::s![1..]));
        }
    }

    #[test]
    fn common_random_numbers_across_masks() {
        let ds = mixed();
        let p = Perturber::new(&ds);
        let spec = PerturbSpec::gaussian(0.1, 0.5, 0);
        let small = p.apply(ds.row(0), &[Unit::Column(0)], &spec, 3).unwrap();
        let big = p.apply(ds.row(0), &[Unit::Column(4), Unit::Column(0)], &spec, 3).unwrap();
        assert_eq!(small[0], big[0]);
    }

    #[test]
    fn spec_validation() {
        assert!(PerturbSpec::gaussian(-0.1, 0.3, 0).validate().is_err());
        assert!(PerturbSpec::gaussian(0.1, 1.3, 0).validate().is_err());
        assert!(PerturbSpec::default().validate().is_ok());
    }

    proptest::proptest! {
        #[test]
        fn prop_only_selected_units_change(
            attr in proptest::collection::vec(-3.0f64..3.0, 5),
            k in 1usize..=4,
            row in 0usize..4,
            sigma in 0.0f64..2.0,
            flip in 0.0f64..=1.0,
            seed in proptest::prelude::any::<u64>(),
        ) {
            let ds = mixed();
            let mask = top_k_mask(Array1::from(attr).view(), ds.schema(), k, false).unwrap();
            let spec = PerturbSpec::gaussian(sigma, flip, seed);
            let x = ds.row(row);
            let out = perturb(x, &mask, &spec, &ds).unwrap();
            let touched: Vec<usize> = mask
                .selected
                .iter()
                .flat_map(|&u| ds.schema().unit_columns(u))
                .flat_map(|j| match ds.schema().group_of(j) {
                    Some(g) => ds.schema().groups()[g].columns().collect::<Vec<_>>(),
                    None => vec![j],
                })
                .collect();
            for j in 0..x.len() {
                if !touched.contains(&j) {
                    proptest::prop_assert_eq!(out[j].to_bits(), x[j].to_bits());
                }
            }
            proptest::prop_assert_eq!(out[1] + out[2], 1.0);
            proptest::prop_assert_eq!(out, perturb(x, &mask, &spec, &ds).unwrap());
        }
    }
}
