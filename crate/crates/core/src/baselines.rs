//! Reference sets that attribution methods contrast an explained sample
//! against.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::model::DenseModel;
use crate::scalar::Scalar;
use crate::seed;

/// Number of reference rows used by the sampled and local baselines.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    ConstantMedian,
    Training,
    OppositeClass,
    NearestNeighbors,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::ConstantMedian,
        BaselineKind::Training,
        BaselineKind::OppositeClass,
        BaselineKind::NearestNeighbors,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::ConstantMedian => "constant_median",
            BaselineKind::Training => "training",
            BaselineKind::OppositeClass => "opposite_class",
            BaselineKind::NearestNeighbors => "nearest_neighbors",
        }
    }

    /// Whether the reference rows depend on the explained sample.
    pub fn is_local(self) -> bool {
        matches!(self, BaselineKind::OppositeClass | BaselineKind::NearestNeighbors)
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How "class" is determined for the opposite-class baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSource {
    #[default]
    Predicted,
    Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSet<T> {
    pub kind: BaselineKind,
    /// `k × d` reference rows.
    pub references: Array2<T>,
    /// Source train-row indices; empty for the synthetic median row.
    pub rows: Vec<usize>,
    pub anchor: Option<Array1<T>>,
    pub k: usize,
    pub seed: u64,
    /// Fewer than `k` eligible rows existed.
    pub short: bool,
}

impl<T: Scalar> BaselineSet<T> {
    /// A set made of explicit reference rows (used by tests and imports).
    pub fn from_rows(kind: BaselineKind, references: Array2<T>) -> Self {
        let k = references.nrows();
        BaselineSet {
            kind,
            references,
            rows: Vec::new(),
            anchor: None,
            k,
            seed: 0,
            short: false,
        }
    }
}

/// Column-wise train-split median. Categorical columns and one-hot groups take
/// their most frequent category (lowest index on ties); even-sized samples use
/// the midpoint.
pub fn constant_median<T: Scalar>(ds: &Dataset<T>) -> Result<BaselineSet<T>> {
    let train = ds.train_indices();
    if train.is_empty() {
        return Err(Error::Precondition("train split is empty".into()));
    }
    let schema = ds.schema();
    let d = ds.n_features();
    let mut row = Array1::<T>::zeros(d);
    for j in 0..d {
        match schema.kind(j) {
            ColumnKind::Numeric => {
                let mut v: Vec<T> = train.iter().map(|&i| ds.x()[[i, j]]).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
                let m = v.len();
                row[j] = if m % 2 == 1 {
                    v[m / 2]
                } else {
                    (v[m / 2 - 1] + v[m / 2]) / T::of(2.0)
                };
            }
            ColumnKind::Categorical => {
                let card = schema.columns()[j].cardinality.unwrap_or(1);
                let mut counts = vec![0usize; card];
                for &i in &train {
                    counts[ds.x()[[i, j]].as_f64() as usize] += 1;
                }
                row[j] = T::of_usize(argmax_first(&counts));
            }
            ColumnKind::OneHotMember => {}
        }
    }
    for g in schema.groups() {
        let counts: Vec<usize> = g
            .columns()
            .map(|j| train.iter().filter(|&&i| ds.x()[[i, j]] == T::one()).count())
            .collect();
        row[g.start + argmax_first(&counts)] = T::one();
    }
    Ok(BaselineSet {
        kind: BaselineKind::ConstantMedian,
        references: row.insert_axis(Axis(0)),
        rows: Vec::new(),
        anchor: None,
        k: 1,
        seed: 0,
        short: false,
    })
}

fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// `k` train rows drawn uniformly without replacement.
pub fn training_sample<T: Scalar>(ds: &Dataset<T>, k: usize, seed: u64) -> Result<BaselineSet<T>> {
    ReferencePool::without_model(ds).training_sample(k, seed)
}

/// The `k` train rows nearest to the anchor whose class differs from the
/// anchor's predicted class.
pub fn opposite_class<T: Scalar>(
    ds: &Dataset<T>,
    model: &DenseModel<T>,
    anchor: ArrayView1<'_, T>,
    k: usize,
    seed: u64,
) -> Result<BaselineSet<T>> {
    ReferencePool::new(ds, model, ClassSource::Predicted)?.opposite_class(model, anchor, k, seed)
}

/// The `k` train rows nearest to the anchor, excluding exact copies of it.
pub fn nearest_neighbors<T: Scalar>(
    ds: &Dataset<T>,
    anchor: ArrayView1<'_, T>,
    k: usize,
    seed: u64,
) -> Result<BaselineSet<T>> {
    ReferencePool::without_model(ds).nearest_neighbors(anchor, k, seed)
}

/// Train rows plus cached class assignments, shared across anchors.
#[derive(Debug, Clone)]
pub struct ReferencePool<T> {
    rows: Vec<usize>,
    x: Array2<T>,
    classes: Option<Vec<u8>>,
    source: ClassSource,
}

impl<T: Scalar> ReferencePool<T> {
    pub fn new(ds: &Dataset<T>, model: &DenseModel<T>, source: ClassSource) -> Result<Self> {
        let rows = ds.train_indices();
        let x = ds.rows(&rows);
        let classes = match source {
            ClassSource::Predicted => model
                .predict_batch(x.view())?
                .iter()
                .map(|&p| u8::from(p >= T::of(0.5)))
                .collect(),
            ClassSource::Label => ds.labels(&rows),
        };
        Ok(ReferencePool {
            rows,
            x,
            classes: Some(classes),
            source,
        })
    }

    pub fn without_model(ds: &Dataset<T>) -> Self {
        let rows = ds.train_indices();
        let x = ds.rows(&rows);
        ReferencePool {
            rows,
            x,
            classes: None,
            source: ClassSource::Predicted,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn build(&self, kind: BaselineKind, picked: &[usize], anchor: Option<ArrayView1<'_, T>>, k: usize, seed: u64) -> BaselineSet<T> {
        BaselineSet {
            kind,
            references: self.x.select(Axis(0), picked),
            rows: picked.iter().map(|&p| self.rows[p]).collect(),
            anchor: anchor.map(|a| a.to_owned()),
            k,
            seed,
            short: picked.len() < k,
        }
    }

    pub fn training_sample(&self, k: usize, seed: u64) -> Result<BaselineSet<T>> {
        if k == 0 || k > self.len() {
            return Err(Error::Precondition(format!("cannot draw {k} references from {} train rows", self.len())));
        }
        let mut rng = seed::rng(seed::derive(seed, "training-baseline"));
        let picked = rand::seq::index::sample(&mut rng, self.len(), k).into_vec();
        Ok(self.build(BaselineKind::Training, &picked, None, k, seed))
    }

    /// Pool positions sorted by (squared distance to anchor, row index).
    fn by_distance(&self, anchor: ArrayView1<'_, T>, keep: impl Fn(usize) -> bool) -> Vec<(T, usize)> {
        let mut out: Vec<(T, usize)> = self
            .x
            .outer_iter()
            .enumerate()
            .filter(|(p, _)| keep(*p))
            .map(|(p, r)| {
                let d2 = r.iter().zip(anchor.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
                (d2, p)
            })
            .collect();
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        out
    }

    pub fn opposite_class(&self, model: &DenseModel<T>, anchor: ArrayView1<'_, T>, k: usize, seed: u64) -> Result<BaselineSet<T>> {
        if anchor.len() != self.x.ncols() {
            return Err(Error::Shape {
                expected: self.x.ncols(),
                got: anchor.len(),
            });
        }
        let classes = self
            .classes
            .as_ref()
            .ok_or_else(|| Error::Precondition("reference pool built without class information".into()))?;
        // the anchor is always classified by the model
        let anchor_class = u8::from(model.predict(anchor)? >= T::of(0.5));
        let ranked = self.by_distance(anchor, |p| classes[p] != anchor_class);
        if ranked.is_empty() {
            return Err(Error::BaselineUnavailable(format!(
                "no train rows of the opposite class ({:?} class {})",
                self.source,
                1 - anchor_class
            )));
        }
        let picked: Vec<usize> = ranked.iter().take(k).map(|&(_, p)| p).collect();
        Ok(self.build(BaselineKind::OppositeClass, &picked, Some(anchor), k, seed))
    }

    pub fn nearest_neighbors(&self, anchor: ArrayView1<'_, T>, k: usize, seed: u64) -> Result<BaselineSet<T>> {
        if anchor.len() != self.x.ncols() {
            return Err(Error::Shape {
                expected: self.x.ncols(),
                got: anchor.len(),
            });
        }
        let ranked = self.by_distance(anchor, |p| self.x.row(p) != anchor);
        if k == 0 || k > ranked.len() {
            return Err(Error::Precondition(format!("cannot pick {k} neighbours from {} eligible rows", ranked.len())));
        }
        let picked: Vec<usize> = ranked.iter().take(k).map(|&(_, p)| p).collect();
        Ok(self.build(BaselineKind::NearestNeighbors, &picked, Some(anchor), k, seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSpec, FeatureSchema, Split};
    use ndarray::array;

    fn train_only(x: Array2<f64>, schema: FeatureSchema) -> Dataset<f64> {
        let n = x.nrows();
        Dataset::new("t", schema, x, vec![0; n], vec![Split::Train; n]).unwrap()
    }

    #[test]
    fn median_examples() {
        let ds = train_only(array![[1.0, 5.0], [3.0, 7.0], [100.0, 9.0]], FeatureSchema::numeric(["a", "b"]).unwrap());
        assert_eq!(constant_median(&ds).unwrap().references, array![[3.0, 7.0]]);
        let ds = train_only(array![[1.0], [2.0]], FeatureSchema::numeric(["a"]).unwrap());
        assert_eq!(constant_median(&ds).unwrap().references, array![[1.5]]);
    }

    #[test]
    fn median_takes_mode_of_categories() {
        let schema = FeatureSchema::new(vec![
            ColumnSpec::one_hot("g=A", "g", 2),
            ColumnSpec::one_hot("g=B", "g", 2),
            ColumnSpec::categorical("c", 3),
        ])
        .unwrap();
        let ds = train_only(array![[1.0, 0.0, 2.0], [0.0, 1.0, 2.0], [1.0, 0.0, 0.0]], schema);
        let b = constant_median(&ds).unwrap();
        assert_eq!(b.references, array![[1.0, 0.0, 2.0]]);
        assert_eq!(b.k, 1);
    }

    fn ramp(n: usize) -> Dataset<f64> {
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        train_only(x, FeatureSchema::numeric(["a", "b"]).unwrap())
    }

    #[test]
    fn training_sample_examples() {
        let ds = ramp(100);
        let b = training_sample(&ds, 5, 3).unwrap();
        let mut rows = b.rows.clone();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 5);
        assert_eq!(b, training_sample(&ds, 5, 3).unwrap());
        let all = training_sample(&ds, 100, 3).unwrap();
        let mut rows = all.rows;
        rows.sort();
        assert_eq!(rows, (0..100).collect::<Vec<_>>());
        assert!(training_sample(&ds, 101, 3).is_err());
        for (r, &i) in b.references.outer_iter().zip(&b.rows) {
            assert_eq!(r, ds.row(i));
        }
    }

    #[test]
    fn nearest_neighbor_examples() {
        let ds = train_only(array![[0.0], [1.0], [10.0]], FeatureSchema::numeric(["a"]).unwrap());
        let b = nearest_neighbors(&ds, array![0.4].view(), 2, 0).unwrap();
        assert_eq!(b.rows, vec![0, 1]);
        let b = nearest_neighbors(&ds, array![0.0].view(), 1, 0).unwrap();
        assert_eq!(b.rows, vec![1]);
        // tie: 0.5 is equidistant from 0 and 1
        let b = nearest_neighbors(&ds, array![0.5].view(), 1, 0).unwrap();
        assert_eq!(b.rows, vec![0]);
        assert!(nearest_neighbors(&ds, array![0.0].view(), 3, 0).is_err());
    }

    #[test]
    fn opposite_class_matches_brute_force() {
        // model predicts class 1 iff a > 4.5
        let model = DenseModel::linear(&[1.0], -4.5).unwrap();
        let x = Array2::from_shape_fn((14, 1), |(i, _)| i as f64);
        let ds = train_only(x, FeatureSchema::numeric(["a"]).unwrap());
        let anchor = array![12.0];
        let b = opposite_class(&ds, &model, anchor.view(), 5, 0).unwrap();
        let mut brute: Vec<(f64, usize)> = (0..14)
            .filter(|&i| (i as f64) < 4.5)
            .map(|i| (((i as f64) - 12.0).powi(2), i))
            .collect();
        brute.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(b.rows, brute.iter().take(5).map(|p| p.1).collect::<Vec<_>>());
        assert!(!b.short);
        for r in b.references.outer_iter() {
            assert!(model.predict(r).unwrap() < 0.5);
        }
    }

    #[test]
    fn opposite_class_clamps_and_errors() {
        let model = DenseModel::linear(&[1.0], -2.5).unwrap();
        let ds = ramp(1);
        let _ = ds;
        let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let ds = train_only(x, FeatureSchema::numeric(["a"]).unwrap());
        let b = opposite_class(&ds, &model, array![9.0].view(), 5, 0).unwrap();
        assert_eq!(b.rows, vec![2, 1, 0]);
        assert!(b.short);
        let model = DenseModel::linear(&[0.0], 1.0).unwrap();
        let err = opposite_class(&ds, &model, array![9.0].view(), 5, 0);
        assert!(matches!(err, Err(Error::BaselineUnavailable(_))));
    }

    fn random_train(n: usize, seed: u64) -> Dataset<f64> {
        use rand::Rng as _;
        let mut rng = crate::seed::rng(seed);
        let x = Array2::from_shape_simple_fn((n, 3), || rng.random_range(-2.0..2.0));
        train_only(x, FeatureSchema::numeric(["a", "b", "c"]).unwrap())
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn prop_references_are_verbatim_train_rows(seed in 0u64..10_000, k in 1usize..=8, anchor in proptest::collection::vec(-2.0f64..2.0, 3)) {
            let ds = random_train(30, seed);
            let model = DenseModel::linear(&[1.0, -0.5, 0.25], 0.1).unwrap();
            let anchor = Array1::from(anchor);
            let mut sets = vec![training_sample(&ds, k, seed).unwrap(), nearest_neighbors(&ds, anchor.view(), k, seed).unwrap()];
            if let Ok(b) = opposite_class(&ds, &model, anchor.view(), k, seed) {
                let own = model.predict(anchor.view()).unwrap() >= 0.5;
                for r in b.references.outer_iter() {
                    proptest::prop_assert_ne!(model.predict(r).unwrap() >= 0.5, own);
                }
                sets.push(b);
            }
            for b in &sets {
                proptest::prop_assert_eq!(b.references.nrows(), b.rows.len());
                for (r, &i) in b.references.outer_iter().zip(&b.rows) {
                    proptest::prop_assert_eq!(r, ds.row(i));
                }
            }
        }
    }
}
