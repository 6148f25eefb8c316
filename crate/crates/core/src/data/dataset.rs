use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::schema::{ColumnKind, FeatureSchema, RANDOM_FEATURE_PREFIX};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Train-split location and population scale of a standardized column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScale<T> {
    pub mean: T,
    pub std: T,
}

/// Deterministic 80/20 split. At least one row lands on each side when n ≥ 2.
pub fn split_tags(n: usize, seed: u64) -> Vec<Split> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed::derive(seed, "split")));
    let n_test = if n < 2 {
        0
    } else {
        ((n as f64) * 0.2).round().clamp(1.0, (n - 1) as f64) as usize
    };
    let mut tags = vec![Split::Train; n];
    for &i in &idx[..n_test] {
        tags[i] = Split::Test;
    }
    tags
}

/// Immutable tabular dataset with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    name: String,
    label: String,
    schema: FeatureSchema,
    x: Array2<T>,
    y: Vec<u8>,
    split: Vec<Split>,
    scaling: Vec<Option<ColumnScale<T>>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        name: impl Into<String>,
        schema: FeatureSchema,
        x: Array2<T>,
        y: Vec<u8>,
        split: Vec<Split>,
    ) -> Result<Self> {
        let (n, d) = x.dim();
        if n == 0 || d == 0 {
            return Err(Error::Integrity(format!("empty dataset ({n}x{d})")));
        }
        if schema.len() != d {
            return Err(Error::Shape {
                expected: schema.len(),
                got: d,
            });
        }
        if y.len() != n || split.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: if y.len() != n { y.len() } else { split.len() },
            });
        }
        if let Some(bad) = y.iter().find(|&&v| v > 1) {
            return Err(Error::Label(format!("label value {bad} is not binary")));
        }
        if let Some(((i, j), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Integrity(format!("non-finite value at row {i}, column {j}")));
        }
        for g in schema.groups() {
            for (i, row) in x.outer_iter().enumerate() {
                let cols = g.columns();
                if row.slice(ndarray::s![cols.clone()]).iter().any(|&v| v != T::zero() && v != T::one()) {
                    return Err(Error::Integrity(format!(
                        "one-hot group `{}` has a non-indicator value in row {i}",
                        g.name
                    )));
                }
                let total: T = row.slice(ndarray::s![cols]).sum();
                if total != T::one() {
                    return Err(Error::Integrity(format!(
                        "one-hot group `{}` sums to {total} in row {i}",
                        g.name
                    )));
                }
            }
        }
        for (j, c) in schema.columns().iter().enumerate() {
            if c.kind == ColumnKind::Categorical {
                let card = c.cardinality.unwrap_or(1);
                for (i, &v) in x.column(j).iter().enumerate() {
                    if v.fract() != T::zero() || v < T::zero() || v.as_f64() >= card as f64 {
                        return Err(Error::Integrity(format!(
                            "categorical `{}` has value {v} outside 0..{card} in row {i}",
                            c.name
                        )));
                    }
                }
            }
        }
        Ok(Dataset {
            name: name.into(),
            label: "label".into(),
            schema,
            x,
            y,
            split,
            scaling: vec![None; d],
        })
    }

    pub fn with_label_name(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn label_name(&self) -> &str {
        &self.label
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn x(&self) -> &Array2<T> {
        &self.x
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn scaling(&self) -> &[Option<ColumnScale<T>>] {
        &self.scaling
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.x.row(i)
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.split[i] == which).collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices(Split::Train)
    }

    /// Rows that explanations are generated for, in dataset order.
    pub fn test_indices(&self) -> Vec<usize> {
        self.indices(Split::Test)
    }

    pub fn rows(&self, idx: &[usize]) -> Array2<T> {
        self.x.select(Axis(0), idx)
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<u8> {
        idx.iter().map(|&i| self.y[i]).collect()
    }

    /// Stable content hash over names, values, labels and split tags.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        for c in self.schema.columns() {
            h.update(c.name.as_bytes());
            h.update([0u8]);
        }
        for v in self.x.iter() {
            h.update(v.as_f64().to_le_bytes());
        }
        h.update(&self.y);
        h.update(self.split.iter().map(|s| *s as u8).collect::<Vec<_>>());
        hex::encode(&h.finalize()[..8])
    }

    /// Z-scores numeric columns with train-split mean and population std.
    /// Non-numeric columns are left untouched; zero-variance columns are only
    /// centered.
    pub fn standardize(&self) -> Dataset<T> {
        let train = self.train_indices();
        let rows = if train.is_empty() { (0..self.n_rows()).collect() } else { train };
        let mut x = self.x.clone();
        let mut scaling = self.scaling.clone();
        for j in 0..self.n_features() {
            if self.schema.kind(j) != ColumnKind::Numeric {
                continue;
            }
            let scale = column_scale(self.x.column(j), &rows);
            x.column_mut(j).mapv_inplace(|v| (v - scale.mean) / scale.std);
            scaling[j] = Some(scale);
        }
        Dataset {
            x,
            scaling,
            ..self.clone()
        }
    }

    /// Appends `count` standard-normal numeric columns named `__rnd_<i>`.
    /// The new columns are standardized on the train split like the others.
    pub fn inject_random_features(&self, count: usize, seed: u64) -> Result<Dataset<T>> {
        if count == 0 {
            return Err(Error::Precondition("random feature count must be at least 1".into()));
        }
        if let Some(c) = self
            .schema
            .columns()
            .iter()
            .find(|c| c.name.starts_with(RANDOM_FEATURE_PREFIX))
        {
            return Err(Error::Schema(format!(
                "column `{}` collides with the reserved prefix `{RANDOM_FEATURE_PREFIX}`",
                c.name
            )));
        }
        let names: Vec<String> = (0..count).map(|i| format!("{RANDOM_FEATURE_PREFIX}{i}")).collect();
        let schema = self.schema.with_numeric_columns(&names)?;
        let (n, d) = self.x.dim();
        let mut rng = seed::rng(seed::derive(seed, "random-features"));
        let mut extra = Array2::<T>::zeros((n, count));
        for v in extra.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = T::of(z);
        }
        let train = self.train_indices();
        let mut scaling = self.scaling.clone();
        for j in 0..count {
            let scale = column_scale(extra.column(j), &train);
            extra.column_mut(j).mapv_inplace(|v| (v - scale.mean) / scale.std);
            scaling.push(Some(scale));
        }
        let x = ndarray::concatenate(Axis(1), &[self.x.view(), extra.view()])
            .expect("row counts agree");
        debug_assert_eq!(x.ncols(), d + count);
        Ok(Dataset {
            schema,
            x,
            scaling,
            ..self.clone()
        })
    }

    /// Values of column `j` over the train split.
    pub fn train_column(&self, j: usize) -> Array1<T> {
        self.train_indices().iter().map(|&i| self.x[[i, j]]).collect()
    }
}

fn column_scale<T: Scalar>(col: ArrayView1<'_, T>, rows: &[usize]) -> ColumnScale<T> {
    if rows.is_empty() {
        return ColumnScale {
            mean: T::zero(),
            std: T::one(),
        };
    }
    let n = T::of_usize(rows.len());
    let mean = rows.iter().map(|&i| col[i]).sum::<T>() / n;
    let var = rows.iter().map(|&i| (col[i] - mean).powi(2)).sum::<T>() / n;
    let std = var.sqrt();
    ColumnScale {
        mean,
        std: if std > T::zero() { std } else { T::one() },
    }
}
