use ndarray::Array2;

use crate::attribution::AttributionTable;
use crate::data::{FeatureSchema, Unit};
use crate::error::{Error, Result};
use crate::perturb::rank_units;
use crate::scalar::Scalar;

/// 1-based importance rank of every column in every row (|attribution|
/// descending, lower index first on ties).
pub fn feature_ranks<T: Scalar>(table: &AttributionTable<T>, schema: &FeatureSchema) -> Array2<usize> {
    let mut out = Array2::zeros((table.n_rows(), table.n_features()));
    for (i, row) in table.values.outer_iter().enumerate() {
        for (r, u) in rank_units(row, schema, false).into_iter().enumerate() {
            if let Unit::Column(j) = u {
                out[[i, j]] = r + 1;
            }
        }
    }
    out
}

/// Best (smallest) mean rank reached by any injected random feature over all
/// rows of all tables.
pub fn random_feature_cutoff<T: Scalar>(tables: &[AttributionTable<T>], schema: &FeatureSchema) -> Result<f64> {
    let injected = schema.random_features();
    if injected.is_empty() {
        return Err(Error::Precondition("no injected random features".into()));
    }
    let mut sums = vec![0.0; injected.len()];
    let mut count = 0usize;
    for t in tables {
        if t.n_features() != schema.len() {
            return Err(Error::Shape {
                expected: schema.len(),
                got: t.n_features(),
            });
        }
        let ranks = feature_ranks(t, schema);
        for row in ranks.outer_iter() {
            for (s, &j) in sums.iter_mut().zip(&injected) {
                *s += row[j] as f64;
            }
        }
        count += t.n_rows();
    }
    if count == 0 {
        return Err(Error::Precondition("no attribution rows".into()));
    }
    Ok(sums.iter().map(|s| s / count as f64).fold(f64::INFINITY, f64::min))
}
