use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{AttributionTable, Method};
use crate::baselines::BaselineKind;
use crate::error::{Error, Result};
use crate::model::Target;
use crate::scalar::Scalar;

/// JSON sidecar stored next to each attribution CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableMetadata {
    pub method: Method,
    pub baseline_kind: Option<BaselineKind>,
    pub k: usize,
    pub repeat: usize,
    pub seed: u64,
    pub dataset_hash: String,
    pub target: Target,
}

impl<T: Scalar> From<&AttributionTable<T>> for TableMetadata {
    fn from(t: &AttributionTable<T>) -> Self {
        TableMetadata {
            method: t.method.clone(),
            baseline_kind: t.baseline_kind,
            k: t.k,
            repeat: t.repeat,
            seed: t.seed,
            dataset_hash: t.dataset_hash.clone(),
            target: t.target,
        }
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes the values as header-less CSV plus the metadata sidecar.
pub fn export_table<T: Scalar>(table: &AttributionTable<T>, csv_path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(csv_path)?;
    for row in table.values.outer_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;
    let meta = serde_json::to_string_pretty(&TableMetadata::from(table))?;
    let side = sidecar_path(csv_path);
    fs::write(&side, meta + "\n").map_err(|e| Error::io(&side, e))
}

pub fn read_metadata(csv_path: &Path) -> Result<TableMetadata> {
    let side = sidecar_path(csv_path);
    let text = fs::read_to_string(&side).map_err(|e| Error::Import(format!("missing metadata {}: {e}", side.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Import(format!("bad metadata {}: {e}", side.display())))
}

/// Loads a table and checks it is `rows × d`.
pub fn import_table<T: Scalar>(csv_path: &Path, rows: usize, d: usize) -> Result<AttributionTable<T>> {
    let meta = read_metadata(csv_path)?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(csv_path)
        .map_err(|e| Error::Import(format!("{}: {e}", csv_path.display())))?;
    let mut values = Vec::with_capacity(rows * d);
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Import(e.to_string()))?;
        if rec.len() != d {
            return Err(Error::Import(format!("row {n} has {} columns, expected {d}", rec.len())));
        }
        for field in rec.iter() {
            let v: T = field
                .trim()
                .parse()
                .map_err(|_| Error::Import(format!("row {n}: cannot parse {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::Import(format!("row {n}: non-finite value")));
            }
            values.push(v);
        }
        n += 1;
    }
    if n != rows {
        return Err(Error::Import(format!("{} has {n} rows, expected {rows}", csv_path.display())));
    }
    let values = Array2::from_shape_vec((rows, d), values).map_err(|e| Error::Import(e.to_string()))?;
    Ok(AttributionTable {
        values,
        method: meta.method,
        baseline_kind: meta.baseline_kind,
        k: meta.k,
        repeat: meta.repeat,
        seed: meta.seed,
        dataset_hash: meta.dataset_hash,
        target: meta.target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn table() -> AttributionTable<f64> {
        AttributionTable {
            values: array![[0.1, -2.5e-17], [1.0 / 3.0, 7.0]],
            method: Method::Imported("deep_shap".into()),
            baseline_kind: Some(BaselineKind::Training),
            k: 5,
            repeat: 2,
            seed: u64::MAX,
            dataset_hash: "abcd".into(),
            target: Target::Probability,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        export_table(&table(), &p).unwrap();
        assert_eq!(import_table::<f64>(&p, 2, 2).unwrap(), table());
    }

    #[test]
    fn dimension_and_metadata_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        export_table(&table(), &p).unwrap();
        assert!(matches!(import_table::<f64>(&p, 3, 2), Err(Error::Import(_))));
        assert!(matches!(import_table::<f64>(&p, 2, 3), Err(Error::Import(_))));
        fs::write(sidecar_path(&p), r#"{"method": "random"}"#).unwrap();
        assert!(matches!(import_table::<f64>(&p, 2, 2), Err(Error::Import(_))));
        fs::remove_file(sidecar_path(&p)).unwrap();
        assert!(matches!(import_table::<f64>(&p, 2, 2), Err(Error::Import(_))));
    }
}
