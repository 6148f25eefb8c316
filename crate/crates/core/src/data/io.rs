use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::dataset::{split_tags, Dataset};
use super::schema::{FeatureSchema, SchemaFile};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn read_schema(path: &Path) -> Result<(FeatureSchema, String)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let sidecar: SchemaFile = serde_json::from_reader(std::io::BufReader::new(file))?;
    Ok((FeatureSchema::new(sidecar.columns)?, sidecar.label))
}

/// Loads a headered CSV, selecting the schema columns by name and assigning a
/// seeded 80/20 train/test split.
pub fn load_csv<T: Scalar>(
    path: &Path,
    schema: FeatureSchema,
    label_column: &str,
    name: &str,
    split_seed: u64,
) -> Result<Dataset<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    })?;
    let header = reader.headers()?.clone();
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let mut col_idx = Vec::with_capacity(schema.len());
    for c in schema.columns() {
        col_idx.push(find(&c.name).ok_or_else(|| Error::Schema(format!("column `{}` missing from header", c.name)))?);
    }
    let label_idx = find(label_column)
        .ok_or_else(|| Error::Schema(format!("label column `{label_column}` missing from header")))?;

    let d = schema.len();
    let mut values: Vec<T> = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        for (&ci, c) in col_idx.iter().zip(schema.columns()) {
            let raw = rec.get(ci).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(Error::Parse(format!("missing value in column `{}` at row {r}", c.name)));
            }
            let v: T = raw
                .parse()
                .map_err(|_| Error::Parse(format!("bad number `{raw}` in column `{}` at row {r}", c.name)))?;
            values.push(v);
        }
        let raw = rec.get(label_idx).unwrap_or("").trim();
        let label = match raw.parse::<f64>() {
            Ok(0.0) => 0u8,
            Ok(1.0) => 1u8,
            _ => return Err(Error::Label(format!("non-binary label `{raw}` at row {r}"))),
        };
        y.push(label);
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, d), values).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(Dataset::new(name, schema, x, y, split_tags(n, split_seed))?.with_label_name(label_column))
}

/// Writes the feature matrix plus label as CSV, and the schema sidecar.
/// Values use shortest round-trip formatting, so reloading is exact.
pub fn write_csv<T: Scalar>(ds: &Dataset<T>, csv_path: &Path, schema_path: &Path) -> Result<()> {
    let file = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<&str> = ds.schema().columns().iter().map(|c| c.name.as_str()).collect();
    header.push(ds.label_name());
    w.write_record(&header)?;
    for (row, label) in ds.x().outer_iter().zip(ds.y()) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;

    let sidecar = SchemaFile {
        columns: ds.schema().columns().to_vec(),
        label: ds.label_name().to_string(),
    };
    let mut f = BufWriter::new(File::create(schema_path).map_err(|e| Error::io(schema_path, e))?);
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    f.write_all(b"\n").map_err(|e| Error::io(schema_path, e))?;
    Ok(())
}
