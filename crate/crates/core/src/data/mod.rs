//! Dataset ingestion, schema handling, standardization, synthetic
//! generation and random sanity-feature injection.

mod dataset;
mod io;
mod schema;
mod synthetic;

pub use dataset::{split_tags, ColumnScale, Dataset, Split};
pub use io::{load_csv, read_schema, write_csv};
pub use schema::{ColumnKind, ColumnSpec, FeatureSchema, OneHotGroup, SchemaFile, Unit, RANDOM_FEATURE_PREFIX};
pub use synthetic::{default_coefficients, generate_synthetic, SyntheticSpec};
