pub mod attribution;
pub mod baselines;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod perturb;
pub mod rank;
pub mod scalar;
pub mod seed;
pub mod tda;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DatasetF64 = data::Dataset<f64>;
pub type DatasetF32 = data::Dataset<f32>;
pub type ModelF64 = model::DenseModel<f64>;
pub type ModelF32 = model::DenseModel<f32>;
pub type TableF64 = attribution::AttributionTable<f64>;
pub type TableF32 = attribution::AttributionTable<f32>;
