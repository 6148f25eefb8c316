//! Local attribution tables: integrated gradients, KernelSHAP, a uniform
//! random control, linear ground truth, and imported tables.

mod grid;
mod ig;
mod io;
mod kernel_shap;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::BaselineKind;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Architecture, DenseModel, Target};
use crate::scalar::Scalar;
use crate::seed;

pub use grid::{generate_grid, GridCell, GridSpec};
pub use ig::{integrated_gradients, IgConfig};
pub use io::{export_table, import_table, read_metadata, TableMetadata};
pub use kernel_shap::{kernel_shap, KernelShapConfig, KernelShapPlan};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    IntegratedGradients,
    KernelShap,
    Random,
    GroundTruth,
    Imported(String),
}

impl Method {
    pub fn is_control(&self) -> bool {
        matches!(self, Method::Random | Method::GroundTruth)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::IntegratedGradients => f.write_str("integrated_gradients"),
            Method::KernelShap => f.write_str("kernel_shap"),
            Method::Random => f.write_str("random"),
            Method::GroundTruth => f.write_str("ground_truth"),
            Method::Imported(label) => write!(f, "imported:{label}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "integrated_gradients" => Method::IntegratedGradients,
            "kernel_shap" => Method::KernelShap,
            "random" => Method::Random,
            "ground_truth" => Method::GroundTruth,
            other => match other.strip_prefix("imported:") {
                Some(label) if !label.is_empty() && !label.contains(['/', '\\']) => Method::Imported(label.to_string()),
                _ => return Err(Error::Parse(format!("unknown attribution method {other:?}"))),
            },
        })
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Attribution target used unless configured otherwise: logit for linear
/// models, probability otherwise.
pub fn default_target(arch: Architecture) -> Target {
    match arch {
        Architecture::Linear => Target::Logit,
        Architecture::Dense3 => Target::Probability,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionTable<T> {
    /// Row `i` explains the `i`-th explained sample.
    pub values: Array2<T>,
    pub method: Method,
    pub baseline_kind: Option<BaselineKind>,
    pub k: usize,
    pub repeat: usize,
    pub seed: u64,
    pub dataset_hash: String,
    pub target: Target,
}

impl<T: Scalar> AttributionTable<T> {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Candidate name: `method/baseline`, or the bare method for controls.
    pub fn candidate(&self) -> String {
        match self.baseline_kind {
            Some(b) => format!("{}/{}", self.method, b),
            None => self.method.to_string(),
        }
    }

    /// Checks the table against the dataset it explains.
    pub fn check(&self, ds: &Dataset<T>, rows: usize) -> Result<()> {
        if self.values.nrows() != rows {
            return Err(Error::Shape {
                expected: rows,
                got: self.values.nrows(),
            });
        }
        if self.values.ncols() != ds.n_features() {
            return Err(Error::Shape {
                expected: ds.n_features(),
                got: self.values.ncols(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("{} contains non-finite values", self.candidate())));
        }
        if self.method == Method::Random && self.values.iter().any(|&v| v < T::zero() || v >= T::one()) {
            return Err(Error::Integrity("random table values outside [0, 1)".into()));
        }
        Ok(())
    }

    /// Sorted column indices into rows explained by this table.
    pub fn reorder_columns(&self, order: &[usize]) -> Array2<T> {
        self.values.select(Axis(1), order)
    }
}

/// Rows explained by every table: the test split in dataset order.
pub fn explained_rows<T: Scalar>(ds: &Dataset<T>) -> Vec<usize> {
    ds.test_indices()
}

/// I.i.d. uniform values in `[0, 1)`.
pub fn random_explanations<T: Scalar>(n: usize, d: usize, seed: u64) -> AttributionTable<T> {
    let mut rng = seed::rng(seed);
    let values = Array2::from_shape_simple_fn((n, d), || T::of(rng.random::<f64>()).min(T::below_one()));
    AttributionTable {
        values,
        method: Method::Random,
        baseline_kind: None,
        k: 0,
        repeat: 0,
        seed,
        dataset_hash: String::new(),
        target: Target::Probability,
    }
}

/// `values[i][j] = x_ij * c_j` over the given rows, for linear models only.
pub fn ground_truth_linear<T: Scalar>(model: &DenseModel<T>, ds: &Dataset<T>, rows: &[usize]) -> Result<AttributionTable<T>> {
    let c = model
        .linear_coefficients()
        .ok_or_else(|| Error::Precondition(format!("ground truth needs a linear model, got {}", model.architecture())))?;
    if c.len() != ds.n_features() {
        return Err(Error::Shape {
            expected: ds.n_features(),
            got: c.len(),
        });
    }
    let values = ds.rows(rows) * c;
    Ok(AttributionTable {
        values,
        method: Method::GroundTruth,
        baseline_kind: None,
        k: 0,
        repeat: 0,
        seed: 0,
        dataset_hash: ds.hash(),
        target: Target::Logit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSchema, Split};
    use ndarray::array;

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::IntegratedGradients,
            Method::KernelShap,
            Method::Random,
            Method::GroundTruth,
            Method::Imported("deep_shap".into()),
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
            let js = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<Method>(&js).unwrap(), m);
        }
        assert!("imported:".parse::<Method>().is_err());
        assert!("lime".parse::<Method>().is_err());
    }

    #[test]
    fn random_table_range_and_determinism() {
        let t: AttributionTable<f64> = random_explanations(200, 60, 4);
        assert!(t.values.iter().all(|&v| (0.0..1.0).contains(&v)));
        assert_eq!(t.values, random_explanations::<f64>(200, 60, 4).values);
        assert_ne!(t.values, random_explanations::<f64>(200, 60, 5).values);
        let mean = t.values.mean().unwrap();
        assert!((mean - 0.5).abs() < 0.02);
        let t32: AttributionTable<f32> = random_explanations(100, 100, 1);
        assert!(t32.values.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn ground_truth_examples() {
        let ds = Dataset::new(
            "g",
            FeatureSchema::numeric(["a", "b"]).unwrap(),
            array![[2.0, 3.0], [0.0, 0.0]],
            vec![0, 1],
            vec![Split::Test, Split::Test],
        )
        .unwrap();
        let model = DenseModel::linear(&[0.5, -1.0], 0.2).unwrap();
        let t = ground_truth_linear(&model, &ds, &[0, 1]).unwrap();
        assert_eq!(t.values, array![[1.0, -3.0], [0.0, 0.0]]);
        let dense = crate::model::DenseModel::new(
            Architecture::Dense3,
            vec![
                crate::model::Layer {
                    weights: Array2::ones((2, 2)),
                    bias: ndarray::Array1::zeros(2),
                    activation: crate::model::Activation::Relu,
                },
                crate::model::Layer {
                    weights: Array2::ones((2, 2)),
                    bias: ndarray::Array1::zeros(2),
                    activation: crate::model::Activation::Relu,
                },
                crate::model::Layer {
                    weights: Array2::ones((1, 2)),
                    bias: ndarray::Array1::zeros(1),
                    activation: crate::model::Activation::Identity,
                },
            ],
        )
        .unwrap();
        assert!(matches!(ground_truth_linear(&dense, &ds, &[0]), Err(Error::Precondition(_))));
    }
}
