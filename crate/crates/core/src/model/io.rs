use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, Architecture, DenseModel, Layer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// On-disk model: `dims` lists layer widths from input to output, `weights`
/// holds one row-major `(out, in)` array per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelFile<T> {
    pub tag: Architecture,
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> From<&DenseModel<T>> for ModelFile<T> {
    fn from(m: &DenseModel<T>) -> Self {
        let mut dims = vec![m.input_dim()];
        dims.extend(m.layers().iter().map(|l| l.weights.nrows()));
        ModelFile {
            tag: m.architecture(),
            dims,
            activations: m.layers().iter().map(|l| l.activation).collect(),
            weights: m.layers().iter().map(|l| l.weights.iter().copied().collect()).collect(),
            biases: m.layers().iter().map(|l| l.bias.to_vec()).collect(),
        }
    }
}

impl<T: Scalar> ModelFile<T> {
    pub fn into_model(self) -> Result<DenseModel<T>> {
        let n = self.activations.len();
        if self.dims.len() != n + 1 || self.weights.len() != n || self.biases.len() != n {
            return Err(Error::Parse("model file layer counts disagree".into()));
        }
        let mut layers = Vec::with_capacity(n);
        for (i, ((w, b), act)) in self.weights.into_iter().zip(self.biases).zip(self.activations).enumerate() {
            let (inp, out) = (self.dims[i], self.dims[i + 1]);
            let weights = Array2::from_shape_vec((out, inp), w)
                .map_err(|e| Error::Parse(format!("layer {i} weights: {e}")))?;
            if b.len() != out {
                return Err(Error::Parse(format!("layer {i} bias has {} entries, expected {out}", b.len())));
            }
            layers.push(Layer {
                weights,
                bias: Array1::from(b),
                activation: act,
            });
        }
        DenseModel::new(self.tag, layers).map_err(|e| Error::Parse(e.to_string()))
    }
}

pub fn save_model<T: Scalar>(model: &DenseModel<T>, path: &Path) -> Result<()> {
    let mut body = serde_json::to_string(&ModelFile::from(model))?;
    body.push('\n');
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<DenseModel<T>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile<T> = serde_json::from_str(&body).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    file.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Dataset, SyntheticSpec};
    use crate::model::{train, TrainConfig};

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds: Dataset<f64> = generate_synthetic(&SyntheticSpec::new(200, 5, 1)).unwrap().standardize();
        let m = train(&ds, &TrainConfig { epochs: 3, ..Default::default() }, Architecture::Dense3).unwrap();
        let p = dir.path().join("m.json");
        save_model(&m, &p).unwrap();
        let back: DenseModel<f64> = load_model(&p).unwrap();
        assert_eq!(back, m);
        for i in 0..ds.n_rows() {
            assert_eq!(back.predict(ds.row(i)).unwrap(), m.predict(ds.row(i)).unwrap());
        }
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = DenseModel::linear(&[1.0, 2.0], 0.5).unwrap();
        let p = dir.path().join("m.json");
        save_model(&m, &p).unwrap();
        let body = fs::read_to_string(&p).unwrap();
        fs::write(&p, &body[..body.len() / 2]).unwrap();
        assert!(matches!(load_model::<f64>(&p), Err(Error::Parse(_))));
    }

    #[test]
    fn wrong_input_dim_surfaces_at_predict() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_model(&DenseModel::linear(&[1.0, 2.0, 3.0], 0.0).unwrap(), &p).unwrap();
        let m: DenseModel<f64> = load_model(&p).unwrap();
        assert!(matches!(m.predict(ndarray::array![1.0, 2.0].view()), Err(Error::Shape { .. })));
    }

    #[test]
    fn file_layout() {
        let m = DenseModel::linear(&[1.5, -2.0], 0.25).unwrap();
        let json = serde_json::to_string(&ModelFile::from(&m)).unwrap();
        assert_eq!(
            json,
            r#"{"tag":"linear","dims":[2,1],"activations":["identity"],"weights":[[1.5,-2.0]],"biases":[[0.25]]}"#
        );
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn prop_saved_models_predict_identically(seed in proptest::prelude::any::<u64>(), x in proptest::collection::vec(-1e3f64..1e3, 5)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.json");
            let m = DenseModel::<f64>::random_dense3(5, [7, 3], seed).unwrap();
            save_model(&m, &p).unwrap();
            let back: DenseModel<f64> = load_model(&p).unwrap();
            let x = ndarray::Array1::from(x);
            proptest::prop_assert_eq!(back.predict(x.view()).unwrap().to_bits(), m.predict(x.view()).unwrap().to_bits());
            proptest::prop_assert_eq!(back.logit(x.view()).unwrap().to_bits(), m.logit(x.view()).unwrap().to_bits());
        }
    }
}
