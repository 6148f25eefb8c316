//! Dense sigmoid-output classifiers: a single-layer logistic model and a
//! three-layer relu network, with exact input gradients by reverse
//! accumulation.

mod io;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

pub use io::{load_model, save_model, ModelFile};
pub use train::{train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    Dense3,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Linear => "linear",
            Architecture::Dense3 => "dense3",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which scalar an attribution or gradient is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Probability,
    Logit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// Shape `(out, in)`.
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseModel<T> {
    layers: Vec<Layer<T>>,
    architecture: Architecture,
}

impl<T: Scalar> DenseModel<T> {
    pub fn new(architecture: Architecture, layers: Vec<Layer<T>>) -> Result<Self> {
        let bad = |msg: String| Err(Error::Spec(msg));
        match architecture {
            Architecture::Linear => {
                if layers.len() != 1 || layers[0].activation != Activation::Identity {
                    return bad("a linear model is exactly one identity layer".into());
                }
            }
            Architecture::Dense3 => {
                if layers.len() != 3
                    || layers[..2].iter().any(|l| l.activation != Activation::Relu)
                    || layers[2].activation != Activation::Identity
                {
                    return bad("a dense3 model is relu, relu, identity".into());
                }
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.nrows() {
                return bad(format!("layer {i}: bias length {} vs {} outputs", l.bias.len(), l.weights.nrows()));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.weights.ncols() != l.weights.nrows() {
                    return bad(format!("layer {} input width does not chain", i + 1));
                }
            }
        }
        if layers.last().map(|l| l.weights.nrows()) != Some(1) {
            return bad("final layer must have a single output".into());
        }
        if layers[0].weights.ncols() == 0 {
            return bad("input dimension must be positive".into());
        }
        Ok(DenseModel { layers, architecture })
    }

    /// Logistic regression with weight vector `w` and bias `b`.
    pub fn linear(w: &[T], b: T) -> Result<Self> {
        let weights = Array2::from_shape_vec((1, w.len()), w.to_vec()).map_err(|e| Error::Spec(e.to_string()))?;
        DenseModel::new(
            Architecture::Linear,
            vec![Layer {
                weights,
                bias: Array1::from_elem(1, b),
                activation: Activation::Identity,
            }],
        )
    }

    /// A relu network with Glorot-uniform weights and small random biases in
    /// every layer, including the output.
    pub fn random_dense3(d: usize, widths: [usize; 2], seed: u64) -> Result<Self> {
        use rand::Rng as _;
        let mut rng = crate::seed::rng(crate::seed::derive(seed, "random-dense3"));
        let mut layer = |out: usize, inp: usize, activation: Activation| {
            let a = (6.0 / (out + inp) as f64).sqrt();
            Layer {
                weights: Array2::from_shape_fn((out, inp), |_| T::of(rng.random_range(-a..a))),
                bias: Array1::from_shape_fn(out, |_| T::of(rng.random_range(-0.1..0.1))),
                activation,
            }
        };
        let layers = vec![
            layer(widths[0], d, Activation::Relu),
            layer(widths[1], widths[0], Activation::Relu),
            layer(1, widths[1], Activation::Identity),
        ];
        DenseModel::new(Architecture::Dense3, layers)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    /// Coefficient vector of a linear model.
    pub fn linear_coefficients(&self) -> Option<ArrayView1<'_, T>> {
        match self.architecture {
            Architecture::Linear => Some(self.layers[0].weights.row(0)),
            Architecture::Dense3 => None,
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }

    /// Pre-sigmoid score.
    pub fn logit(&self, x: ArrayView1<'_, T>) -> Result<T> {
        self.check_dim(x.len())?;
        let mut a = x.to_owned();
        for l in &self.layers {
            let mut z = l.weights.dot(&a) + &l.bias;
            if l.activation == Activation::Relu {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        Ok(a[0])
    }

    pub fn predict(&self, x: ArrayView1<'_, T>) -> Result<T> {
        self.logit(x).map(sigmoid)
    }

    pub fn output(&self, x: ArrayView1<'_, T>, target: Target) -> Result<T> {
        let z = self.logit(x)?;
        Ok(match target {
            Target::Logit => z,
            Target::Probability => sigmoid(z),
        })
    }

    /// Row-wise logits of a batch.
    pub fn logit_batch(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        self.check_dim(x.ncols())?;
        let mut a = x.to_owned();
        for l in &self.layers {
            let mut z = a.dot(&l.weights.t()) + &l.bias;
            if l.activation == Activation::Relu {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        Ok(a.index_axis_move(Axis(1), 0))
    }

    pub fn output_batch(&self, x: ArrayView2<'_, T>, target: Target) -> Result<Array1<T>> {
        let mut z = self.logit_batch(x)?;
        if target == Target::Probability {
            z.mapv_inplace(sigmoid);
        }
        Ok(z)
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        self.output_batch(x, Target::Probability)
    }

    /// Gradient of the chosen target with respect to the input. The relu
    /// derivative at exactly zero is taken as zero.
    pub fn input_gradient(&self, x: ArrayView1<'_, T>, target: Target) -> Result<Array1<T>> {
        let batch = x.insert_axis(Axis(0));
        Ok(self.input_gradient_batch(batch, target)?.index_axis_move(Axis(0), 0))
    }

    pub fn input_gradient_batch(&self, x: ArrayView2<'_, T>, target: Target) -> Result<Array2<T>> {
        self.check_dim(x.ncols())?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for l in &self.layers {
            let z = a.dot(&l.weights.t()) + &l.bias;
            a = match l.activation {
                Activation::Relu => z.mapv(relu),
                Activation::Identity => z.clone(),
            };
            pre.push(z);
        }
        let z_out = pre.last().expect("at least one layer").column(0).to_owned();
        let mut g: Array2<T> = match target {
            Target::Logit => Array2::ones((x.nrows(), 1)),
            Target::Probability => z_out
                .mapv(|z| {
                    let p = sigmoid(z);
                    p * (T::one() - p)
                })
                .insert_axis(Axis(1)),
        };
        for (l, z) in self.layers.iter().zip(&pre).rev() {
            if l.activation == Activation::Relu {
                g.zip_mut_with(z, |gi, &zi| {
                    if zi <= T::zero() {
                        *gi = T::zero();
                    }
                });
            }
            g = g.dot(&l.weights);
        }
        Ok(g)
    }

    /// Smallest |pre-activation| over hidden relu units, used to keep
    /// finite-difference probes away from kinks.
    pub fn min_abs_hidden_preactivation(&self, x: ArrayView1<'_, T>) -> Result<T> {
        self.check_dim(x.len())?;
        let mut a = x.to_owned();
        let mut m = T::infinity();
        for l in &self.layers {
            let z = l.weights.dot(&a) + &l.bias;
            if l.activation == Activation::Relu {
                m = z.iter().fold(m, |acc, v| acc.min(v.abs()));
                a = z.mapv(relu);
            } else {
                a = z;
            }
        }
        Ok(m)
    }
}

#[inline]
fn relu<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}
