use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Activation, Architecture, DenseModel, Layer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};
use crate::seed;

/// Plain mini-batch gradient descent on binary cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_widths: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.1,
            hidden_widths: vec![64, 32],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("batch_size and learning_rate must be positive".into()));
        }
        if self.hidden_widths.len() != 2 || self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden_widths must hold two positive widths".into()));
        }
        Ok(())
    }
}

fn init_model<T: Scalar>(d: usize, cfg: &TrainConfig, arch: Architecture) -> Result<DenseModel<T>> {
    let mut rng = seed::rng(seed::derive(cfg.seed, "init"));
    let mut glorot = |out: usize, inp: usize| {
        let a = (6.0 / (out + inp) as f64).sqrt();
        Array2::from_shape_fn((out, inp), |_| T::of(rng.random_range(-a..a)))
    };
    // The output layer starts at zero so an untrained model predicts 0.5.
    let layers = match arch {
        Architecture::Linear => vec![Layer {
            weights: Array2::zeros((1, d)),
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        }],
        Architecture::Dense3 => {
            let (h1, h2) = (cfg.hidden_widths[0], cfg.hidden_widths[1]);
            vec![
                Layer {
                    weights: glorot(h1, d),
                    bias: Array1::zeros(h1),
                    activation: Activation::Relu,
                },
                Layer {
                    weights: glorot(h2, h1),
                    bias: Array1::zeros(h2),
                    activation: Activation::Relu,
                },
                Layer {
                    weights: Array2::zeros((1, h2)),
                    bias: Array1::zeros(1),
                    activation: Activation::Identity,
                },
            ]
        }
    };
    DenseModel::new(arch, layers)
}

/// Trains on the train split. Deterministic given `cfg.seed`.
pub fn train<T: Scalar>(ds: &Dataset<T>, cfg: &TrainConfig, arch: Architecture) -> Result<DenseModel<T>> {
    cfg.validate()?;
    let mut model = init_model(ds.n_features(), cfg, arch)?;
    let mut idx = ds.train_indices();
    if idx.is_empty() {
        return Err(Error::Precondition("train split is empty".into()));
    }
    let lr = T::of(cfg.learning_rate);
    let mut rng = seed::rng(seed::derive(cfg.seed, "shuffle"));
    for epoch in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        let mut epoch_loss = T::zero();
        for batch in idx.chunks(cfg.batch_size) {
            let xb = ds.rows(batch);
            let yb: Array1<T> = batch.iter().map(|&i| T::of_usize(ds.y()[i] as usize)).collect();
            epoch_loss += step(&mut model, &xb, &yb, lr);
        }
        if !epoch_loss.is_finite() {
            return Err(Error::Training(format!("loss is {epoch_loss} at epoch {epoch}")));
        }
    }
    if model.layers.iter().any(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite())) {
        return Err(Error::Training("non-finite weights".into()));
    }
    Ok(model)
}

/// One gradient step on a batch; returns the summed batch log-loss.
fn step<T: Scalar>(model: &mut DenseModel<T>, xb: &Array2<T>, yb: &Array1<T>, lr: T) -> T {
    let b = T::of_usize(xb.nrows());
    let mut acts = vec![xb.clone()];
    let mut pre = Vec::with_capacity(model.layers.len());
    for l in &model.layers {
        let z = acts.last().unwrap().dot(&l.weights.t()) + &l.bias;
        let a = match l.activation {
            Activation::Relu => z.mapv(|v| if v > T::zero() { v } else { T::zero() }),
            Activation::Identity => z.clone(),
        };
        pre.push(z);
        acts.push(a);
    }
    let logits = pre.last().unwrap().column(0).to_owned();
    let loss = logits
        .iter()
        .zip(yb)
        .map(|(&z, &y)| log_loss_logit(z, y))
        .sum::<T>();

    let mut g: Array2<T> = (logits.mapv(sigmoid) - yb).insert_axis(Axis(1)) / b;
    for li in (0..model.layers.len()).rev() {
        if model.layers[li].activation == Activation::Relu {
            g.zip_mut_with(&pre[li], |gi, &zi| {
                if zi <= T::zero() {
                    *gi = T::zero();
                }
            });
        }
        let grad_w = g.t().dot(&acts[li]);
        let grad_b = g.sum_axis(Axis(0));
        let next = if li > 0 { Some(g.dot(&model.layers[li].weights)) } else { None };
        let layer = &mut model.layers[li];
        layer.weights.scaled_add(-lr, &grad_w);
        layer.bias.scaled_add(-lr, &grad_b);
        if let Some(n) = next {
            g = n;
        }
    }
    loss
}

/// Binary cross-entropy of a logit, computed without overflow.
pub(crate) fn log_loss_logit<T: Scalar>(z: T, y: T) -> T {
    // log(1 + e^z) - y z
    let softplus = if z > T::zero() { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - y * z
}
