use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{split_tags, Dataset};
use super::schema::FeatureSchema;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

/// Linear-logit generator: x ~ N(0, I), label = 1 iff c·x + ε > 0 with
/// ε ~ N(0, noise_std²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SyntheticSpecFile")]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub coefficients: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
}

/// Config form: absent fields take the defaults, coefficients included.
#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SyntheticSpecFile {
    n_samples: usize,
    n_features: usize,
    coefficients: Option<Vec<f64>>,
    noise_std: f64,
    seed: u64,
}

impl Default for SyntheticSpecFile {
    fn default() -> Self {
        let d = SyntheticSpec::default();
        SyntheticSpecFile {
            n_samples: d.n_samples,
            n_features: d.n_features,
            coefficients: None,
            noise_std: d.noise_std,
            seed: d.seed,
        }
    }
}

impl From<SyntheticSpecFile> for SyntheticSpec {
    fn from(f: SyntheticSpecFile) -> Self {
        SyntheticSpec {
            coefficients: f.coefficients.unwrap_or_else(|| default_coefficients(f.n_features)),
            noise_std: f.noise_std,
            ..SyntheticSpec::new(f.n_samples, f.n_features, f.seed)
        }
    }
}

impl SyntheticSpec {
    pub fn new(n_samples: usize, n_features: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_samples,
            n_features,
            coefficients: default_coefficients(n_features),
            noise_std: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.n_features == 0 {
            return Err(Error::Spec("n_samples and n_features must be positive".into()));
        }
        if self.coefficients.len() != self.n_features {
            return Err(Error::Spec(format!(
                "{} coefficients for {} features",
                self.coefficients.len(),
                self.n_features
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Spec("non-finite coefficient".into()));
        }
        if self.coefficients.iter().all(|&c| c == 0.0) {
            return Err(Error::Spec("coefficient vector is all zeros".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Spec("noise_std must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec::new(1000, 24, 0)
    }
}

/// Geometrically decaying weights with alternating signs, so features have a
/// clear importance order.
pub fn default_coefficients(d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * 2.0 * 0.8f64.powi(j as i32)
        })
        .collect()
}

pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let (n, d) = (spec.n_samples, spec.n_features);
    let mut rng = seed::rng(seed::derive(spec.seed, "synthetic"));
    let mut raw = Array2::<f64>::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    for mut row in raw.outer_iter_mut() {
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let noise: f64 = StandardNormal.sample(&mut rng);
        let score: f64 = row.iter().zip(&spec.coefficients).map(|(x, c)| x * c).sum::<f64>() + spec.noise_std * noise;
        y.push(u8::from(score > 0.0));
    }
    let schema = FeatureSchema::numeric((0..d).map(|j| format!("x{j}")))?;
    Dataset::new("synthetic", schema, raw.mapv(T::of), y, split_tags(n, spec.seed))
}
