use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::model::{DenseModel, Target};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelShapConfig {
    /// Sampled coalitions when enumeration is not used.
    pub n_coalitions: usize,
    /// Relative ridge added in sampled mode.
    pub ridge: f64,
    /// Enumerate every coalition up to this many features.
    pub exact_max_features: usize,
    pub seed: u64,
    pub target: Target,
}

impl Default for KernelShapConfig {
    fn default() -> Self {
        KernelShapConfig {
            n_coalitions: 2048,
            ridge: 1e-6,
            exact_max_features: 12,
            seed: 0,
            target: Target::Probability,
        }
    }
}

impl KernelShapConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if d > self.exact_max_features && self.n_coalitions < d + 2 {
            return Err(Error::Config(format!(
                "n_coalitions {} is below d + 2 = {}",
                self.n_coalitions,
                d + 2
            )));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config("ridge must be finite and non-negative".into()));
        }
        if self.exact_max_features > 20 {
            return Err(Error::Config("exact enumeration is capped at 20 features".into()));
        }
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coalitions and the pre-solved weighted normal equations for one feature
/// count. The last feature is eliminated through the additivity constraint.
#[derive(Debug, Clone)]
pub struct KernelShapPlan<T> {
    d: usize,
    /// `n_c × d` 0/1 coalition matrix (empty and full coalitions excluded).
    masks: Array2<T>,
    /// `(d-1) × n_c` map from centred coalition values to the free
    /// coefficients.
    solver: Array2<T>,
    exact: bool,
}

impl<T: Scalar> KernelShapPlan<T> {
    pub fn new(d: usize, cfg: &KernelShapConfig) -> Result<Self> {
        if d == 0 {
            return Err(Error::Precondition("KernelSHAP needs at least one feature".into()));
        }
        cfg.validate(d)?;
        if d == 1 {
            return Ok(KernelShapPlan {
                d,
                masks: Array2::zeros((0, 1)),
                solver: Array2::zeros((0, 0)),
                exact: true,
            });
        }
        let exact = d <= cfg.exact_max_features;
        let (masks, weights) = if exact { enumerate(d) } else { sample(d, cfg.n_coalitions, cfg.seed) };
        let n_c = masks.nrows();
        let p = d - 1;
        // centred design: z_j - z_d
        let mut design = Array2::<T>::zeros((n_c, p));
        for c in 0..n_c {
            let zd = masks[[c, p]];
            for j in 0..p {
                design[[c, j]] = masks[[c, j]] - zd;
            }
        }
        let mut weighted_t = design.t().to_owned();
        for c in 0..n_c {
            weighted_t.column_mut(c).mapv_inplace(|v| v * weights[c]);
        }
        let normal = weighted_t.dot(&design);
        let trace = (0..p).map(|i| normal[[i, i]]).sum::<T>() / T::of_usize(p);
        let ridges: Vec<f64> = if exact {
            vec![0.0, 1e-6, 1e-3]
        } else {
            vec![cfg.ridge, cfg.ridge.max(1e-6) * 1e3]
        };
        let tol = T::epsilon() * T::of(64.0);
        let mut last = None;
        for r in ridges {
            let mut a = normal.clone();
            for i in 0..p {
                a[[i, i]] += T::of(r) * trace;
            }
            match Lu::factor(&a, tol) {
                Ok(lu) => {
                    let mut solver = Array2::<T>::zeros((p, n_c));
                    for c in 0..n_c {
                        solver.column_mut(c).assign(&lu.solve(&weighted_t.column(c).to_owned()));
                    }
                    return Ok(KernelShapPlan { d, masks, solver, exact });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::Numerical("singular KernelSHAP system".into())))
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    pub fn n_coalitions(&self) -> usize {
        self.masks.nrows()
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// Attributions for `x` against the reference rows.
    pub fn explain(
        &self,
        model: &DenseModel<T>,
        x: ArrayView1<'_, T>,
        references: ArrayView2<'_, T>,
        target: Target,
    ) -> Result<Array1<T>> {
        let d = self.d;
        if x.len() != d {
            return Err(Error::Shape { expected: d, got: x.len() });
        }
        if references.ncols() != d {
            return Err(Error::Shape {
                expected: d,
                got: references.ncols(),
            });
        }
        let k = references.nrows();
        if k == 0 {
            return Err(Error::Precondition("empty reference set".into()));
        }
        let kf = T::of_usize(k);
        let fx = model.output(x, target)?;
        let f_ref = model.output_batch(references, target)?.sum() / kf;
        let total = fx - f_ref;
        if d == 1 {
            return Ok(Array1::from_elem(1, total));
        }
        let n_c = self.masks.nrows();
        let mut hybrid = Array2::<T>::zeros((n_c * k, d));
        for c in 0..n_c {
            let z = self.masks.row(c);
            for (b, r) in references.outer_iter().enumerate() {
                let mut row = hybrid.row_mut(c * k + b);
                for j in 0..d {
                    row[j] = if z[j] == T::one() { x[j] } else { r[j] };
                }
            }
        }
        let out = model.output_batch(hybrid.view(), target)?;
        let p = d - 1;
        let y: Array1<T> = (0..n_c)
            .map(|c| {
                let v = (0..k).map(|b| out[c * k + b]).sum::<T>() / kf;
                v - f_ref - self.masks[[c, p]] * total
            })
            .collect();
        let free = self.solver.dot(&y);
        let mut phi = Array1::<T>::zeros(d);
        phi.slice_mut(ndarray::s![..p]).assign(&free);
        phi[p] = total - free.sum();
        Ok(phi)
    }
}

fn enumerate<T: Scalar>(d: usize) -> (Array2<T>, Vec<T>) {
    let n_c = (1usize << d) - 2;
    let mut masks = Array2::<T>::zeros((n_c, d));
    let mut weights = Vec::with_capacity(n_c);
    for (c, bits) in (1..(1usize << d) - 1).enumerate() {
        let s = bits.count_ones() as usize;
        for j in 0..d {
            if bits >> j & 1 == 1 {
                masks[[c, j]] = T::one();
            }
        }
        weights.push(T::of((d - 1) as f64 / (binomial(d, s) * (s * (d - s)) as f64)));
    }
    (masks, weights)
}

/// Paired sampling: subset sizes follow the kernel mass per size, each draw
/// is followed by its complement, all weights equal.
fn sample<T: Scalar>(d: usize, n_coalitions: usize, seed_value: u64) -> (Array2<T>, Vec<T>) {
    let mut rng = seed::rng(seed::derive(seed_value, "kernel-shap-coalitions"));
    let mass: Vec<f64> = (1..d).map(|s| 1.0 / (s * (d - s)) as f64).collect();
    let total: f64 = mass.iter().sum();
    let pairs = (n_coalitions / 2).max(1);
    let mut masks = Array2::<T>::zeros((pairs * 2, d));
    for p in 0..pairs {
        let mut u = rng.random::<f64>() * total;
        let mut s = d - 1;
        for (i, m) in mass.iter().enumerate() {
            if u < *m {
                s = i + 1;
                break;
            }
            u -= m;
        }
        let chosen = rand::seq::index::sample(&mut rng, d, s);
        let mut row = vec![false; d];
        for j in chosen {
            row[j] = true;
        }
        for j in 0..d {
            masks[[2 * p, j]] = if row[j] { T::one() } else { T::zero() };
            masks[[2 * p + 1, j]] = if row[j] { T::zero() } else { T::one() };
        }
    }
    (masks, vec![T::one(); pairs * 2])
}

/// One-off KernelSHAP; prefer [`KernelShapPlan`] when explaining many rows.
pub fn kernel_shap<T: Scalar>(
    model: &DenseModel<T>,
    x: ArrayView1<'_, T>,
    references: ArrayView2<'_, T>,
    cfg: &KernelShapConfig,
) -> Result<Array1<T>> {
    KernelShapPlan::new(x.len(), cfg)?.explain(model, x, references, cfg.target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn brute_shapley(model: &DenseModel<f64>, x: &Array1<f64>, refs: &Array2<f64>, target: Target) -> Vec<f64> {
        let d = x.len();
        let v = |bits: usize| {
            refs.outer_iter()
                .map(|r| {
                    let h: Array1<f64> = (0..d).map(|j| if bits >> j & 1 == 1 { x[j] } else { r[j] }).collect();
                    model.output(h.view(), target).unwrap()
                })
                .sum::<f64>()
                / refs.nrows() as f64
        };
        let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
        (0..d)
            .map(|j| {
                (0..1usize << d)
                    .filter(|s| s >> j & 1 == 0)
                    .map(|s| {
                        let size = s.count_ones() as usize;
                        fact(size) * fact(d - size - 1) / fact(d) * (v(s | 1 << j) - v(s))
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn linear_example() {
        let m = DenseModel::linear(&[1.0, 1.0], 0.0).unwrap();
        let cfg = KernelShapConfig { target: Target::Logit, ..Default::default() };
        let phi: Array1<f64> = kernel_shap(&m, array![2.0, 0.0].view(), array![[0.0, 0.0]].view(), &cfg).unwrap();
        assert!((phi[0] - 2.0).abs() < 1e-12 && phi[1].abs() < 1e-12);
    }

    #[test]
    fn zero_when_x_equals_reference() {
        let m: DenseModel<f64> = DenseModel::random_dense3(5, [8, 8], 2).unwrap();
        let x = array![0.1, 0.2, -0.3, 1.0, 0.0];
        let phi = kernel_shap(&m, x.view(), x.view().insert_axis(ndarray::Axis(0)), &Default::default()).unwrap();
        assert!(phi.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn exact_matches_brute_force() {
        let m: DenseModel<f64> = DenseModel::random_dense3(6, [16, 8], 9).unwrap();
        let x = array![1.0, -0.5, 2.0, 0.3, -1.2, 0.7];
        let refs = array![[0.0, 0.1, 0.0, -0.4, 0.0, 0.0], [-1.0, 1.0, 0.5, 0.0, 1.0, -0.3]];
        let plan = KernelShapPlan::new(6, &KernelShapConfig::default()).unwrap();
        assert!(plan.is_exact());
        let phi = plan.explain(&m, x.view(), refs.view(), Target::Probability).unwrap();
        let oracle = brute_shapley(&m, &x, &refs, Target::Probability);
        for (a, b) in phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn sampled_mode_is_efficient_and_close_on_linear() {
        let c: Vec<f64> = (0..16).map(|j| (j as f64 - 7.5) / 4.0).collect();
        let m = DenseModel::linear(&c, 0.1).unwrap();
        let cfg = KernelShapConfig { target: Target::Logit, seed: 4, ..Default::default() };
        let plan = KernelShapPlan::new(16, &cfg).unwrap();
        assert!(!plan.is_exact());
        assert_eq!(plan.n_coalitions(), 2048);
        let x: Array1<f64> = (0..16).map(|j| (j as f64).sin()).collect();
        let refs = Array2::zeros((1, 16));
        let phi = plan.explain(&m, x.view(), refs.view(), Target::Logit).unwrap();
        let total = m.logit(x.view()).unwrap() - m.logit(refs.row(0)).unwrap();
        assert!((phi.sum() - total).abs() < 1e-8);
        for j in 0..16 {
            assert!((phi[j] - c[j] * x[j]).abs() < 1e-4, "{j}: {} vs {}", phi[j], c[j] * x[j]);
        }
    }

    #[test]
    fn single_feature_and_config_checks() {
        let m = DenseModel::linear(&[3.0], 0.0).unwrap();
        let cfg = KernelShapConfig { target: Target::Logit, ..Default::default() };
        let phi = kernel_shap(&m, array![2.0].view(), array![[1.0]].view(), &cfg).unwrap();
        assert_eq!(phi, array![3.0]);
        let bad = KernelShapConfig { n_coalitions: 10, ..Default::default() };
        assert!(KernelShapPlan::<f64>::new(20, &bad).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn prop_efficiency_and_symmetry(seed in 0u64..10_000, x in proptest::collection::vec(-2.0f64..2.0, 6), refs in proptest::collection::vec(-2.0f64..2.0, 12)) {
            let m: DenseModel<f64> = DenseModel::random_dense3(6, [8, 4], seed).unwrap();
            let x = Array1::from(x);
            let refs = Array2::from_shape_vec((2, 6), refs).unwrap();
            let cfg = KernelShapConfig { target: Target::Probability, ..Default::default() };
            let phi = kernel_shap(&m, x.view(), refs.view(), &cfg).unwrap();
            let base = refs.outer_iter().map(|b| m.predict(b).unwrap()).sum::<f64>() / 2.0;
            proptest::prop_assert!((phi.sum() - (m.predict(x.view()).unwrap() - base)).abs() <= 1e-8);

            // columns 0 and 1 play identical roles in a model that only sees their sum
            let lin = DenseModel::linear(&[0.7, 0.7, -1.0, 0.0, 0.3, 2.0], 0.0).unwrap();
            let (mut xs, mut rs) = (x.clone(), refs.clone());
            xs[1] = xs[0];
            let first = rs.column(0).to_owned();
            rs.column_mut(1).assign(&first);
            let phi = kernel_shap(&lin, xs.view(), rs.view(), &cfg).unwrap();
            proptest::prop_assert!((phi[0] - phi[1]).abs() <= 1e-10);
        }
    }
}
