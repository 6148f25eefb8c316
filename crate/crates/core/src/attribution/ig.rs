use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DenseModel, Target};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgConfig {
    pub steps: usize,
    pub target: Target,
}

impl Default for IgConfig {
    fn default() -> Self {
        IgConfig {
            steps: 50,
            target: Target::Probability,
        }
    }
}

impl IgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Config(format!("integrated gradients needs at least 2 steps, got {}", self.steps)));
        }
        Ok(())
    }
}

/// Midpoint-rule path integral of the input gradient from each reference row
/// to `x`, averaged over the references.
pub fn integrated_gradients<T: Scalar>(
    model: &DenseModel<T>,
    x: ArrayView1<'_, T>,
    references: ArrayView2<'_, T>,
    cfg: &IgConfig,
) -> Result<Array1<T>> {
    cfg.validate()?;
    let d = model.input_dim();
    if x.len() != d {
        return Err(Error::Shape { expected: d, got: x.len() });
    }
    if references.ncols() != d {
        return Err(Error::Shape {
            expected: d,
            got: references.ncols(),
        });
    }
    if references.nrows() == 0 {
        return Err(Error::Precondition("empty reference set".into()));
    }
    let steps = cfg.steps;
    let inv = T::one() / T::of_usize(steps);
    let mut total = Array1::<T>::zeros(d);
    let mut path = Array2::<T>::zeros((steps, d));
    for b in references.outer_iter() {
        let delta = &x - &b;
        for t in 0..steps {
            let alpha = (T::of_usize(t) + T::of(0.5)) * inv;
            path.row_mut(t).assign(&(&b + &(&delta * alpha)));
        }
        let grads = model.input_gradient_batch(path.view(), cfg.target)?;
        let avg = grads.sum_axis(ndarray::Axis(0)) * inv;
        total += &(avg * &delta);
    }
    Ok(total / T::of_usize(references.nrows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn logit_cfg(steps: usize) -> IgConfig {
        IgConfig { steps, target: Target::Logit }
    }

    #[test]
    fn linear_is_exact() {
        let m = DenseModel::linear(&[2.0, -1.0], 0.3).unwrap();
        let ig = integrated_gradients(&m, array![1.0, 3.0].view(), array![[0.0, 0.0]].view(), &logit_cfg(50)).unwrap();
        assert_eq!(ig, array![2.0, -3.0]);
    }

    #[test]
    fn zero_path_gives_zero() {
        let m: DenseModel<f64> = DenseModel::random_dense3(3, [8, 4], 1).unwrap();
        let x = array![0.2, -1.0, 0.5];
        let ig = integrated_gradients(&m, x.view(), x.view().insert_axis(ndarray::Axis(0)), &IgConfig::default()).unwrap();
        assert!(ig.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn completeness_improves_with_steps() {
        let m: DenseModel<f64> = DenseModel::random_dense3(6, [16, 8], 3).unwrap();
        let x = array![1.0, -0.5, 2.0, 0.3, -1.2, 0.7];
        let refs = array![[0.0, 0.0, 0.0, 0.0, 0.0, 0.0], [-1.0, 1.0, 0.5, 0.0, 1.0, -0.3]];
        let fb = refs.outer_iter().map(|b| m.predict(b).unwrap()).sum::<f64>() / 2.0;
        let gap = |steps| {
            let cfg = IgConfig { steps, target: Target::Probability };
            let ig = integrated_gradients(&m, x.view(), refs.view(), &cfg).unwrap();
            (ig.sum() - (m.predict(x.view()).unwrap() - fb)).abs()
        };
        assert!(gap(300) <= 1e-2);
        assert!(gap(300) <= gap(50) + 1e-12);
    }

    #[test]
    fn errors() {
        let m = DenseModel::linear(&[2.0, -1.0], 0.0).unwrap();
        assert!(integrated_gradients(&m, array![1.0].view(), array![[0.0, 0.0]].view(), &logit_cfg(50)).is_err());
        assert!(integrated_gradients(&m, array![1.0, 1.0].view(), array![[0.0, 0.0]].view(), &logit_cfg(1)).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn prop_symmetric_columns_get_equal_credit(w in -3.0f64..3.0, v in proptest::collection::vec(-2.0f64..2.0, 3), b in proptest::collection::vec(-2.0f64..2.0, 3)) {
            let m = DenseModel::linear(&[w, w, 1.5], -0.2).unwrap();
            let x = ndarray::array![v[0], v[0], v[2]];
            let refs = ndarray::array![[b[0], b[0], b[2]]];
            let phi = integrated_gradients(&m, x.view(), refs.view(), &IgConfig { steps: 20, target: Target::Probability }).unwrap();
            proptest::prop_assert_eq!(phi[0], phi[1]);
        }
    }
}
