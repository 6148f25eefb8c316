//! Dense LU factorization with partial pivoting for the small systems that
//! appear in KernelSHAP's constrained least squares.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Array2<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    /// Factorizes a square matrix. A pivot smaller than `tol * max|a|` is
    /// reported as singular.
    pub fn factor(a: &Array2<T>, tol: T) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape {
                expected: n,
                got: a.ncols(),
            });
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let floor = tol * scale.max(T::min_positive_value());
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[[i, k]].abs()))
                .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot > floor) {
                return Err(Error::Numerical(format!(
                    "singular system: pivot {pivot:e} at column {k}"
                )));
            }
            if p != k {
                for j in 0..n {
                    lu.swap([k, j], [p, j]);
                }
                perm.swap(k, p);
            }
            let d = lu[[k, k]];
            for i in k + 1..n {
                let f = lu[[i, k]] / d;
                lu[[i, k]] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let u = lu[[k, j]];
                        lu[[i, j]] -= f * u;
                    }
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn solve(&self, b: &Array1<T>) -> Array1<T> {
        let n = self.perm.len();
        let mut x: Array1<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s / self.lu[[i, i]];
        }
        x
    }
}
