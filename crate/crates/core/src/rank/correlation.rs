use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Spearman,
    Kendall,
    WeightedKendall,
}

impl CorrelationKind {
    pub const ALL: [CorrelationKind; 3] = [CorrelationKind::Spearman, CorrelationKind::Kendall, CorrelationKind::WeightedKendall];

    pub fn as_str(self) -> &'static str {
        match self {
            CorrelationKind::Spearman => "spearman",
            CorrelationKind::Kendall => "kendall",
            CorrelationKind::WeightedKendall => "weighted_kendall",
        }
    }

    /// Correlation of two score vectors (larger = better).
    pub fn compute(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            CorrelationKind::Spearman => spearman(x, y),
            CorrelationKind::Kendall => kendall(x, y),
            CorrelationKind::WeightedKendall => weighted_kendall(x, y),
        }
    }
}

impl std::fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Undefined("correlation needs at least two items".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite score".into()));
    }
    Ok(())
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// 1-based ranks, ties receiving the average of the positions they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| cmp(x[a], x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            out[p] = r;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation of two rank vectors from raw sums. Ranks are
/// multiples of 1/2, so every sum is exact and the result is one rounding of
/// the exact ratio (while `n` stays below about 10^5).
fn pearson_ranks(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&u, &v) in a.iter().zip(b) {
        let (u, v) = (2.0 * u, 2.0 * v);
        sa += u;
        sb += v;
        sab += u * v;
        saa += u * u;
        sbb += v * v;
    }
    let cov = n * sab - sa * sb;
    let (va, vb) = (n * saa - sa * sa, n * sbb - sb * sb);
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Undefined("constant input".into()));
    }
    let den = if va == vb { va } else { (va * vb).sqrt() };
    Ok((cov / den).clamp(-1.0, 1.0))
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    pearson_ranks(&average_ranks(x), &average_ranks(y))
}

/// Kendall tau-b in O(n log n): sort by (x, y), then count the exchanges a
/// merge sort on y needs.
pub fn kendall(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(x[a], x[b]).then(cmp(y[a], y[b])));
    let pairs = |run: u64| run * (run.saturating_sub(1)) / 2;
    let (mut tx, mut txy) = (0u64, 0u64);
    let (mut rx, mut rxy) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            rx += 1;
            if y[a] == y[b] {
                rxy += 1;
            } else {
                txy += pairs(rxy);
                rxy = 1;
            }
        } else {
            tx += pairs(rx);
            txy += pairs(rxy);
            rx = 1;
            rxy = 1;
        }
    }
    tx += pairs(rx);
    txy += pairs(rxy);
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let swaps = merge_count(&mut ys);
    let mut ty = 0u64;
    let mut ry = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            ry += 1;
        } else {
            ty += pairs(ry);
            ry = 1;
        }
    }
    ty += pairs(ry);
    let n0 = pairs(n as u64);
    if n0 == tx || n0 == ty {
        return Err(Error::Undefined("constant input".into()));
    }
    let num = n0 as f64 - tx as f64 - ty as f64 + txy as f64 - 2.0 * swaps as f64;
    let den = ((n0 - tx) as f64 * (n0 - ty) as f64).sqrt();
    Ok((num / den).clamp(-1.0, 1.0))
}

/// Sorts ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            merged.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

/// Positions in decreasing lexicographic order of `(primary, secondary)`;
/// complete ties put the later index first.
fn top_ranks(primary: &[f64], secondary: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..primary.len()).collect();
    idx.sort_by(|&a, &b| {
        cmp(primary[b], primary[a])
            .then(cmp(secondary[b], secondary[a]))
            .then(b.cmp(&a))
    });
    let mut rank = vec![0; primary.len()];
    for (r, &i) in idx.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Weighted tau for one weight assignment, via per-element sums:
/// `sum_{i<j} (w_i + w_j) s_ij = sum_i w_i sum_{j != i} s_ij`.
fn weighted_tau_once(x: &[f64], y: &[f64], rank: &[usize]) -> Result<f64> {
    let n = x.len();
    let scale = hyperbolic_scale(n);
    let w: Vec<f64> = rank.iter().map(|&r| scale / (r as f64 + 1.0)).collect();
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (mut c, mut tx, mut ty) = (0.0, 0.0, 0.0);
        for j in 0..n {
            if j == i {
                continue;
            }
            let sx = sign(x[i] - x[j]);
            let sy = sign(y[i] - y[j]);
            c += sx * sy;
            tx += sx.abs();
            ty += sy.abs();
        }
        num += w[i] * c;
        dx += w[i] * tx;
        dy += w[i] * ty;
    }
    if dx == 0.0 || dy == 0.0 {
        return Err(Error::Undefined("constant input".into()));
    }
    let den = if dx == dy { dx } else { (dx * dy).sqrt() };
    Ok((num / den).clamp(-1.0, 1.0))
}

/// Common multiple of `1..=n` when it keeps every weighted sum an exact
/// integer, else 1. The statistic is invariant to the weight scale.
fn hyperbolic_scale(n: usize) -> f64 {
    let gcd = |mut a: u64, mut b: u64| {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    };
    let limit = (1u64 << 53) / (n as u64 * n as u64).max(1);
    let mut l = 1u64;
    for k in 1..=n as u64 {
        l = l / gcd(l, k) * k;
        if l > limit {
            return 1.0;
        }
    }
    l as f64
}

/// Top-weighted Kendall tau with additive hyperbolic weights `1/(r+1)`,
/// averaged over the rankings induced by `x` and by `y`.
pub fn weighted_kendall(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    let a = weighted_tau_once(x, y, &top_ranks(x, y))?;
    let b = weighted_tau_once(x, y, &top_ranks(y, x))?;
    Ok((a + b) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((kendall(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 3.0, 4.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(kendall(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        let id: Vec<f64> = (0..6).map(|i| 6.0 - i as f64).collect();
        let rev: Vec<f64> = id.iter().rev().copied().collect();
        assert!((weighted_kendall(&id, &id).unwrap() - 1.0).abs() < 1e-15);
        assert!((weighted_kendall(&id, &rev).unwrap() + 1.0).abs() < 1e-15);
        let mut top = id.clone();
        top.swap(0, 1);
        let mut bottom = id.clone();
        bottom.swap(4, 5);
        assert!(weighted_kendall(&id, &top).unwrap() < weighted_kendall(&id, &bottom).unwrap());
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(kendall(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn frozen_reference_values() {
        let cases: [(&[f64], &[f64], [f64; 3]); 3] = [
            (&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2.0, 1.0, 3.0, 4.0, 6.0, 5.0], [0.8857142857142858, 0.7333333333333333, 0.6952380952380952]),
            (&[0.3, 0.1, 0.3, 0.9, 0.5], &[1.0, 2.0, 2.0, 0.5, 3.0], [-0.2894736842105264, -0.2222222222222222, -0.16420353761869327]),
            (&[5.0, 4.0, 3.0, 2.0, 1.0, 0.0, 7.0], &[1.0, 4.0, 3.0, 2.0, 0.0, 5.0, 7.0], [0.25, 0.23809523809523814, 0.40067340067340057]),
        ];
        for (x, y, want) in cases {
            assert!((spearman(x, y).unwrap() - want[0]).abs() < 1e-12);
            assert!((kendall(x, y).unwrap() - want[1]).abs() < 1e-12);
            assert!((weighted_kendall(x, y).unwrap() - want[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn average_ranks_handle_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
