use std::cmp::Ordering;

use super::persistence::{DiagramPoint, PairKind, PersistenceDiagram};
use crate::scalar::Scalar;

/// Bottleneck distance, computed per pair kind and maximized over kinds.
pub fn bottleneck<T: Scalar>(a: &PersistenceDiagram<T>, b: &PersistenceDiagram<T>) -> T {
    PairKind::ALL
        .iter()
        .map(|&k| bottleneck_points(&a.of_kind(k), &b.of_kind(k)))
        .fold(T::zero(), T::max)
}

fn point_cost<T: Scalar>(p: &DiagramPoint<T>, q: &DiagramPoint<T>) -> T {
    (p.birth - q.birth).abs().max((p.death - q.death).abs())
}

/// Exact bottleneck distance between two point sets (kinds ignored):
/// binary search over candidate costs with a perfect-matching test on the
/// diagonal-augmented bipartite graph.
pub fn bottleneck_points<T: Scalar>(a: &[DiagramPoint<T>], b: &[DiagramPoint<T>]) -> T {
    let (n, m) = (a.len(), b.len());
    if n == 0 && m == 0 {
        return T::zero();
    }
    // left: a_0..a_n, then diagonal copies of b; right: b_0..b_m, then
    // diagonal copies of a
    let size = n + m;
    let inf = T::infinity();
    let cost = |l: usize, r: usize| -> T {
        match (l < n, r < m) {
            (true, true) => point_cost(&a[l], &b[r]),
            (true, false) => {
                if r - m == l {
                    a[l].diagonal_cost()
                } else {
                    inf
                }
            }
            (false, true) => {
                if l - n == r {
                    b[r].diagonal_cost()
                } else {
                    inf
                }
            }
            (false, false) => T::zero(),
        }
    };
    let mut candidates: Vec<T> = Vec::with_capacity(n * m + n + m + 1);
    candidates.push(T::zero());
    for l in 0..n {
        for r in 0..m {
            candidates.push(cost(l, r));
        }
        candidates.push(a[l].diagonal_cost());
    }
    for r in 0..m {
        candidates.push(b[r].diagonal_cost());
    }
    candidates.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    candidates.dedup();
    let feasible = |delta: T| {
        let adj: Vec<Vec<usize>> = (0..size).map(|l| (0..size).filter(|&r| cost(l, r) <= delta).collect()).collect();
        perfect_matching(&adj, size)
    };
    let (mut lo, mut hi) = (0, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

/// Kuhn's augmenting-path algorithm; true when every left vertex is matched.
fn perfect_matching(adj: &[Vec<usize>], size: usize) -> bool {
    let mut match_r: Vec<Option<usize>> = vec![None; size];
    for l in 0..size {
        let mut seen = vec![false; size];
        if !augment(l, adj, &mut match_r, &mut seen) {
            return false;
        }
    }
    true
}

fn augment(l: usize, adj: &[Vec<usize>], match_r: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &r in &adj[l] {
        if seen[r] {
            continue;
        }
        seen[r] = true;
        if match_r[r].is_none_or(|other| augment(other, adj, match_r, seen)) {
            match_r[r] = Some(l);
            return true;
        }
    }
    false
}
