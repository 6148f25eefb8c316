use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::cover::{build_cover, Interval};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapperConfig {
    pub resolution: usize,
    pub gain: f64,
    /// Histogram bins for the clustering threshold.
    pub bins: usize,
}

impl Default for MapperConfig {
    fn default() -> Self {
        MapperConfig {
            resolution: 10,
            gain: 0.4,
            bins: 10,
        }
    }
}

impl MapperConfig {
    pub fn with_resolution(resolution: usize) -> Self {
        MapperConfig {
            resolution,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 1 {
            return Err(Error::Config("resolution must be at least 1".into()));
        }
        if !(0.3..=0.5).contains(&self.gain) {
            return Err(Error::Config(format!("gain {} outside [0.3, 0.5]", self.gain)));
        }
        if self.bins < 2 {
            return Err(Error::Config("need at least 2 histogram bins".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperNode<T> {
    /// Sorted input point indices.
    pub members: Vec<usize>,
    /// Mean lens over the node's distinct members.
    pub value: T,
    pub interval: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperGraph<T> {
    pub nodes: Vec<MapperNode<T>>,
    /// `(a, b)` with `a < b`, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl<T: Scalar> MapperGraph<T> {
    pub fn n_components(&self) -> usize {
        let mut uf = UnionFind::new(self.nodes.len());
        for &(a, b) in &self.edges {
            uf.union(a, b);
        }
        (0..self.nodes.len()).filter(|&i| uf.find(i) == i).count()
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Joins two sets; the smaller root survives.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[drop] = keep;
        true
    }
}

/// Distinct (row, lens) pairs: representatives and the original indices
/// each one stands for.
fn dedup<T: Scalar>(points: ArrayView2<'_, T>, lens: &[T]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut reps = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, row) in points.outer_iter().enumerate() {
        let key: Vec<u64> = row
            .iter()
            .chain(std::iter::once(&lens[i]))
            .map(|v| {
                let f = v.as_f64();
                // fold -0.0 into 0.0
                if f == 0.0 { 0u64 } else { f.to_bits() }
            })
            .collect();
        match seen.get(&key) {
            Some(&g) => groups[g].push(i),
            None => {
                seen.insert(key, reps.len());
                reps.push(i);
                groups.push(vec![i]);
            }
        }
    }
    (reps, groups)
}

fn zscore<T: Scalar>(x: &mut Array2<T>) {
    let n = T::of_usize(x.nrows());
    for mut col in x.columns_mut() {
        let mu = col.sum() / n;
        let var = col.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / n;
        let sd = var.sqrt();
        col.mapv_inplace(|v| if sd > T::zero() { (v - mu) / sd } else { T::zero() });
    }
}

/// Single-linkage clusters of the given points, cut at the left edge of the
/// first empty bin of the pairwise-distance histogram.
fn cluster<T: Scalar>(x: &Array2<T>, members: &[usize], bins: usize) -> Vec<Vec<usize>> {
    let m = members.len();
    if m <= 1 {
        return vec![members.to_vec()];
    }
    let mut dist = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in a + 1..m {
            let (ra, rb) = (x.row(members[a]), x.row(members[b]));
            let d2 = ra.iter().zip(rb.iter()).map(|(&u, &v)| (u - v) * (u - v)).sum::<T>();
            dist.push(d2.sqrt());
        }
    }
    let lo = dist.iter().copied().fold(T::infinity(), T::min);
    let hi = dist.iter().copied().fold(T::neg_infinity(), T::max);
    let mut threshold = None;
    if hi > lo {
        let width = (hi - lo) / T::of_usize(bins);
        let mut counts = vec![0usize; bins];
        for &d in &dist {
            let b = ((d - lo) / width).to_usize().unwrap_or(bins - 1).min(bins - 1);
            counts[b] += 1;
        }
        if let Some(b) = counts.iter().position(|&c| c == 0) {
            threshold = Some(lo + width * T::of_usize(b));
        }
    }
    let Some(t) = threshold else {
        return vec![members.to_vec()];
    };
    let mut uf = UnionFind::new(m);
    let mut k = 0;
    for a in 0..m {
        for b in a + 1..m {
            if dist[k] < t {
                uf.union(a, b);
            }
            k += 1;
        }
    }
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); m];
    for a in 0..m {
        let r = uf.find(a);
        by_root[r].push(members[a]);
    }
    by_root.into_iter().filter(|c| !c.is_empty()).collect()
}

/// Mapper graph of `points` under the given lens.
pub fn build_mapper<T: Scalar>(points: ArrayView2<'_, T>, lens: &[T], cfg: &MapperConfig) -> Result<MapperGraph<T>> {
    cfg.validate()?;
    let n = points.nrows();
    if n == 0 {
        return Err(Error::Precondition("empty point cloud".into()));
    }
    if lens.len() != n {
        return Err(Error::Shape { expected: n, got: lens.len() });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite point coordinate".into()));
    }
    let (reps, groups) = dedup(points, lens);
    let mut x = points.select(ndarray::Axis(0), &reps);
    zscore(&mut x);
    let rep_lens: Vec<T> = reps.iter().map(|&i| lens[i]).collect();
    let cover: Vec<Interval<T>> = build_cover(&rep_lens, cfg.resolution, cfg.gain)?;
    let mut nodes = Vec::new();
    let mut node_of: Vec<Vec<usize>> = vec![Vec::new(); reps.len()];
    for (iv_idx, iv) in cover.iter().enumerate() {
        let inside: Vec<usize> = (0..reps.len()).filter(|&p| iv.contains(rep_lens[p])).collect();
        if inside.is_empty() {
            continue;
        }
        let mut clusters = cluster(&x, &inside, cfg.bins);
        clusters.sort_by_key(|c| c[0]);
        for c in clusters {
            let value = c.iter().map(|&p| rep_lens[p]).sum::<T>() / T::of_usize(c.len());
            for &p in &c {
                node_of[p].push(nodes.len());
            }
            let mut members: Vec<usize> = c.iter().flat_map(|&p| groups[p].iter().copied()).collect();
            members.sort_unstable();
            nodes.push(MapperNode {
                members,
                value,
                interval: iv_idx,
            });
        }
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for ns in &node_of {
        for a in 0..ns.len() {
            for b in a + 1..ns.len() {
                edges.push((ns[a].min(ns[b]), ns[a].max(ns[b])));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(MapperGraph { nodes, edges })
}
