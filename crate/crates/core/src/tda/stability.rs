use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bottleneck::bottleneck;
use super::mapper::{build_mapper, MapperConfig};
use super::persistence::{persistence, PersistenceDiagram};
use crate::error::{Error, Result};
use crate::scalar::{percentile, Scalar};
use crate::seed;

/// Even resolutions 6, 8, ..., 30.
pub fn default_resolution_grid() -> Vec<usize> {
    (6..=30).step_by(2).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityConfig {
    pub grid: Vec<usize>,
    pub bootstraps: usize,
    /// Percentile of the bootstrap distances, in [0, 100].
    pub percentile: f64,
    pub gain: f64,
    pub bins: usize,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            grid: default_resolution_grid(),
            bootstraps: 30,
            percentile: 95.0,
            gain: 0.4,
            bins: 10,
            seed: 0,
        }
    }
}

impl StabilityConfig {
    pub fn mapper(&self, resolution: usize) -> MapperConfig {
        MapperConfig {
            resolution,
            gain: self.gain,
            bins: self.bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub resolution: usize,
    pub candidate: usize,
    pub stability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionChoice {
    pub resolution: usize,
    /// Summed stability per grid resolution, in grid order.
    pub totals: Vec<(usize, f64)>,
    pub records: Vec<StabilityRecord>,
}

/// Diagram of one point cloud at one resolution.
pub fn diagram<T: Scalar>(points: ArrayView2<'_, T>, lens: &[T], cfg: &MapperConfig) -> Result<PersistenceDiagram<T>> {
    persistence(&build_mapper(points, lens, cfg)?)
}

/// Stability of one cloud: the chosen percentile of bottleneck distances
/// between resampled and full-data diagrams.
pub fn stability<T: Scalar>(points: ArrayView2<'_, T>, lens: &[T], resolution: usize, cfg: &StabilityConfig) -> Result<f64> {
    let mcfg = cfg.mapper(resolution);
    let full = diagram(points, lens, &mcfg)?;
    let samples = bootstrap_indices(points.nrows(), cfg);
    let dists: Vec<f64> = samples
        .iter()
        .map(|idx| {
            let sub = points.select(Axis(0), idx);
            let sub_lens: Vec<T> = idx.iter().map(|&i| lens[i]).collect();
            Ok(bottleneck(&diagram(sub.view(), &sub_lens, &mcfg)?, &full).as_f64())
        })
        .collect::<Result<_>>()?;
    Ok(percentile(&dists, cfg.percentile / 100.0))
}

/// Resamples of size `n` with replacement, shared by every candidate and
/// resolution.
fn bootstrap_indices(n: usize, cfg: &StabilityConfig) -> Vec<Vec<usize>> {
    (0..cfg.bootstraps)
        .map(|b| {
            let mut rng = seed::rng(seed::derive_index(seed::derive(cfg.seed, "bootstrap"), b as u64));
            (0..n).map(|_| rng.random_range(0..n)).collect()
        })
        .collect()
}

/// Grid resolution minimizing summed stability over the candidates; ties go
/// to the lowest resolution.
pub fn select_resolution<T: Scalar>(clouds: &[Array2<T>], lens: &[T], cfg: &StabilityConfig) -> Result<ResolutionChoice> {
    if clouds.is_empty() {
        return Err(Error::Precondition("no candidates for resolution selection".into()));
    }
    if cfg.grid.is_empty() || cfg.bootstraps == 0 {
        return Err(Error::Config("empty resolution grid or zero bootstraps".into()));
    }
    if !(0.0..=100.0).contains(&cfg.percentile) {
        return Err(Error::Config("percentile outside [0, 100]".into()));
    }
    let jobs: Vec<(usize, usize)> = cfg
        .grid
        .iter()
        .flat_map(|&r| (0..clouds.len()).map(move |c| (r, c)))
        .collect();
    let records: Vec<StabilityRecord> = jobs
        .par_iter()
        .map(|&(r, c)| {
            Ok(StabilityRecord {
                resolution: r,
                candidate: c,
                stability: stability(clouds[c].view(), lens, r, cfg)?,
            })
        })
        .collect::<Result<_>>()?;
    let totals: Vec<(usize, f64)> = cfg
        .grid
        .iter()
        .map(|&r| (r, records.iter().filter(|s| s.resolution == r).map(|s| s.stability).sum()))
        .collect();
    Ok(ResolutionChoice {
        resolution: argmin_resolution(&totals),
        totals,
        records,
    })
}

pub(crate) fn argmin_resolution(totals: &[(usize, f64)]) -> usize {
    let mut best = totals[0];
    for &t in &totals[1..] {
        if t.1 < best.1 || (t.1 == best.1 && t.0 < best.0) {
            best = t;
        }
    }
    best.0
}

/// Symmetric pairwise bottleneck matrix.
pub fn distance_matrix<T: Scalar>(diagrams: &[PersistenceDiagram<T>]) -> Array2<f64> {
    let n = diagrams.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs.par_iter().map(|&(i, j)| bottleneck(&diagrams[i], &diagrams[j]).as_f64()).collect();
    let mut m = Array2::zeros((n, n));
    for (&(i, j), v) in pairs.iter().zip(vals) {
        m[[i, j]] = v;
        m[[j, i]] = v;
    }
    m
}

/// Mean distance of each candidate to all others.
pub fn bnd_from_matrix(m: &Array2<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n < 2 {
        return Err(Error::Precondition("BND needs at least two candidates".into()));
    }
    Ok((0..n).map(|i| m.row(i).sum() / (n - 1) as f64).collect())
}

/// Distance matrix and BND score of each point cloud at a fixed resolution.
pub fn bnd_scores<T: Scalar>(clouds: &[Array2<T>], lens: &[T], cfg: &MapperConfig) -> Result<(Array2<f64>, Vec<f64>)> {
    if clouds.len() < 2 {
        return Err(Error::Precondition("BND needs at least two candidates".into()));
    }
    let diagrams: Vec<PersistenceDiagram<T>> = clouds
        .par_iter()
        .map(|c| diagram(c.view(), lens, cfg))
        .collect::<Result<_>>()?;
    let m = distance_matrix(&diagrams);
    let s = bnd_from_matrix(&m)?;
    Ok((m, s))
}
