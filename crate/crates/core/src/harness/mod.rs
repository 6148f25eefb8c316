//! Experiment orchestration: declarative configs, the resumable grid
//! pipeline, the row-permutation experiment and report emission.
//! Everything here runs in `f64`.

mod config;
mod permutation;
mod pipeline;

pub use config::{DatasetSource, ExperimentConfig, PermutationBnd, PermutationConfig};
pub use permutation::{permute_rows, run_permutation_experiment, PermutationResult, PermutationRow};
pub use pipeline::{
    ablation_config_for, build_dataset, grid_spec_for, lens, pgi_config_for, run_grid, train_config_for, AgreementEntry,
    ArchSummary, BndFile, Bundle, CellFailure, Manifest, Pipeline, RunSummary, ScoreFile, Stage,
};

use crate::error::{Error, Result};

/// Environment variable capping worker threads.
pub const WORKERS_ENV: &str = "FAITHBENCH_WORKERS";

/// Worker count from `explicit`, else from the environment, else rayon's default.
pub fn worker_count(explicit: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = explicit {
        return if n == 0 { Err(Error::Config("worker count must be positive".into())) } else { Ok(Some(n)) };
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a dedicated pool of `workers` threads, or the global pool.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
