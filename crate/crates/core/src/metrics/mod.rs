//! Perturbation-based faithfulness scores.

mod ablation;
mod auroc;
mod cutoff;
mod pgi;

use serde::{Deserialize, Serialize};

use crate::attribution::AttributionTable;
use crate::baselines::BaselineKind;
use crate::attribution::Method;

pub use ablation::{abc, ablation_curve, AblationConfig, AblationCurve, AblationOrder};
pub use auroc::auroc;
pub use cutoff::{feature_ranks, random_feature_cutoff};
pub use pgi::{default_k, pgi, pgi_sweep, PgiConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Pgi,
    Abc,
    Bnd,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Pgi, Metric::Abc, Metric::Bnd];

    pub fn direction(self) -> Direction {
        match self {
            Metric::Pgi => Direction::HigherBetter,
            Metric::Abc | Metric::Bnd => Direction::LowerBetter,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Pgi => "pgi",
            Metric::Abc => "abc",
            Metric::Bnd => "bnd",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

impl Direction {
    /// Maps a raw value to one where larger always means more faithful.
    pub fn adjust(self, v: f64) -> f64 {
        match self {
            Direction::HigherBetter => v,
            Direction::LowerBetter => -v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric: Metric,
    pub value: f64,
    pub direction: Direction,
    pub method: Method,
    pub baseline_kind: Option<BaselineKind>,
    pub repeat: usize,
    pub fingerprint: String,
}

impl MetricScore {
    pub fn new<T>(metric: Metric, value: f64, table: &AttributionTable<T>, fingerprint: impl Into<String>) -> Self {
        MetricScore {
            metric,
            value,
            direction: metric.direction(),
            method: table.method.clone(),
            baseline_kind: table.baseline_kind,
            repeat: table.repeat,
            fingerprint: fingerprint.into(),
        }
    }

    pub fn candidate(&self) -> String {
        match self.baseline_kind {
            Some(b) => format!("{}/{}", self.method, b),
            None => self.method.to_string(),
        }
    }
}
