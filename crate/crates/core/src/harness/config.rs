use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::GridSpec;
use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::metrics::{AblationConfig, PgiConfig};
use crate::model::{Architecture, TrainConfig};
use crate::rank::CorrelationKind;
use crate::tda::StabilityConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    /// Headered CSV plus a schema sidecar naming the label column.
    Csv { data: PathBuf, schema: PathBuf },
}

/// How BND is taken in the permutation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationBnd {
    /// Mean distance to the other candidates of the same repeat.
    #[default]
    Candidates,
    /// Mean distance to the other fractions of the same repeat.
    Family,
    /// Distance to the unpermuted table.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PermutationConfig {
    pub fractions: Vec<f64>,
    pub bnd: PermutationBnd,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            bnd: PermutationBnd::Candidates,
        }
    }
}

impl PermutationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::Config("no permutation fractions".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::Config(format!("permutation fraction {f} outside [0, 1]")));
        }
        if self.fractions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("permutation fractions must be strictly ascending".into()));
        }
        Ok(())
    }
}

/// Declarative description of one benchmark run. Seeds inside the nested
/// sections are ignored; every stochastic site derives its seed from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSource,
    pub architectures: Vec<Architecture>,
    /// Numeric noise columns appended before training.
    pub random_features: usize,
    pub train: TrainConfig,
    pub grid: GridSpec,
    pub pgi: PgiConfig,
    pub ablation: AblationConfig,
    pub tda: StabilityConfig,
    pub correlations: Vec<CorrelationKind>,
    pub permutation: PermutationConfig,
    /// Agreement check threshold; all off-diagonal entries above it are flagged.
    pub agreement_threshold: f64,
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "synthetic".into(),
            dataset: DatasetSource::Synthetic(SyntheticSpec::default()),
            architectures: vec![Architecture::Linear, Architecture::Dense3],
            random_features: 0,
            train: TrainConfig::default(),
            grid: GridSpec::default(),
            pgi: PgiConfig::default(),
            ablation: AblationConfig::default(),
            tda: StabilityConfig::default(),
            correlations: CorrelationKind::ALL.to_vec(),
            permutation: PermutationConfig::default(),
            agreement_threshold: 0.9,
            output: PathBuf::from("faithbench-out"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // relative paths resolve against the config file
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSource::Csv { data, schema } = &mut cfg.dataset {
            fix(data);
            fix(schema);
        }
        if let Some(d) = cfg.grid.import_dir.as_mut() {
            fix(d);
        }
        fix(&mut cfg.output);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid dataset name {:?}", self.name)));
        }
        if self.architectures.is_empty() {
            return Err(Error::Config("no architectures".into()));
        }
        let mut archs = self.architectures.clone();
        archs.sort();
        archs.dedup();
        if archs.len() != self.architectures.len() {
            return Err(Error::Config("duplicate architectures".into()));
        }
        if let DatasetSource::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        self.train.validate()?;
        for &a in &self.architectures {
            self.grid.validate(a)?;
        }
        self.pgi.perturb.validate()?;
        if self.pgi.m == 0 || self.pgi.max_rows == 0 {
            return Err(Error::Config("PGI m and max_rows must be positive".into()));
        }
        self.ablation.perturb.validate()?;
        if self.ablation.draws == 0 {
            return Err(Error::Config("ablation draws must be positive".into()));
        }
        if self.tda.grid.is_empty() || self.tda.grid.iter().any(|&r| r < 2) {
            return Err(Error::Config("resolution grid must be non-empty with entries >= 2".into()));
        }
        if self.tda.bootstraps == 0 {
            return Err(Error::Config("bootstraps must be positive".into()));
        }
        if !(0.3..=0.5).contains(&self.tda.gain) {
            return Err(Error::Config(format!("gain {} outside [0.3, 0.5]", self.tda.gain)));
        }
        if self.correlations.is_empty() {
            return Err(Error::Config("no correlation kinds".into()));
        }
        self.permutation.validate()
    }

    /// Hex sha256 of the canonical JSON form, ignoring the output directory.
    pub fn fingerprint(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output");
        }
        // serde_json maps are ordered by key, so this is canonical
        let canonical = serde_json::to_string(&v).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Short stable hash of arbitrary text.
pub(crate) fn hash_text(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..16])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_ignores_output_and_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output = PathBuf::from("elsewhere");
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        let json = serde_json::to_string(&a).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.fingerprint(), a.fingerprint());
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let mut c = ExperimentConfig::default();
        c.permutation.fractions = vec![0.0, 1.5];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.grid.repeats = 0;
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
        let partial: ExperimentConfig = serde_json::from_str(r#"{"seed": 7, "pgi": {"m": 4}}"#).unwrap();
        assert_eq!(partial.pgi.m, 4);
        assert_eq!(partial.pgi.max_rows, 1000);
    }

    #[test]
    fn load_resolves_paths_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(
            &p,
            r#"{"dataset": {"synthetic": {"n_features": 3}}, "grid": {"import_dir": "imp"}, "output": "out"}"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&p).unwrap();
        assert_eq!(cfg.output, dir.path().join("out"));
        assert_eq!(cfg.grid.import_dir, Some(dir.path().join("imp")));
        assert_eq!(cfg.dataset, DatasetSource::Synthetic(SyntheticSpec::new(1000, 3, 0)));
        std::fs::write(&p, r#"{"outptu": "x"}"#).unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(Error::Config(_))));
    }
}
