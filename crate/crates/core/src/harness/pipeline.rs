use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{hash_text, DatasetSource, ExperimentConfig};
use crate::attribution::{explained_rows, export_table, import_table, AttributionTable, GridCell, GridSpec, Method};
use crate::data::{generate_synthetic, load_csv, read_schema, write_csv, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{abc, ablation_curve, pgi, AblationConfig, AblationCurve, Metric, MetricScore, PgiConfig};
use crate::model::{load_model, save_model, train, Architecture, DenseModel, TrainConfig};
use crate::rank::{agreement, mean_agreement, rank_candidates, rank_per_repeat, write_report, AgreementMatrix, CorrelationKind, Ranking};
use crate::seed;
use crate::tda::{bnd_from_matrix, build_mapper, distance_matrix, persistence, select_resolution, MapperGraph, PersistenceDiagram, ResolutionChoice};

/// Pipeline stages in execution order. Running a stage runs everything
/// upstream of it, reusing up-to-date outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Train,
    Explain,
    Score,
    Tda,
    Rank,
    Report,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

/// What a run did. Kept out of the bundle so reruns stay byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub computed: Vec<String>,
    pub skipped: Vec<String>,
    pub failures: Vec<CellFailure>,
}

impl RunSummary {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Default)]
struct Ledger {
    recomputed: BTreeSet<String>,
    computed: Vec<String>,
    skipped: Vec<String>,
    failures: Vec<CellFailure>,
}

/// Bundle paths.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub root: PathBuf,
    pub name: String,
}

impl Bundle {
    pub fn new(root: impl Into<PathBuf>, name: impl Into<String>) -> Self {
        Bundle {
            root: root.into(),
            name: name.into(),
        }
    }

    pub fn data_csv(&self) -> PathBuf {
        self.root.join("data").join(format!("{}.csv", self.name))
    }

    pub fn data_schema(&self) -> PathBuf {
        self.root.join("data").join(format!("{}.schema.json", self.name))
    }

    pub fn model(&self, arch: Architecture) -> PathBuf {
        self.root.join("models").join(format!("{}_{arch}.json", self.name))
    }

    pub fn table_dir(&self, arch: Architecture) -> PathBuf {
        self.root.join("attributions").join(format!("{}_{arch}", self.name))
    }

    pub fn table(&self, arch: Architecture, cell: &GridCell) -> PathBuf {
        self.table_dir(arch).join(format!("{}.csv", cell.stem()))
    }

    pub fn score(&self, arch: Architecture, cell: &GridCell, metric: Metric) -> PathBuf {
        self.root
            .join("scores")
            .join(format!("{}_{arch}", self.name))
            .join(format!("{}__{metric}.json", cell.stem()))
    }

    pub fn resolution(&self, arch: Architecture) -> PathBuf {
        self.root.join("tda").join(format!("{}_{arch}_resolution.json", self.name))
    }

    pub fn bnd(&self, arch: Architecture, repeat: usize) -> PathBuf {
        self.root.join("tda").join(format!("{}_{arch}_bnd_r{repeat}.json", self.name))
    }

    /// Persistence points of every candidate in one repeat.
    pub fn diagrams(&self, arch: Architecture, repeat: usize) -> PathBuf {
        self.root.join("tda").join(format!("{}_{arch}_diagrams_r{repeat}.csv", self.name))
    }

    pub fn graphs(&self, arch: Architecture, repeat: usize) -> PathBuf {
        self.root.join("tda").join(format!("{}_{arch}_graphs_r{repeat}.json", self.name))
    }

    pub fn rank_dir(&self) -> PathBuf {
        self.root.join("rank")
    }

    pub fn agreement(&self, arch: Architecture) -> PathBuf {
        self.rank_dir().join(format!("{}_{arch}_agreement.json", self.name))
    }

    pub fn permutation(&self) -> PathBuf {
        self.root.join("permutation").join(format!("{}_permutation.csv", self.name))
    }

    pub fn permutation_resolution(&self) -> PathBuf {
        self.root.join("permutation").join(format!("{}_permutation_resolution.json", self.name))
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

fn fp_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".fp");
    PathBuf::from(s)
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<S: serde::de::DeserializeOwned>(path: &Path) -> Result<S> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn json<S: Serialize>(v: &S) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn file_digest(path: &Path) -> String {
    match fs::read(path) {
        Ok(bytes) => hex::encode(&Sha256::digest(&bytes)[..16]),
        Err(_) => "absent".into(),
    }
}

/// Stored result of one PGI or ABC cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub score: MetricScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<AblationCurve>,
}

/// Stored BND result for one (architecture, repeat).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BndFile {
    pub resolution: usize,
    pub candidates: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub scores: Vec<MetricScore>,
}

#[derive(Serialize, Deserialize)]
struct GraphsFile {
    resolution: usize,
    candidates: Vec<String>,
    graphs: Vec<MapperGraph<f64>>,
}

fn write_diagrams(path: &Path, candidates: &[String], diagrams: &[PersistenceDiagram<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["candidate", "kind", "birth", "death"])?;
    for (c, d) in candidates.iter().zip(diagrams) {
        for p in &d.points {
            w.write_record([c.as_str(), p.kind.as_str(), &p.birth.to_string(), &p.death.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementEntry {
    pub reading: String,
    pub kind: CorrelationKind,
    pub metrics: Vec<Metric>,
    pub matrix: Vec<Vec<f64>>,
    pub min_off_diagonal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSummary {
    pub architecture: Architecture,
    pub tables: usize,
    pub resolution: Option<usize>,
    /// Correlation kinds whose off-diagonal entries all exceed the threshold.
    pub agreement_anomalies: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_fingerprint: String,
    pub datasets: Vec<String>,
    pub dataset_hash: String,
    pub architectures: Vec<ArchSummary>,
    pub metrics: Vec<Metric>,
    pub correlation_kinds: Vec<CorrelationKind>,
    pub agreement_threshold: f64,
    pub anomaly: bool,
    pub failures: Vec<CellFailure>,
}

/// Builds the (standardized, optionally noise-augmented) dataset a config
/// describes. Deterministic in the master seed.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset<f64>> {
    let raw: Dataset<f64> = match &cfg.dataset {
        DatasetSource::Synthetic(spec) => {
            let mut spec = spec.clone();
            spec.seed = seed::derive(cfg.seed, "synthetic");
            generate_synthetic(&spec)?
        }
        DatasetSource::Csv { data, schema } => {
            let (schema, label) = read_schema(schema)?;
            load_csv(data, schema, &label, &cfg.name, seed::derive(cfg.seed, "split"))?
        }
    };
    let raw = raw.standardize();
    let ds = if cfg.random_features > 0 {
        raw.inject_random_features(cfg.random_features, seed::derive(cfg.seed, "random-features"))?
    } else {
        raw
    };
    Ok(ds)
}

/// Per-architecture grid spec with derived seed and import directory.
pub fn grid_spec_for(cfg: &ExperimentConfig, arch: Architecture) -> GridSpec {
    let mut g = cfg.grid.clone();
    g.seed = seed::derive(seed::derive(cfg.seed, "grid"), arch.as_str());
    g.import_dir = cfg.grid.import_dir.as_ref().map(|d| d.join(arch.as_str()));
    g
}

pub fn train_config_for(cfg: &ExperimentConfig, arch: Architecture) -> TrainConfig {
    TrainConfig {
        seed: seed::derive(seed::derive(cfg.seed, "train"), arch.as_str()),
        ..cfg.train.clone()
    }
}

/// PGI config for one repeat; all candidates of a repeat share its draws.
pub fn pgi_config_for(cfg: &ExperimentConfig, site: &str, repeat: usize) -> PgiConfig {
    let mut p = cfg.pgi.clone();
    p.perturb.seed = seed::derive_index(seed::derive(cfg.seed, &format!("pgi/{site}")), repeat as u64);
    p
}

pub fn ablation_config_for(cfg: &ExperimentConfig, site: &str, repeat: usize) -> AblationConfig {
    let mut a = cfg.ablation.clone();
    a.perturb.seed = seed::derive_index(seed::derive(cfg.seed, &format!("ablation/{site}")), repeat as u64);
    a
}

/// Prediction lens over the explained rows.
pub fn lens(model: &DenseModel<f64>, ds: &Dataset<f64>) -> Result<Vec<f64>> {
    let rows = explained_rows(ds);
    Ok(model.predict_batch(ds.rows(&rows).view())?.to_vec())
}

struct ArchState {
    arch: Architecture,
    model: Option<(DenseModel<f64>, String)>,
    cells: Vec<GridCell>,
    /// Index-aligned with `cells`.
    tables: Vec<Option<(AttributionTable<f64>, String)>>,
    scores: Vec<MetricScore>,
    resolution: Option<(ResolutionChoice, String)>,
}

/// A resumable run over one experiment config.
pub struct Pipeline {
    cfg: ExperimentConfig,
    bundle: Bundle,
    ledger: Mutex<Ledger>,
    data: Option<(Dataset<f64>, String)>,
    archs: Vec<ArchState>,
    done: BTreeSet<Stage>,
    summaries: Vec<Option<ArchSummary>>,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let bundle = Bundle::new(cfg.output.clone(), cfg.name.clone());
        Ok(Pipeline {
            cfg,
            bundle,
            ledger: Mutex::new(Ledger::default()),
            data: None,
            archs: Vec::new(),
            done: BTreeSet::new(),
            summaries: Vec::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn bundle(&self) -> &Bundle {
        &self.bundle
    }

    pub fn summary(&self) -> RunSummary {
        let l = self.ledger.lock().expect("ledger lock");
        RunSummary {
            computed: l.computed.clone(),
            skipped: l.skipped.clone(),
            failures: l.failures.clone(),
        }
    }

    fn fail(&self, cell: &str, e: &Error) {
        let mut l = self.ledger.lock().expect("ledger lock");
        l.failures.push(CellFailure {
            cell: cell.to_string(),
            error: e.to_string(),
        });
    }

    /// Runs `work` unless every output exists, the stored fingerprint matches
    /// and no upstream cell was recomputed in this run. Returns whether the
    /// cell is usable (fresh or reused) and whether it was recomputed.
    pub(crate) fn cell(&self, key: &str, outputs: &[PathBuf], fp: &str, upstream: &[&str], work: impl FnOnce() -> Result<()>) -> Result<bool> {
        let primary = &outputs[0];
        let fresh = {
            let l = self.ledger.lock().expect("ledger lock");
            !upstream.iter().any(|u| l.recomputed.contains(*u))
        } && outputs.iter().all(|p| p.is_file())
            && fs::read_to_string(fp_path(primary)).map(|s| s.trim() == fp).unwrap_or(false);
        if fresh {
            self.ledger.lock().expect("ledger lock").skipped.push(key.to_string());
            return Ok(false);
        }
        let _ = fs::remove_file(fp_path(primary));
        for p in outputs {
            ensure_parent(p)?;
        }
        match work() {
            Ok(()) => {
                fs::write(fp_path(primary), format!("{fp}\n")).map_err(|e| Error::io(fp_path(primary), e))?;
                let mut l = self.ledger.lock().expect("ledger lock");
                l.recomputed.insert(key.to_string());
                l.computed.push(key.to_string());
                Ok(true)
            }
            Err(e) => Err(e.context(key.to_string())),
        }
    }

    /// Runs every stage up to and including `stage`. Stages already run by
    /// this pipeline are not repeated.
    pub fn run_until(&mut self, stage: Stage) -> Result<RunSummary> {
        self.synth()?;
        let pending = |done: &BTreeSet<Stage>, s: Stage| s <= stage && !done.contains(&s);
        if pending(&self.done, Stage::Train) {
            self.prepare_archs()?;
            for i in 0..self.archs.len() {
                self.train_arch(i);
            }
            self.done.insert(Stage::Train);
        }
        if pending(&self.done, Stage::Explain) {
            for i in 0..self.archs.len() {
                self.explain_arch(i)?;
            }
            self.done.insert(Stage::Explain);
        }
        if pending(&self.done, Stage::Score) {
            for i in 0..self.archs.len() {
                self.score_arch(i)?;
            }
            self.done.insert(Stage::Score);
        }
        if pending(&self.done, Stage::Tda) {
            for i in 0..self.archs.len() {
                self.tda_arch(i)?;
            }
            self.done.insert(Stage::Tda);
        }
        if pending(&self.done, Stage::Rank) {
            self.summaries = (0..self.archs.len()).map(|i| self.rank_arch(i)).collect::<Result<_>>()?;
            self.done.insert(Stage::Rank);
        }
        if pending(&self.done, Stage::Report) {
            self.write_manifest(self.summaries.clone())?;
            self.done.insert(Stage::Report);
        }
        Ok(self.summary())
    }

    pub fn dataset(&self) -> Option<&Dataset<f64>> {
        self.data.as_ref().map(|(d, _)| d)
    }

    pub fn model(&self, arch: Architecture) -> Option<&DenseModel<f64>> {
        self.archs.iter().find(|a| a.arch == arch)?.model.as_ref().map(|(m, _)| m)
    }

    pub fn model_fingerprint(&self, arch: Architecture) -> Option<&str> {
        self.archs.iter().find(|a| a.arch == arch)?.model.as_ref().map(|(_, f)| f.as_str())
    }

    pub fn tables(&self, arch: Architecture) -> Vec<&AttributionTable<f64>> {
        self.archs
            .iter()
            .find(|a| a.arch == arch)
            .map(|a| a.tables.iter().flatten().map(|(t, _)| t).collect())
            .unwrap_or_default()
    }

    /// Selected resolution with its cell fingerprint, once the TDA stage ran.
    pub fn resolution(&self, arch: Architecture) -> Option<(&ResolutionChoice, &str)> {
        let st = self.archs.iter().find(|a| a.arch == arch)?;
        st.resolution.as_ref().map(|(c, f)| (c, f.as_str()))
    }

    /// Grid cells with their tables, if present.
    pub fn cells(&self, arch: Architecture) -> Vec<(&GridCell, Option<&AttributionTable<f64>>)> {
        self.archs
            .iter()
            .find(|a| a.arch == arch)
            .map(|a| a.cells.iter().zip(&a.tables).map(|(c, t)| (c, t.as_ref().map(|(t, _)| t))).collect())
            .unwrap_or_default()
    }

    pub fn scores(&self, arch: Architecture) -> &[MetricScore] {
        self.archs.iter().find(|a| a.arch == arch).map(|a| a.scores.as_slice()).unwrap_or(&[])
    }

    pub(crate) fn synth(&mut self) -> Result<()> {
        if self.data.is_some() {
            return Ok(());
        }
        let ds = build_dataset(&self.cfg)?;
        let fp = hash_text(&["data", &ds.hash()]);
        let (csv, schema) = (self.bundle.data_csv(), self.bundle.data_schema());
        self.cell("data", &[csv.clone(), schema.clone()], &fp, &[], || write_csv(&ds, &csv, &schema))?;
        self.data = Some((ds, fp));
        Ok(())
    }

    fn data(&self) -> (&Dataset<f64>, &str) {
        let (d, f) = self.data.as_ref().expect("synth stage ran");
        (d, f)
    }

    fn prepare_archs(&mut self) -> Result<()> {
        if !self.archs.is_empty() {
            return Ok(());
        }
        for &arch in &self.cfg.architectures {
            let cells = grid_spec_for(&self.cfg, arch).cells(arch)?;
            self.archs.push(ArchState {
                arch,
                model: None,
                tables: vec![None; cells.len()],
                cells,
                scores: Vec::new(),
                resolution: None,
            });
        }
        Ok(())
    }

    /// Trains (or reloads) one architecture's model. Usable on its own for
    /// architectures outside the configured list.
    pub(crate) fn ensure_model(&self, arch: Architecture) -> Result<(DenseModel<f64>, String)> {
        let (ds, data_fp) = self.data();
        let tc = train_config_for(&self.cfg, arch);
        let fp = hash_text(&["model", data_fp, arch.as_str(), &json(&tc)]);
        let key = format!("model/{arch}");
        let path = self.bundle.model(arch);
        let mut trained = None;
        let recomputed = self.cell(&key, std::slice::from_ref(&path), &fp, &["data"], || {
            let m = train(ds, &tc, arch)?;
            save_model(&m, &path)?;
            trained = Some(m);
            Ok(())
        })?;
        let model = match trained {
            Some(m) if recomputed => m,
            _ => load_model(&path)?,
        };
        if model.input_dim() != ds.n_features() || model.architecture() != arch {
            return Err(Error::Integrity(format!("{} does not fit the dataset", path.display())));
        }
        Ok((model, fp))
    }

    fn train_arch(&mut self, i: usize) {
        if self.archs[i].model.is_some() {
            return;
        }
        let arch = self.archs[i].arch;
        match self.ensure_model(arch) {
            Ok(m) => self.archs[i].model = Some(m),
            Err(e) => self.fail(&format!("model/{arch}"), &e),
        }
    }

    fn explain_arch(&mut self, i: usize) -> Result<()> {
        let st = &self.archs[i];
        let arch = st.arch;
        let Some((model, model_fp)) = st.model.as_ref() else {
            return Ok(());
        };
        if st.tables.iter().all(Option::is_some) {
            return Ok(());
        }
        let (ds, _) = self.data();
        let spec = grid_spec_for(&self.cfg, arch);
        let spec_json = {
            let mut s = spec.clone();
            s.import_dir = None;
            json(&s)
        };
        let model_key = format!("model/{arch}");
        let results: Vec<Option<(AttributionTable<f64>, String)>> = st
            .cells
            .par_iter()
            .map(|cell| {
                let key = format!("attr/{arch}/{}", cell.stem());
                let path = self.bundle.table(arch, cell);
                let mut fp_parts = vec!["attr".to_string(), model_fp.clone(), spec_json.clone(), json(cell)];
                if let (Method::Imported(label), Some(b), Some(dir)) =
                    (&cell.method, cell.baseline_kind, spec.import_dir.as_ref())
                {
                    fp_parts.push(file_digest(&dir.join(label).join(format!("{b}_r{}.csv", cell.repeat))));
                }
                let parts: Vec<&str> = fp_parts.iter().map(String::as_str).collect();
                let fp = hash_text(&parts);
                let mut fresh = None;
                let out = self
                    .cell(&key, std::slice::from_ref(&path), &fp, &[&model_key], || {
                        let t = spec.generate_cell(ds, model, cell)?;
                        export_table(&t, &path)?;
                        fresh = Some(t);
                        Ok(())
                    })
                    .and_then(|_| match fresh {
                        Some(t) => Ok(t),
                        None => {
                            let t = import_table::<f64>(&path, explained_rows(ds).len(), ds.n_features())?;
                            if t.dataset_hash != ds.hash() {
                                return Err(Error::Integrity(format!("{} belongs to another dataset", path.display())));
                            }
                            Ok(t)
                        }
                    });
                match out {
                    Ok(t) => Some((t, fp)),
                    Err(e) => {
                        self.fail(&key, &e);
                        None
                    }
                }
            })
            .collect();
        self.archs[i].tables = results;
        Ok(())
    }

    fn score_arch(&mut self, i: usize) -> Result<()> {
        let st = &self.archs[i];
        let arch = st.arch;
        let Some((model, _)) = st.model.as_ref() else {
            return Ok(());
        };
        let (ds, _) = self.data();
        let jobs: Vec<(usize, Metric)> = (0..st.cells.len())
            .filter(|&c| st.tables[c].is_some())
            .flat_map(|c| [(c, Metric::Pgi), (c, Metric::Abc)])
            .collect();
        let scores: Vec<Option<MetricScore>> = jobs
            .par_iter()
            .map(|&(c, metric)| {
                let cell = &st.cells[c];
                let (table, table_fp) = st.tables[c].as_ref().expect("filtered");
                let table_key = format!("attr/{arch}/{}", cell.stem());
                let key = format!("score/{arch}/{}/{metric}", cell.stem());
                let path = self.bundle.score(arch, cell, metric);
                let pgi_cfg = pgi_config_for(&self.cfg, arch.as_str(), cell.repeat);
                let abl_cfg = ablation_config_for(&self.cfg, arch.as_str(), cell.repeat);
                let cfg_json = match metric {
                    Metric::Pgi => json(&pgi_cfg),
                    _ => json(&abl_cfg),
                };
                let fp = hash_text(&["score", table_fp, metric.as_str(), &cfg_json]);
                let out = self
                    .cell(&key, std::slice::from_ref(&path), &fp, &[&table_key], || {
                        let file = match metric {
                            Metric::Pgi => ScoreFile {
                                score: MetricScore::new(metric, pgi(model, ds, table, &pgi_cfg)?, table, fp.clone()),
                                curve: None,
                            },
                            _ => {
                                let curve = ablation_curve(model, ds, table, &abl_cfg)?;
                                ScoreFile {
                                    score: MetricScore::new(metric, abc(&curve), table, fp.clone()),
                                    curve: Some(curve),
                                }
                            }
                        };
                        write_json(&path, &file)
                    })
                    .and_then(|_| read_json::<ScoreFile>(&path))
                    .and_then(|f| {
                        if f.score.metric != metric || f.score.candidate() != cell.candidate() || f.score.repeat != cell.repeat {
                            return Err(Error::Integrity(format!("{} holds another cell", path.display())));
                        }
                        Ok(f.score)
                    });
                match out {
                    Ok(s) => Some(s),
                    Err(e) => {
                        self.fail(&key, &e);
                        None
                    }
                }
            })
            .collect();
        self.archs[i].scores = scores.into_iter().flatten().collect();
        Ok(())
    }

    fn tda_arch(&mut self, i: usize) -> Result<()> {
        let arch = self.archs[i].arch;
        if self.archs[i].model.is_none() {
            return Ok(());
        }
        let res = {
            let st = &self.archs[i];
            let (model, _) = st.model.as_ref().expect("checked");
            let (ds, _) = self.data();
            self.resolution_cell(st, model, ds)
        };
        let (choice, res_fp) = match res {
            Ok(r) => r,
            Err(e) => {
                self.fail(&format!("tda/{arch}/resolution"), &e);
                return Ok(());
            }
        };
        let mut bnd_scores = Vec::new();
        for r in 0..self.cfg.grid.repeats {
            let key = format!("tda/{arch}/bnd_r{r}");
            match self.bnd_cell(&self.archs[i], r, choice.resolution, &res_fp) {
                Ok(s) => bnd_scores.extend(s),
                Err(e) => self.fail(&key, &e),
            }
        }
        let st = &mut self.archs[i];
        st.scores.extend(bnd_scores);
        st.resolution = Some((choice, res_fp));
        Ok(())
    }

    fn resolution_cell(&self, st: &ArchState, model: &DenseModel<f64>, ds: &Dataset<f64>) -> Result<(ResolutionChoice, String)> {
        let arch = st.arch;
        if st.tables.iter().any(Option::is_none) {
            return Err(Error::IncompleteGrid("attribution tables missing for resolution selection".into()));
        }
        let mut tcfg = self.cfg.tda.clone();
        tcfg.seed = seed::derive(seed::derive(self.cfg.seed, "tda"), arch.as_str());
        let mut parts = vec!["resolution".to_string(), json(&tcfg)];
        parts.extend(st.tables.iter().flatten().map(|(_, f)| f.clone()));
        let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
        let fp = hash_text(&refs);
        let key = format!("tda/{arch}/resolution");
        let path = self.bundle.resolution(arch);
        let upstream: Vec<String> = st.cells.iter().map(|c| format!("attr/{arch}/{}", c.stem())).collect();
        let up: Vec<&str> = upstream.iter().map(String::as_str).collect();
        self.cell(&key, std::slice::from_ref(&path), &fp, &up, || {
            let clouds: Vec<Array2<f64>> = st.tables.iter().flatten().map(|(t, _)| t.values.clone()).collect();
            let choice = select_resolution(&clouds, &lens(model, ds)?, &tcfg)?;
            write_json(&path, &choice)
        })?;
        Ok((read_json(&path)?, fp))
    }

    fn bnd_cell(&self, st: &ArchState, repeat: usize, resolution: usize, res_fp: &str) -> Result<Vec<MetricScore>> {
        let arch = st.arch;
        let (model, _) = st.model.as_ref().expect("model present");
        let (ds, _) = self.data();
        let members: Vec<usize> = (0..st.cells.len()).filter(|&c| st.cells[c].repeat == repeat).collect();
        let mut parts = vec!["bnd".to_string(), res_fp.to_string(), resolution.to_string()];
        parts.extend(members.iter().map(|&c| st.tables[c].as_ref().map(|(_, f)| f.clone()).unwrap_or_default()));
        let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
        let fp = hash_text(&refs);
        let key = format!("tda/{arch}/bnd_r{repeat}");
        let path = self.bundle.bnd(arch, repeat);
        let (dpath, gpath) = (self.bundle.diagrams(arch, repeat), self.bundle.graphs(arch, repeat));
        let res_key = format!("tda/{arch}/resolution");
        self.cell(&key, &[path.clone(), dpath.clone(), gpath.clone()], &fp, &[&res_key], || {
            let tables: Vec<&AttributionTable<f64>> = members
                .iter()
                .map(|&c| st.tables[c].as_ref().map(|(t, _)| t))
                .collect::<Option<_>>()
                .ok_or_else(|| Error::IncompleteGrid(format!("repeat {repeat} is missing tables")))?;
            let lens = lens(model, ds)?;
            let mcfg = self.cfg.tda.mapper(resolution);
            let graphs: Vec<MapperGraph<f64>> = tables
                .par_iter()
                .map(|t| build_mapper(t.values.view(), &lens, &mcfg))
                .collect::<Result<_>>()?;
            let diagrams: Vec<PersistenceDiagram<f64>> = graphs.iter().map(persistence).collect::<Result<_>>()?;
            let m = distance_matrix(&diagrams);
            let values = bnd_from_matrix(&m)?;
            let candidates: Vec<String> = tables.iter().map(|t| t.candidate()).collect();
            write_diagrams(&dpath, &candidates, &diagrams)?;
            write_json(&gpath, &GraphsFile { resolution, candidates: candidates.clone(), graphs })?;
            let file = BndFile {
                resolution,
                candidates,
                matrix: m.outer_iter().map(|r| r.to_vec()).collect(),
                scores: tables
                    .iter()
                    .zip(values)
                    .map(|(t, v)| MetricScore::new(Metric::Bnd, v, t, fp.clone()))
                    .collect(),
            };
            write_json(&path, &file)
        })?;
        let file: BndFile = read_json(&path)?;
        Ok(file.scores)
    }

    fn rank_arch(&mut self, i: usize) -> Result<Option<ArchSummary>> {
        let st = &self.archs[i];
        let arch = st.arch;
        let key = format!("rank/{arch}");
        let summary = |anomalies: Vec<String>| ArchSummary {
            architecture: arch,
            tables: st.tables.iter().flatten().count(),
            resolution: st.resolution.as_ref().map(|(c, _)| c.resolution),
            agreement_anomalies: anomalies,
        };
        match self.rank_cell(st) {
            Ok(anomalies) => Ok(Some(summary(anomalies))),
            Err(e) => {
                self.fail(&key, &e);
                Ok(Some(summary(Vec::new())))
            }
        }
    }

    fn rank_cell(&self, st: &ArchState) -> Result<Vec<String>> {
        let arch = st.arch;
        let prefix = format!("{}_{arch}", self.bundle.name);
        let mut by_metric: BTreeMap<Metric, Vec<MetricScore>> = BTreeMap::new();
        for s in &st.scores {
            by_metric.entry(s.metric).or_default().push(s.clone());
        }
        let mut rankings: Vec<Ranking> = Vec::new();
        let mut per_repeat: BTreeMap<usize, Vec<Ranking>> = BTreeMap::new();
        for metric in Metric::ALL {
            let scores = by_metric
                .get(&metric)
                .ok_or_else(|| Error::IncompleteGrid(format!("no {metric} scores")))?;
            if scores.len() != st.cells.len() {
                return Err(Error::IncompleteGrid(format!(
                    "{} of {} {metric} scores present",
                    scores.len(),
                    st.cells.len()
                )));
            }
            rankings.push(rank_candidates(scores)?);
            for (r, ranking) in rank_per_repeat(scores)? {
                per_repeat.entry(r).or_default().push(ranking);
            }
        }
        let mut fps: Vec<&str> = st.scores.iter().map(|s| s.fingerprint.as_str()).collect();
        fps.sort_unstable();
        let kinds_json = json(&self.cfg.correlations);
        let threshold = self.cfg.agreement_threshold.to_string();
        let mut parts = vec!["rank", prefix.as_str(), kinds_json.as_str(), threshold.as_str()];
        parts.extend(fps);
        let fp = hash_text(&parts);
        let agreement_path = self.bundle.agreement(arch);
        let upstream: Vec<String> = st
            .cells
            .iter()
            .flat_map(|c| [Metric::Pgi, Metric::Abc].map(|m| format!("score/{arch}/{}/{m}", c.stem())))
            .chain((0..self.cfg.grid.repeats).map(|r| format!("tda/{arch}/bnd_r{r}")))
            .collect();
        let up: Vec<&str> = upstream.iter().map(String::as_str).collect();
        self.cell(&format!("rank/{arch}"), std::slice::from_ref(&agreement_path), &fp, &up, || {
            let of_means = agreement(&rankings)?;
            let repeats: Vec<AgreementMatrix> = per_repeat.values().map(|r| agreement(r)).collect::<Result<_>>()?;
            let mean_of_repeats = mean_agreement(&repeats)?;
            let readings = [("ranked_means", &of_means), ("mean_of_repeats", &mean_of_repeats)];
            let mut entries = Vec::new();
            for (label, m) in readings {
                for &kind in &self.cfg.correlations {
                    entries.push(AgreementEntry {
                        reading: label.to_string(),
                        kind,
                        metrics: m.metrics.clone(),
                        matrix: m.get(kind).outer_iter().map(|r| r.to_vec()).collect(),
                        min_off_diagonal: m.min_off_diagonal(kind).unwrap_or(1.0),
                    });
                }
            }
            write_report(&self.bundle.rank_dir(), &prefix, &rankings, &readings)?;
            write_json(&agreement_path, &entries)
        })?;
        let entries: Vec<AgreementEntry> = read_json(&agreement_path)?;
        Ok(entries
            .iter()
            .filter(|e| e.reading == "ranked_means" && e.min_off_diagonal > self.cfg.agreement_threshold)
            .map(|e| e.kind.to_string())
            .collect())
    }

    fn write_manifest(&self, archs: Vec<Option<ArchSummary>>) -> Result<()> {
        let (ds, _) = self.data();
        let architectures: Vec<ArchSummary> = archs.into_iter().flatten().collect();
        let anomaly = architectures.iter().any(|a| !a.agreement_anomalies.is_empty());
        let mut failures = self.summary().failures;
        failures.sort_by(|a, b| a.cell.cmp(&b.cell));
        let manifest = Manifest {
            config_fingerprint: self.cfg.fingerprint(),
            datasets: vec![self.bundle.name.clone()],
            dataset_hash: ds.hash(),
            architectures,
            metrics: Metric::ALL.to_vec(),
            correlation_kinds: self.cfg.correlations.clone(),
            agreement_threshold: self.cfg.agreement_threshold,
            anomaly,
            failures,
        };
        write_json(&self.bundle.manifest(), &manifest)
    }
}

/// Full grid: data, models, tables, scores, TDA, rankings and manifest.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<RunSummary> {
    Pipeline::new(cfg.clone())?.run_until(Stage::Report)
}
