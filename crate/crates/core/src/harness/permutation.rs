use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{hash_text, ExperimentConfig, PermutationBnd};
use super::pipeline::{ablation_config_for, lens, pgi_config_for, write_json, Pipeline, RunSummary, Stage};
use crate::attribution::{AttributionTable, Method};
use crate::error::{Error, Result};
use crate::metrics::{abc, ablation_curve, pgi, Metric};
use crate::model::Architecture;
use crate::scalar::Scalar;
use crate::seed;
use crate::tda::{bnd_from_matrix, bottleneck, diagram, distance_matrix, PersistenceDiagram};

/// Cyclically shifts `⌊fraction·n⌋` seeded rows among themselves, so every
/// chosen row moves and the rest stay put. For a fixed seed the chosen sets
/// are nested in `fraction`.
pub fn permute_rows<T: Scalar>(table: &AttributionTable<T>, fraction: f64, seed_value: u64) -> Result<AttributionTable<T>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("fraction {fraction} outside [0, 1]")));
    }
    let n = table.n_rows();
    let count = (fraction * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed_value, "permute-rows")));
    let chosen = &order[..count];
    let mut out = table.clone();
    if count >= 2 {
        for (i, &dst) in chosen.iter().enumerate() {
            let src = chosen[(i + 1) % count];
            out.values.row_mut(dst).assign(&table.values.row(src));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationRow {
    pub fraction: f64,
    pub metric: Metric,
    pub repeat: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationResult {
    pub fractions: Vec<f64>,
    pub repeats: usize,
    pub resolution: usize,
    pub rows: Vec<PermutationRow>,
}

impl PermutationResult {
    /// Values of one metric and repeat, in fraction order.
    pub fn series(&self, metric: Metric, repeat: usize) -> Vec<f64> {
        self.fractions
            .iter()
            .map(|&f| {
                self.rows
                    .iter()
                    .find(|r| r.metric == metric && r.repeat == repeat && r.fraction == f)
                    .map_or(f64::NAN, |r| r.value)
            })
            .collect()
    }

    /// Mean over repeats, in fraction order.
    pub fn mean_series(&self, metric: Metric) -> Vec<f64> {
        let mut acc = vec![0.0; self.fractions.len()];
        for r in 0..self.repeats {
            for (a, v) in acc.iter_mut().zip(self.series(metric, r)) {
                *a += v;
            }
        }
        acc.into_iter().map(|v| v / self.repeats as f64).collect()
    }

    fn write(&self, path: &std::path::Path) -> Result<()> {
        super::pipeline::ensure_parent(path)?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["fraction", "metric", "repeat", "value"])?;
        for r in &self.rows {
            w.write_record([r.fraction.to_string(), r.metric.to_string(), r.repeat.to_string(), r.value.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn read(path: &std::path::Path, fractions: Vec<f64>, repeats: usize, resolution: usize) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for rec in rd.deserialize() {
            let row: PermutationRow = rec?;
            rows.push(row);
        }
        Ok(PermutationResult {
            fractions,
            repeats,
            resolution,
            rows,
        })
    }
}

/// Scores row-permuted ground-truth tables of the logistic model with PGI,
/// ABC and BND. Inputs and predictions stay aligned; only attributions move.
///
/// Runs the linear grid through the TDA stage first. Repeat `r` permutes
/// that repeat's ground-truth table, scores it with the grid's metric seeds
/// and measures BND at the grid's selected resolution, so fraction 0
/// reproduces the grid scores exactly.
pub fn run_permutation_experiment(cfg: &ExperimentConfig) -> Result<(PermutationResult, RunSummary)> {
    let arch = Architecture::Linear;
    let mut lin = cfg.clone();
    lin.architectures = vec![arch];
    let mut pipe = Pipeline::new(lin)?;
    pipe.run_until(Stage::Tda)?;
    let (choice, res_fp) = pipe
        .resolution(arch)
        .map(|(c, f)| (c.clone(), f.to_string()))
        .ok_or_else(|| Error::IncompleteGrid("the linear grid has no selected resolution".into()))?;
    let model = pipe.model(arch).expect("resolution implies a model");
    let ds = pipe.dataset().expect("synth ran");
    let pc = &cfg.permutation;
    let repeats = cfg.grid.repeats;

    let cells = pipe.cells(arch);
    let mut families = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let family: Vec<&AttributionTable<f64>> = cells
            .iter()
            .filter(|(c, _)| c.repeat == r)
            .map(|(_, t)| *t)
            .collect::<Option<_>>()
            .ok_or_else(|| Error::IncompleteGrid(format!("linear repeat {r} is missing tables")))?;
        let gt = family
            .iter()
            .position(|t| t.method == Method::GroundTruth)
            .ok_or_else(|| Error::Config("the linear grid has no ground-truth candidate".into()))?;
        families.push((family, gt));
    }

    let pgi_cfgs: Vec<_> = (0..repeats).map(|r| pgi_config_for(cfg, arch.as_str(), r)).collect();
    let abl_cfgs: Vec<_> = (0..repeats).map(|r| ablation_config_for(cfg, arch.as_str(), r)).collect();
    let fp = hash_text(&[
        "permutation",
        &res_fp,
        &serde_json::to_string(pc)?,
        &serde_json::to_string(&pgi_cfgs)?,
        &serde_json::to_string(&abl_cfgs)?,
    ]);
    let bundle = pipe.bundle().clone();
    let (csv_path, res_path) = (bundle.permutation(), bundle.permutation_resolution());
    let permute_seed = seed::derive(cfg.seed, "permutation/rows");
    let res_key = format!("tda/{arch}/resolution");

    let mut computed = None;
    pipe.cell("permutation", &[csv_path.clone(), res_path.clone()], &fp, &[&res_key], || {
        let tables: Vec<Vec<AttributionTable<f64>>> = families
            .iter()
            .enumerate()
            .map(|(r, (family, gt))| {
                pc.fractions
                    .iter()
                    .map(|&f| permute_rows(family[*gt], f, seed::derive_index(permute_seed, r as u64)))
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;
        let lens = lens(model, ds)?;
        let mcfg = cfg.tda.mapper(choice.resolution);

        let jobs: Vec<(usize, usize)> = (0..repeats).flat_map(|r| (0..pc.fractions.len()).map(move |f| (r, f))).collect();
        let perturbation: Vec<(f64, f64)> = jobs
            .par_iter()
            .map(|&(r, f)| {
                let t = &tables[r][f];
                let ctx = |e: Error| e.context(format!("fraction {} repeat {r}", pc.fractions[f]));
                let p = pgi(model, ds, t, &pgi_cfgs[r]).map_err(ctx)?;
                let a = abc(&ablation_curve(model, ds, t, &abl_cfgs[r]).map_err(ctx)?);
                Ok((p, a))
            })
            .collect::<Result<_>>()?;
        let mut bnd = Vec::with_capacity(repeats);
        for (r, permuted) in tables.iter().enumerate() {
            let diagrams: Vec<PersistenceDiagram<f64>> = permuted
                .par_iter()
                .map(|t| diagram(t.values.view(), &lens, &mcfg))
                .collect::<Result<_>>()?;
            let (family, gt) = &families[r];
            bnd.push(match pc.bnd {
                PermutationBnd::Candidates => {
                    let others: Vec<PersistenceDiagram<f64>> = family
                        .par_iter()
                        .map(|t| diagram(t.values.view(), &lens, &mcfg))
                        .collect::<Result<_>>()?;
                    diagrams
                        .iter()
                        .map(|d| against_candidates(&others, *gt, d))
                        .collect::<Result<_>>()?
                }
                PermutationBnd::Family => bnd_from_matrix(&distance_matrix(&diagrams))?,
                PermutationBnd::Reference => {
                    let reference = diagram(family[*gt].values.view(), &lens, &mcfg)?;
                    diagrams.iter().map(|d| bottleneck(d, &reference)).collect()
                }
            });
        }
        let mut out = Vec::new();
        for (fi, &fraction) in pc.fractions.iter().enumerate() {
            for metric in Metric::ALL {
                for r in 0..repeats {
                    let (p, a) = perturbation[r * pc.fractions.len() + fi];
                    let value = match metric {
                        Metric::Pgi => p,
                        Metric::Abc => a,
                        Metric::Bnd => bnd[r][fi],
                    };
                    out.push(PermutationRow {
                        fraction,
                        metric,
                        repeat: r,
                        value,
                    });
                }
            }
        }
        let result = PermutationResult {
            fractions: pc.fractions.clone(),
            repeats,
            resolution: choice.resolution,
            rows: out,
        };
        result.write(&csv_path)?;
        write_json(&res_path, &choice)?;
        computed = Some(result);
        Ok(())
    })?;
    let result = match computed {
        Some(r) => r,
        None => PermutationResult::read(&csv_path, pc.fractions.clone(), repeats, choice.resolution)?,
    };
    Ok((result, pipe.summary()))
}

/// BND of `d` standing in for candidate `slot`: the same row mean the grid
/// computes, with pair orientation kept.
fn against_candidates(diagrams: &[PersistenceDiagram<f64>], slot: usize, d: &PersistenceDiagram<f64>) -> Result<f64> {
    let n = diagrams.len();
    let mut m = Array2::<f64>::zeros((n, n));
    for (j, o) in diagrams.iter().enumerate() {
        if j == slot {
            continue;
        }
        let v = if j < slot { bottleneck(o, d) } else { bottleneck(d, o) };
        m[[slot, j]] = v;
        m[[j, slot]] = v;
    }
    Ok(bnd_from_matrix(&m)?[slot])
}
