//! `faithbench` command line.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use faithbench::harness::{
    run_permutation_experiment, with_workers, worker_count, ExperimentConfig, PermutationBnd, Pipeline, RunSummary, Stage,
};
use faithbench::metrics::Metric;
use faithbench::model::Architecture;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "faithbench", version, about = "Attribution faithfulness benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the dataset and write it into the bundle.
    Synth(Common),
    /// Train the configured models.
    Train(Common),
    /// Generate attribution tables.
    Explain(Common),
    /// Score tables with PGI and ABC.
    Score(Common),
    /// Select the mapper resolution and compute BND.
    Tda(Common),
    /// Rank candidates and correlate metrics.
    Rank(Common),
    /// Row-permutation experiment on ground-truth tables.
    PermuteExp(PermuteArgs),
    /// Everything from data to the manifest.
    Grid(Common),
    /// Rankings, heatmaps and manifest (runs any stale upstream cells).
    Report(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config; defaults apply to absent fields.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output bundle directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Restrict to these architectures.
    #[arg(long = "arch", value_parser = parse_arch)]
    architectures: Vec<Architecture>,
    /// Worker threads; overrides FAITHBENCH_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct PermuteArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated fractions in [0, 1].
    #[arg(long, value_delimiter = ',')]
    fractions: Vec<f64>,
    /// `candidates`, `family` or `reference`.
    #[arg(long, value_parser = parse_bnd)]
    bnd: Option<PermutationBnd>,
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown architecture `{s}`"))
}

fn parse_bnd(s: &str) -> Result<PermutationBnd, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown BND mode `{s}`"))
}

impl Common {
    fn load(&self) -> faithbench::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.repeats {
            cfg.grid.repeats = r;
        }
        if !self.architectures.is_empty() {
            cfg.architectures = self.architectures.clone();
        }
        Ok(cfg)
    }
}

fn report(summary: &RunSummary) -> i32 {
    println!(
        "computed {} cells, reused {}, failed {}",
        summary.computed.len(),
        summary.skipped.len(),
        summary.failures.len()
    );
    for f in &summary.failures {
        eprintln!("failed {}: {}", f.cell, f.error);
    }
    if summary.is_success() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    }
}

fn stage_of(cmd: &Command) -> Option<Stage> {
    Some(match cmd {
        Command::Synth(_) => Stage::Synth,
        Command::Train(_) => Stage::Train,
        Command::Explain(_) => Stage::Explain,
        Command::Score(_) => Stage::Score,
        Command::Tda(_) => Stage::Tda,
        Command::Rank(_) => Stage::Rank,
        Command::Grid(_) | Command::Report(_) => Stage::Report,
        Command::PermuteExp(_) => return None,
    })
}

/// Parses `argv` (program name first) and runs it, returning the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (common, perm) = match &cli.command {
        Command::PermuteExp(p) => (&p.common, Some(p)),
        Command::Synth(c)
        | Command::Train(c)
        | Command::Explain(c)
        | Command::Score(c)
        | Command::Tda(c)
        | Command::Rank(c)
        | Command::Grid(c)
        | Command::Report(c) => (c, None),
    };
    let mut cfg = match common.load() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Some(p) = perm {
        if !p.fractions.is_empty() {
            cfg.permutation.fractions = p.fractions.clone();
        }
        if let Some(b) = p.bnd {
            cfg.permutation.bnd = b;
        }
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let workers = match worker_count(common.workers) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let outcome = with_workers(workers, || match stage_of(&cli.command) {
        Some(stage) => Pipeline::new(cfg.clone()).and_then(|mut p| p.run_until(stage)).map(|s| report(&s)),
        None => run_permutation_experiment(&cfg).map(|(res, s)| {
            for m in Metric::ALL {
                let means: Vec<String> = res.mean_series(m).iter().map(|v| format!("{v:.6}")).collect();
                println!("{m}: {}", means.join(" "));
            }
            report(&s)
        }),
    });
    match outcome {
        Ok(Ok(code)) => code,
        Ok(Err(e)) | Err(e) => {
            eprintln!("error: {e}");
            EXIT_PARTIAL
        }
    }
}
