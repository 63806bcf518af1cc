use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use scot_core::matching::Strategy;
use scot_core::scot::Combiner;

mod analyze;
mod config;
mod masks;
mod output;
mod score;
mod synth;
mod track;

use config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "scot", version, about = "Score, track and synthesize building footprint time series")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-AOI work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    iou_threshold: Option<f64>,
    /// harmonic, arithmetic or weighted:<w>.
    #[arg(long, global = true)]
    combiner: Option<Combiner>,
    #[arg(long, global = true)]
    tol_frames: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score proposal series against ground truth.
    Score {
        gt: PathBuf,
        proposals: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Model name recorded in the report.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        strategy: Option<Strategy>,
    },
    /// Turn probability cubes into proposal series.
    Track {
        /// An AOI directory holding a cube, or a root of such directories.
        input: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_aois: Option<usize>,
        /// Also write perturbed proposals (needs a `perturb` config group).
        #[arg(long)]
        proposals_out: Option<PathBuf>,
    },
    /// Render footprint / boundary / contact masks from labels.
    Masks {
        /// An AOI directory or a root of AOI directories.
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Mask size when no cube header is present.
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
    },
    /// Feature, correlation, area-recall and change-versus-track tables.
    Analyze {
        /// Report files or directories holding `report.json`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Ground truth and proposals for the area recall curve.
        #[arg(long, requires = "proposals")]
        gt: Option<PathBuf>,
        #[arg(long, requires = "gt")]
        proposals: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Baseline,
    Collapse,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::Collapse => "collapse",
        })
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut cfg = RunConfig::load(g.config.as_deref())?;
    cfg.apply(&Overrides { seed: g.seed, iou_threshold: g.iou_threshold, combiner: g.combiner, tol_frames: g.tol_frames });
    if let Command::Score { strategy: Some(s), .. } = &cli.command {
        cfg.score.matching.strategy = *s;
    }
    if let Command::Synth { n_aois: Some(n), .. } = &cli.command {
        cfg.synth.n_aois = *n;
    }
    cfg.validate().context("invalid configuration")?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(g.jobs).build().context("building thread pool")?;
    pool.install(|| match cli.command {
        Command::Score { gt, proposals, out, model, .. } => score::run(&cfg, &gt, &proposals, &out, model),
        Command::Track { input, method, out } => track::run(&cfg, &input, method, &out),
        Command::Synth { out, proposals_out, .. } => synth::run(&cfg, &out, proposals_out.as_deref()),
        Command::Masks { labels, out, width, height } => masks::run(&cfg, &labels, &out, width.zip(height)),
        Command::Analyze { reports, out, gt, proposals, svg } => {
            analyze::run(&cfg, &reports, &out, gt.as_deref().zip(proposals.as_deref()), svg)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
