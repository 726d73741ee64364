//! `setmatch`: prepare data, draw negatives, split, score baselines, train
//! and evaluate set-matching models.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use setmatch_core::embeddings::N2vMode;
use setmatch_core::models::Arch;
use setmatch_core::sampling::NegativeMode;

#[derive(Parser, Debug)]
#[command(
    name = "setmatch",
    version,
    about = "Bipartite hyperedge prediction as set matching"
)]
pub struct Cli {
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true, env = "SETMATCH_SEED")]
    pub seed: Option<u64>,
    /// Repetitions run in parallel (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load, filter and canonicalise a dataset.
    Prepare(PrepareArgs),
    /// Write a planted-matching synthetic dataset.
    Synth(SynthArgs),
    /// Draw negatives and write a labelled sample list.
    Sample(SampleArgs),
    /// Stratified train/test (or train/val/test) splits of a sample list.
    Split(SplitArgs),
    /// Score graph and embedding baselines.
    Baseline(BaselineArgs),
    /// Run the repeated-split training protocol.
    Train(ExperimentArgs),
    /// Score a sample list with a checkpoint.
    Eval(EvalArgs),
    /// Learning curves of a report as CSV.
    Curves(CurvesArgs),
    /// Train over a grid of dimensions and learning rates.
    Grid(GridArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub left_labels: Option<PathBuf>,
    #[arg(long)]
    pub right_labels: Option<PathBuf>,
    /// Filter spec as JSON (`occurrence`, `size`, `time`).
    #[arg(long)]
    pub filter: Option<PathBuf>,
    #[arg(long)]
    pub min_occurrence: Option<usize>,
    #[arg(long)]
    pub max_occurrence: Option<usize>,
    #[arg(long)]
    pub min_size: Option<usize>,
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long, requires = "t_max")]
    pub t_min: Option<i64>,
    #[arg(long, requires = "t_min")]
    pub t_max: Option<i64>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    #[arg(long, default_value_t = 200)]
    pub nodes: usize,
    #[arg(long, default_value_t = 400)]
    pub positives: usize,
    #[arg(long, default_value_t = 2)]
    pub min_size: usize,
    #[arg(long, default_value_t = 4)]
    pub max_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_mode, default_value = "per_fixed")]
    pub mode: NegativeMode,
    #[arg(long, default_value_t = 5.0)]
    pub ratio: f64,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.2")]
    pub proportions: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Score this sample list against the whole dataset instead of running
    /// the repeated-split protocol.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Scores CSV for `--samples` mode.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Restrict graph baselines to one algorithm (`cn` or `aa`).
    #[arg(long)]
    pub algo: Option<String>,
    /// Restrict graph baselines to one aggregate (`min`, `max`, `avg`).
    #[arg(long)]
    pub agg: Option<String>,
    /// Also score node2vec baselines at this dimension.
    #[arg(long)]
    pub n2v_dim: Option<usize>,
    #[arg(long, value_parser = parse_n2v_mode)]
    pub n2v_mode: Option<N2vMode>,
}

#[derive(Args, Debug, Default)]
pub struct ExperimentArgs {
    /// JSON run config; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<Arch>,
    /// Feature and attention dimension.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<NegativeMode>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub proportions: Option<Vec<f64>>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Fixed node feature table instead of per-repetition walk embeddings.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub walks_per_node: Option<usize>,
    #[arg(long)]
    pub walk_length: Option<usize>,
    #[arg(long)]
    pub walk_epochs: Option<usize>,
    /// Score graph baselines alongside the model.
    #[arg(long)]
    pub graph_baselines: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Feature table, when the checkpoint carries none.
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CurvesArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the mean test AUC over the last N epochs instead.
    #[arg(long)]
    pub tail: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    pub dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.0001,0.001,0.01")]
    pub lrs: Vec<f64>,
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    s.parse().map_err(|e: setmatch_core::Error| e.to_string())
}

fn parse_n2v_mode(s: &str) -> Result<N2vMode, String> {
    s.parse().map_err(|e: setmatch_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<NegativeMode, String> {
    match s.replace('-', "_").as_str() {
        "per_fixed" => Ok(NegativeMode::PerFixed),
        "sized_random" => Ok(NegativeMode::SizedRandom),
        _ => Err(format!(
            "unknown negative mode {s:?} (per_fixed, sized_random)"
        )),
    }
}

fn error_json(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<setmatch_core::Error>())
        .map_or("cli", setmatch_core::Error::kind);
    let chain: Vec<String> = err.chain().map(ToString::to_string).collect();
    serde_json::json!({
        "error": kind,
        "message": chain.join(": "),
    })
    .to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
