//! Command-line front end for the sample-placement pipeline.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 bad config.

// `!(x > 0.0)` also rejects NaN, which is the intent throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::Config;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] frost_brdf::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "frost-brdf",
    version,
    about = "BRDF sample placement and reconstruction"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Default directory for outputs not given explicitly.
    #[arg(long, global = true, env = "FROST_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus of analytic materials as MERL files.
    GenCorpus(GenCorpusArgs),
    /// Train the PCA dictionary bundle from a corpus directory.
    TrainDict(TrainDictArgs),
    /// Choose sample directions against a dictionary bundle.
    SelectSamples(SelectArgs),
    /// Recover a full BRDF from measurements at a stored support.
    Reconstruct(ReconstructArgs),
    /// Cross-validated comparison against random sampling.
    Evaluate(EvaluateArgs),
    /// Cumulative coherence of a dictionary and the error bound's applicability.
    Coherence(CoherenceArgs),
    /// Error-versus-samples series from an evaluation directory, as CSV.
    Series(SeriesArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Cube size, or three comma-separated bin counts.
    #[arg(long, value_parser = parse_resolution)]
    pub resolution: Option<[usize; 3]>,
}

#[derive(Debug, Args)]
pub struct TrainDictArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Atoms kept; defaults to the configured k or the largest sample count.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub dict: PathBuf,
    /// Sample budget; defaults to the largest configured count.
    #[arg(long)]
    pub m: Option<usize>,
    /// Stop once the squared residual drops to this value.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub support: PathBuf,
    /// Fully measured MERL file; only the support cells are read for the fit.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub eta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// MERL corpus directory; a synthetic corpus is generated when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CoherenceArgs {
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    /// Directory written by `evaluate`.
    #[arg(long)]
    pub report: PathBuf,
}

fn parse_resolution(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [n] => Ok([n; 3]),
        [a, b, c] => Ok([a, b, c]),
        _ => Err("expected N or A,B,C".into()),
    }
}

/// Parses `argv` (including the program name), runs it and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.global.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(dir) = &cli.global.out_dir {
        config.output.dir = Some(dir.clone());
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.global.threads {
            if n == 0 {
                return Err(CliError::Config("--threads must be >= 1".into()));
            }
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::Runtime(e.to_string()))?
    };
    pool.install(|| commands::execute(cli.command, config))
}
