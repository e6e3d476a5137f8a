mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

/// Nodal surplus distributions of quantum graphs.
///
/// Every option can also be set through an environment variable with the
/// `NSL_` prefix; command-line flags take precedence over the environment.
#[derive(Debug, Parser)]
#[command(name = "nsl", version)]
struct Cli {
    /// Worker threads for sampling, root finding and sweeps. Results do not
    /// depend on this value.
    #[arg(long, global = true, env = "NSL_THREADS", default_value_t = default_threads())]
    threads: usize,

    /// Increase log verbosity (repeatable); RUST_LOG overrides it.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a graph from a family name and parameters, e.g. `mandarin 7`.
    Generate(GenerateArgs),
    /// Estimate the surplus distribution by sampling the secular manifold.
    Sample(SampleArgs),
    /// Compute the surplus sequence directly from the spectrum.
    Oracle(OracleArgs),
    /// Total variation between an oracle and a sampler output.
    Compare(CompareArgs),
    /// Run a family sweep and write the summary and figure tables.
    Sweep(SweepArgs),
    /// Print the edge orbits under graph automorphisms.
    Orbits(OrbitsArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Family and parameters: complete N, ladder N, lattice N, regular D N,
    /// erdos-renyi N P, stower LOOPS TAILS, mandarin M, dumbbell, lollipop,
    /// flower M.
    #[arg(required = true, num_args = 1..)]
    pub family: Vec<String>,
    /// Seed for the random families.
    #[arg(long, env = "NSL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(short, long, env = "NSL_GRAPH")]
    pub graph: PathBuf,
    /// Number of torus samples.
    #[arg(short = 'N', long, env = "NSL_SAMPLES", default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, env = "NSL_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated edge lengths used as weights.
    #[arg(long, env = "NSL_WEIGHTS", value_delimiter = ',', conflicts_with = "lengths_seed")]
    pub weights: Option<Vec<f64>>,
    /// Draw the weights uniformly from [1, 2] with this seed, matching `oracle --lengths-seed`.
    #[arg(long, env = "NSL_LENGTHS_SEED")]
    pub lengths_seed: Option<u64>,
    /// Also estimate the per-edge distributions of the orbit representatives.
    #[arg(long)]
    pub per_edge: bool,
    /// Estimate every edge separately instead of one per orbit.
    #[arg(long)]
    pub all_edges: bool,
    /// Fail with exit code 2 when more than this fraction of eigenpairs is discarded.
    #[arg(long, env = "NSL_MAX_DISCARD", default_value_t = 0.01)]
    pub max_discard: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleArgs {
    #[arg(short, long, env = "NSL_GRAPH")]
    pub graph: PathBuf,
    /// Seed for edge lengths drawn uniformly from [1, 2].
    #[arg(long, env = "NSL_LENGTHS_SEED", default_value_t = 0)]
    pub lengths_seed: u64,
    /// Comma-separated edge lengths; overrides the seed.
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<f64>>,
    /// Number of generic modes to collect.
    #[arg(long, env = "NSL_MODES", default_value_t = 2000)]
    pub modes: usize,
    /// Write the per-mode table (n, k, zero count, surplus) as CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Output of `nsl oracle`.
    pub oracle: PathBuf,
    /// Output of `nsl sample`.
    pub sample: PathBuf,
    /// Total variation below which the verdict is a pass.
    #[arg(long, env = "NSL_TOLERANCE", default_value_t = nsl_core::oracle::DEFAULT_COMPARE_TOLERANCE)]
    pub tolerance: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Graph list and budget: desk (nine graphs, beta <= 21) or paper (26 graphs).
    #[arg(long, env = "NSL_PRESET", default_value = "desk")]
    pub preset: String,
    /// Override the eigenpair budget per graph.
    #[arg(long, env = "NSL_BUDGET")]
    pub budget: Option<usize>,
    #[arg(long, env = "NSL_SEED")]
    pub seed: Option<u64>,
    /// Summary table as CSV.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Directory for ks.csv, variances.csv and normalized.csv.
    #[arg(long)]
    pub figures: Option<PathBuf>,
    /// Full sweep table with manifest as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OrbitsArgs {
    #[arg(short, long, env = "NSL_GRAPH")]
    pub graph: PathBuf,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Maps an error to the process exit code: 1 for bad input, 2 for numerical trouble.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<nsl_core::Error>() {
        Some(e) if !e.is_domain() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(1);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        log::warn!("could not size the global thread pool: {e}");
    }
    let threads = cli.threads;
    let run = match &cli.command {
        Command::Generate(a) => commands::generate(a, threads),
        Command::Sample(a) => commands::sample(a, threads),
        Command::Oracle(a) => commands::oracle(a, threads),
        Command::Compare(a) => commands::compare(a, threads),
        Command::Sweep(a) => commands::sweep(a, threads),
        Command::Orbits(a) => commands::orbits(a, threads),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
