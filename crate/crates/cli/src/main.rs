use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ricci_ib::Error;

mod bench;
mod curvature;
mod report;
mod train;

/// Curvature-guided graph structure learning toolkit.
#[derive(Debug, Parser)]
#[command(name = "ricci-ib", version, about)]
struct Cli {
    /// Worker threads for seed fan-out and curvature batches (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-edge curvature of a graph plus a 40-bin histogram.
    Curvature(CurvatureArgs),
    /// Full bi-level training run.
    Train(TrainArgs),
    /// Export the learned structure of a finished run.
    Rewire(RewireArgs),
    /// Accuracy under edge noise against the GCN control.
    DenoiseBench(BenchArgs),
    /// Finite-difference audit of the differentiable pieces.
    Gradcheck(GradcheckArgs),
    /// Learning curves and a summary table of a run directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CurvatureKind {
    Exact,
    Surrogate,
}

#[derive(Debug, Args)]
struct CurvatureArgs {
    /// Edge list, one `src dst` pair per line.
    #[arg(long)]
    edges: PathBuf,
    /// Laziness of the neighborhood measures.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = CurvatureKind::Exact)]
    method: CurvatureKind,
    /// Node features; fixes the node count and feeds the encoder.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Run directory written by `train` (surrogate method only).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Hop radius searched for transport costs (exact method only).
    #[arg(long, default_value_t = 3)]
    radius_cap: usize,
    #[arg(long, env = "RICCI_IB_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// TOML config, or a manifest.json whose echoed config is reused.
    #[arg(long)]
    config: PathBuf,
    /// Extra `key=value` config entries, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Replicates with consecutive seeds starting at the configured one.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long, env = "RICCI_IB_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RewireArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Keep candidates with `pi >= threshold` instead of the stored sample.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, env = "RICCI_IB_OUT")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Gcn,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Dataset reference; overrides the config's `dataset`.
    #[arg(long)]
    dataset: Option<String>,
    /// TOML config for the training hyperparameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
    ratios: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "add,remove")]
    modes: Vec<String>,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, value_enum, default_value_t = Baseline::Gcn)]
    baseline: Baseline,
    /// Seed of the noise injection.
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    #[arg(long, env = "RICCI_IB_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Comma-separated case names; all cases when omitted.
    #[arg(long, value_delimiter = ',')]
    cases: Vec<String>,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, env = "RICCI_IB_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directory written by `train` (single or multi-seed).
    #[arg(long)]
    run: PathBuf,
    #[arg(long, env = "RICCI_IB_OUT")]
    out: PathBuf,
}

/// Reads a text input, naming the path on failure.
fn read_input(path: &std::path::Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// 2 usage or config, 3 data and artifacts, 4 numeric failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::NumericAbort { .. } | Error::NonFinite(_) | Error::Domain { .. } | Error::Shape { .. } => 4,
        Error::Parse { .. }
        | Error::Data(_)
        | Error::HashMismatch { .. }
        | Error::Checkpoint(_)
        | Error::NodeOutOfRange { .. }
        | Error::Disconnected(_)
        | Error::Io(_)
        | Error::Json(_) => 3,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Curvature(a) => curvature::run(a),
        Command::Train(a) => train::run(a),
        Command::Rewire(a) => train::rewire(a),
        Command::DenoiseBench(a) => bench::run(a),
        Command::Gradcheck(a) => bench::gradcheck(a),
        Command::Report(a) => report::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
