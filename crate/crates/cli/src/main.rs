//! `latgeo`: generate datasets, train models, solve geodesics, sample fields
//! and run evaluation suites. Every command writes `manifest.json` into its
//! output directory. Exit codes: 0 success, 1 usage, 2 numeric, 3 IO.

mod commands;
mod failure;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use settings::Coords;

#[derive(Parser)]
#[command(name = "latgeo", version, about = "Latent-space geodesics of importance-weighted autoencoders")]
pub struct Cli {
    /// Flat `key=value` file; explicit flags take precedence over its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Default directory for datasets.
    #[arg(long, global = true, env = "LATGEO_DATA", default_value = "data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Generate(GenerateArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Solve geodesics between latent points or random sample pairs.
    Geodesic(GeodesicArgs),
    /// Sample a magnification-factor or graph-distance field on a latent grid.
    Field(FieldArgs),
    /// Run an evaluation suite and write a pass/fail report.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DatasetKind {
    Pendulum,
    Robot,
}

#[derive(Args)]
struct GenerateArgs {
    dataset: DatasetKind,
    /// Output directory [default: <data-dir>/<dataset>].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Pendulum images or robot training timesteps.
    #[arg(long)]
    count: Option<usize>,
    /// Robot validation timesteps.
    #[arg(long)]
    validation_count: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Pendulum image side in pixels.
    #[arg(long)]
    image_size: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset file; relative paths are also looked up under the data directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// pendulum, robot or mnist [default: inferred from the dataset name].
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Importance samples per data point.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Width of every hidden layer.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Use only the first rows of an MNIST file.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

/// Curve optimizer settings shared by `geodesic` and `eval`.
#[derive(Args)]
struct SolverArgs {
    /// Midpoint samples of the length integral.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Metric smoothing strength; enables smoothing.
    #[arg(long)]
    lambda: Option<f64>,
    /// Metric smoothing rank [default: latent dimension].
    #[arg(long)]
    rank: Option<usize>,
    /// Weight of the maximum velocity in the validation value.
    #[arg(long)]
    lambda_phi: Option<f64>,
    #[arg(long)]
    pretrain_curves: Option<usize>,
    /// Bézier segments of the pretraining curves.
    #[arg(long)]
    control_count: Option<usize>,
    #[arg(long)]
    fit_iters: Option<usize>,
    #[arg(long)]
    pretrain_points: Option<usize>,
    /// rescale or blend.
    #[arg(long)]
    normalization: Option<String>,
    /// Weight of the speed spread penalty that keeps the parametrization uniform.
    #[arg(long)]
    speed_weight: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GeodesicArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    z0: Option<Coords>,
    #[arg(long, allow_hyphen_values = true)]
    z1: Option<Coords>,
    /// Number of random sample pairs drawn from --data.
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Decoded frames per path (0 disables).
    #[arg(long)]
    frames: Option<usize>,
    /// Grid side of the graph oracle in pairs mode.
    #[arg(long)]
    oracle_resolution: Option<usize>,
    /// Skip the graph oracle in pairs mode.
    #[arg(long)]
    no_oracle: bool,
    /// Keep curves inside the padded bounding box of the encoded --data.
    #[arg(long)]
    confine: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FieldKindArg {
    Mf,
    Distance,
}

#[derive(Args)]
struct FieldArgs {
    kind: FieldKindArg,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Grid nodes per axis.
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    x_range: Option<Coords>,
    #[arg(long, allow_hyphen_values = true)]
    y_range: Option<Coords>,
    /// Dataset whose encoded bounding box sets the default window.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Source point of the distance field.
    #[arg(long, allow_hyphen_values = true)]
    source: Option<Coords>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// flat-metric, pendulum-ordering or robot-smoothness.
    #[arg(long)]
    suite: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    oracle_pairs: Option<usize>,
    #[arg(long)]
    oracle_resolution: Option<usize>,
    #[arg(long)]
    triangle_checks: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("latgeo: {f}");
            ExitCode::from(f.code())
        }
    }
}
