//! `waveshape` command-line driver.

mod commands;
mod run;
mod shapes;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use run::CliError;

#[derive(Parser, Debug)]
#[command(name = "waveshape", version, about = "Wavelet-domain implicit shape pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    /// Diffusion steps T.
    #[arg(long, default_value_t = waveshape::diffusion::DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, default_value_t = waveshape::diffusion::DEFAULT_BETA_START)]
    beta_start: f64,
    #[arg(long, default_value_t = waveshape::diffusion::DEFAULT_BETA_END)]
    beta_end: f64,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Model directory or its model.json.
    #[arg(long)]
    model: PathBuf,
    /// Fail unless the model files hash to this digest.
    #[arg(long)]
    model_digest: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum NoveltyMetric {
    Lfd,
    Cd,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a TSDF from a scene or mesh and decompose it.
    Prepare {
        #[arg(long, conflicts_with = "obj", required_unless_present = "obj")]
        scene: Option<PathBuf>,
        #[arg(long)]
        obj: Option<PathBuf>,
        #[arg(long, default_value_t = waveshape::tsdf::DEFAULT_RESOLUTION)]
        res: usize,
        #[arg(long, default_value_t = waveshape::wavelet::DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value = waveshape::wavelet::DEFAULT_BANK)]
        bank: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decompose a WSV1 volume into a WSP1 pyramid.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = waveshape::wavelet::DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value = waveshape::wavelet::DEFAULT_BANK)]
        bank: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Invert a WSP1 pyramid exactly.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct from the coarse volume and top detail only.
    ReconstructTruncated {
        #[arg(long)]
        input: PathBuf,
        /// Reference TSDF for the report (defaults to the exact reconstruction).
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble an oracle model from training shapes.
    BuildModel {
        /// Training shapes (.obj, scene .json or TSDF .wsv).
        #[arg(long = "input", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 32)]
        res: usize,
        #[arg(long, default_value_t = waveshape::wavelet::DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value = waveshape::wavelet::DEFAULT_BANK)]
        bank: String,
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        #[arg(long, default_value_t = waveshape::conditioning::DEFAULT_LATENT_LEN)]
        latent_len: usize,
        /// Pooling grid edge of the encoder.
        #[arg(long, default_value_t = 8)]
        pool: usize,
        #[arg(long, default_value_t = 0)]
        encoder_seed: u64,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample shapes from a model.
    Generate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Deterministic sampling over this many evenly spaced steps.
        #[arg(long)]
        ddim_steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover a latent code for a shape, optionally refined.
    Invert {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        no_refine: bool,
        #[arg(long, default_value_t = waveshape::conditioning::DEFAULT_ITERS)]
        iters: usize,
        #[arg(long, default_value_t = waveshape::conditioning::DEFAULT_LR)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        ddim_steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Whole-shape interpolation between two latent codes.
    Interpolate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        za: PathBuf,
        #[arg(long)]
        zb: PathBuf,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        ddim_steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a region manipulation plan.
    Manipulate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        model_digest: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Set metrics of generated meshes against reference meshes.
    Eval {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = waveshape::metrics::DEFAULT_SURFACE_SAMPLES)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the EMD-based metrics.
        #[arg(long)]
        no_emd: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nearest training shapes of each generated mesh.
    Novelty {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, value_enum, default_value_t = NoveltyMetric::Lfd)]
        metric: NoveltyMetric,
        #[arg(long, default_value_t = waveshape::metrics::DEFAULT_SURFACE_SAMPLES)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the noise schedule as CSV.
    Schedule {
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("WAVESHAPE_THREADS") {
        let n: usize =
            v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
                CliError::validation(format!("WAVESHAPE_THREADS must be a positive integer, got {v:?}"))
            })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::validation(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| commands::dispatch(cli.command, &args));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
