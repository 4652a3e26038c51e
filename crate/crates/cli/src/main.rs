//! `nsconc`: design → datum → correlation → flow → far-field pipelines.
//!
//! Exit codes: 0 when every check passes, 1 when a check or a stage fails,
//! 2 for usage and validation errors (nothing is written in that case).

mod commands;
mod manifest;
mod pipeline;
mod stages;

use clap::{Args, Parser, Subcommand};
use manifest::{CliError, Tolerances};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "nsconc", version, about = "Concentration–diffusion cycles of oscillating Navier–Stokes data")]
pub struct Cli {
    /// TOML pipeline configuration; subcommand flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory; must not already contain a run manifest.
    #[arg(long, global = true, default_value = "nsconc-out")]
    pub out_dir: PathBuf,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Override a named tolerance, e.g. `--tolerance remainder=0.2`.
    #[arg(long = "tolerance", global = true, value_name = "KEY=VALUE")]
    pub tolerances: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the sign-change design for a list of times.
    Design(DesignArgs),
    /// Build the datum from a design and assemble it on a grid.
    BuildDatum(BuildDatumArgs),
    /// Evaluate E(a)(t) by the closed rule and the lattice oracle.
    Correlate(CorrelateArgs),
    /// Run the flow and record the moment matrix K(t).
    Simulate(SimulateArgs),
    /// Classify the far-field decay from a moments CSV.
    Farfield(FarfieldArgs),
    /// Heat flow of the slowly decaying plain and modulated data.
    Kato(KatoArgs),
    /// Run the full pipeline on the explicit example.
    ReproduceExample(ReproduceArgs),
    /// Run design → fields → correlation → nsflow → farfield from `--config`.
    Pipeline,
}

#[derive(Args, Debug, Default)]
pub struct DesignArgs {
    /// Comma-separated increasing times.
    #[arg(long)]
    pub times: Option<String>,
    /// File with whitespace- or comma-separated times.
    #[arg(long)]
    pub times_file: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Right-hand side; omitted normalizes max|mu| to 1.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub dimension: Option<u8>,
    /// `rule` or `example`.
    #[arg(long)]
    pub directions: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct GridArgs {
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BuildDatumArgs {
    /// A `design.toml` written by `design`.
    #[arg(long, conflicts_with = "datum")]
    pub design: Option<PathBuf>,
    /// An existing `datum.toml` to re-assemble.
    #[arg(long)]
    pub datum: Option<PathBuf>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// `standard` or `quartic`.
    #[arg(long)]
    pub profile: Option<String>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub datum: PathBuf,
    /// Adds the E_app column and the sign-change checks.
    #[arg(long)]
    pub design: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub t_start: f64,
    /// Defaults to t_N + t_1 with a design, 1 otherwise.
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub datum: PathBuf,
    /// Supplies the expected zero times, ε, and the defaults for dt and t_end.
    #[arg(long)]
    pub design: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Amplitude; defaults to the datum's own.
    #[arg(long, conflicts_with = "calibrate")]
    pub eta: Option<f64>,
    /// Choose the amplitude by calibration.
    #[arg(long)]
    pub calibrate: bool,
    #[arg(long)]
    pub target_fraction: Option<f64>,
    /// Keep every n-th step as a checkpoint (0: only the ends).
    #[arg(long, default_value_t = 0)]
    pub snapshot_stride: usize,
}

#[derive(Args, Debug)]
pub struct FarfieldArgs {
    #[arg(long)]
    pub moments: PathBuf,
    /// Extra comma-separated times to classify.
    #[arg(long)]
    pub times: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub offset: f64,
    #[arg(long, default_value_t = nsconc::farfield::DEFAULT_SPHERE_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = nsconc::farfield::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Args, Debug)]
pub struct KatoArgs {
    /// `plain` or `modulated`.
    #[arg(long, default_value = "plain")]
    pub kind: String,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Ray direction, normalized internally.
    #[arg(long, default_value = "0.48,0.64,0.6")]
    pub ray: String,
    #[arg(long, default_value_t = 100.0)]
    pub r_min: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub r_max: f64,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Exponent of the partial norms; defaults to 1 (plain) or 2 (modulated).
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    /// `2d` or `3d`.
    #[arg(long, default_value = "2d")]
    pub which: String,
    /// Skip calibration and use this amplitude.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => {
            println!("all checks passed; artifacts in {}", cli.out_dir.display());
            ExitCode::SUCCESS
        }
        Ok(false) => {
            eprintln!("some checks failed; see {}", cli.out_dir.join(manifest::MANIFEST).display());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.usage { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let tolerances = Tolerances::with_overrides(&cli.tolerances)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("arguments", "--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::run("arguments", e))?;
    }
    let config = cli
        .config
        .as_deref()
        .map(|p| nsconc::config::PipelineConfig::load(p).map_err(|e| CliError::usage("config", format!("{}: {e}", p.display()))))
        .transpose()?;
    commands::dispatch(cli, config, tolerances)
}
