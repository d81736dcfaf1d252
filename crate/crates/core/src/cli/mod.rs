//! The `olat-relight` command line.
//!
//! Every subcommand is a thin driver over the library. Images are PFM or PNG
//! chosen by extension, weights and manifests are JSON, job settings are a
//! `key = value` file (see [`JobConfig`]).

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub use config::{JobConfig, OutputFormat};
pub use manifest::{load_field_dir, Dataset, DatasetManifest, WeightsFile};

pub const JOBS_ENV: &str = "OLAT_RELIGHT_JOBS";

#[derive(Debug, Parser)]
#[command(
    name = "olat-relight",
    version,
    about = "Relight video frames with an OLAT reflectance field"
)]
pub struct Cli {
    /// Worker threads for batch commands [default: all cores]
    #[arg(long, global = true, env = JOBS_ENV)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unwrap a mirror-ball photo into a lat-long environment map
    Probe(ProbeArgs),
    /// Project an environment onto the dataset's light footprints
    Project(ProjectArgs),
    /// Render a field under a weights file or an environment
    Relight(RelightArgs),
    /// Fit the dual-gamma curve against an interview frame
    GammaFit(GammaFitArgs),
    /// Write synthetic tracking frames for every exemplar pose
    Synth(SynthArgs),
    /// Estimate a reflectance field for each video frame
    Estimate(EstimateArgs),
    /// Generate a synthetic light-stage dataset
    Simulate(SimulateArgs),
    /// Print the reconstruction, rendering and combined losses
    Loss(LossArgs),
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Lat-long height; the width is twice this
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    /// Ball center in pixels [default: largest circle inscribed in the image]
    #[arg(long, requires_all = ["center_y", "radius"])]
    pub center_x: Option<f64>,
    #[arg(long, requires_all = ["center_x", "radius"])]
    pub center_y: Option<f64>,
    #[arg(long, requires_all = ["center_x", "center_y"])]
    pub radius: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Lat-long environment, same size as the manifest's probes
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RelightArgs {
    /// Dataset whose basis OLATs are relit; also supplies footprints for --env
    #[arg(long, required_unless_present = "field")]
    pub manifest: Option<PathBuf>,
    /// Directory of olat_* images, e.g. one frame written by `estimate`
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long, required_unless_present = "env", conflicts_with = "env")]
    pub weights: Option<PathBuf>,
    #[arg(long, requires = "manifest")]
    pub env: Option<PathBuf>,
    /// Linearize the OLATs first: `g1,g2` or a gamma-fit output file
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GammaFitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Interview frame [default: the manifest's first frame]
    #[arg(long)]
    pub frame: Option<PathBuf>,
    /// [default: the manifest's mask for the first frame, else all ones]
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the result here
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Interview lighting
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Frames to process [default: the manifest's frames]
    #[arg(long, action = ArgAction::Append)]
    pub frame: Vec<PathBuf>,
    /// One per --frame
    #[arg(long, action = ArgAction::Append)]
    pub mask: Vec<PathBuf>,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value_t = 41)]
    pub basis_count: usize,
    /// Side of the square subject images
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 32)]
    pub env_height: usize,
    #[arg(long, default_value_t = 3)]
    pub poses: usize,
    #[arg(long, default_value_t = 3)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.8)]
    pub gamma1: f64,
    #[arg(long, default_value_t = 1.1)]
    pub gamma2: f64,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Directory of predicted olat_* images
    #[arg(long)]
    pub prediction: PathBuf,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long)]
    pub frame: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// The clap command with short `-h`/`-V` removed: every flag is long-form.
pub fn command() -> clap::Command {
    Cli::command()
        .disable_help_flag(true)
        .disable_version_flag(true)
        .mut_subcommands(|s| s.disable_help_flag(true))
        .arg(
            Arg::new("help")
                .long("help")
                .action(ArgAction::Help)
                .global(true)
                .help("Print help"),
        )
        .arg(
            Arg::new("version")
                .long("version")
                .action(ArgAction::Version)
                .help("Print version"),
        )
}

pub fn parse_from<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command().try_get_matches_from(args)?;
    Cli::from_arg_matches(&matches)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().context("starting worker pool")?;
    pool.install(|| commands::dispatch(cli.command))
}

/// Parses the process arguments, runs, and reports errors on stderr.
pub fn main_entry() -> ExitCode {
    let cli = match parse_from(std::env::args_os()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
