use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod plot;
mod run;
mod sweep;

/// Exit status for invalid configuration, options or input files.
pub const EXIT_CONFIG: u8 = 2;
/// Exit status for a simulation that stopped on a fault.
pub const EXIT_FAULT: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "bearing-servo",
    version,
    about = "Bearing-angle visual servo tracking simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its trajectory.
    Run(RunOptions),
    /// Render SVG figures from a trajectory CSV.
    Plot(PlotOptions),
    /// Run the Cartesian product of a parameter grid in parallel.
    Sweep(SweepOptions),
}

#[derive(Debug, Args)]
pub struct RunOptions {
    /// `paper` for the built-in scenario, or a path to a JSON scenario file.
    #[arg(long, default_value = "paper")]
    pub scenario: String,
    /// Output directory. Defaults to `<output root>/<scenario name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root used when `--out` is not given.
    #[arg(long, env = "BEARING_SERVO_OUTPUT_ROOT", default_value = "runs")]
    pub output_root: PathBuf,
    /// Override the noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Disable measurement noise.
    #[arg(long)]
    pub no_noise: bool,
    /// Feed the differenced `ẇ_d` forward in the control law.
    #[arg(long)]
    pub include_wd_dot: bool,
    /// Simulated time in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Physics step in seconds.
    #[arg(long)]
    pub dt_physics: Option<f64>,
    /// Control step in seconds.
    #[arg(long)]
    pub dt_control: Option<f64>,
    /// Also write the SVG figures next to the trajectory.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct PlotOptions {
    /// Trajectory CSV written by `run`.
    pub csv: PathBuf,
    /// Directory for the SVG files. Defaults to the CSV's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepOptions {
    /// Base scenario: `paper` or a JSON scenario file.
    #[arg(long, default_value = "paper")]
    pub scenario: String,
    /// JSON object mapping dotted parameter paths to value lists.
    #[arg(long)]
    pub grid: PathBuf,
    /// Output directory. Defaults to `<output root>/sweep`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "BEARING_SERVO_OUTPUT_ROOT", default_value = "runs")]
    pub output_root: PathBuf,
    /// Also write the SVG figures into each cell directory.
    #[arg(long)]
    pub plot: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Run(opts) => run::cmd_run(&opts),
        Command::Plot(opts) => plot::cmd_plot(&opts),
        Command::Sweep(opts) => sweep::cmd_sweep(&opts),
    };
    ExitCode::from(status)
}
