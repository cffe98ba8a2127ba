//! Command-line grammar. Frequencies are in Hz, angles in units of pi,
//! times in seconds.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "nhbloch", version, about = "Simulate and fit non-Hermitian two-level dynamics")]
pub struct Cli {
    /// Run every data-parallel stage on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a trajectory table (t, mx, my, mz, purity).
    Simulate(SimulateArgs),
    /// Fit the decay model to a measured table.
    Fit(FitArgs),
    /// Compare two trajectories: model names or files.
    Compare(CompareArgs),
    /// Thermal polarization and equilibrium state.
    Thermal(ThermalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetName {
    Tpp,
    Dsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    Analytic,
    OdeBloch,
    OdeDensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Field, decay and grid settings shared by `simulate` and `compare`.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Parameter set supplying defaults for everything below.
    #[arg(long, value_enum, default_value = "tpp")]
    pub preset: PresetName,

    /// Drive (nutation) frequency, Hz. Default: the preset's model drive.
    #[arg(long)]
    pub rabi_hz: Option<f64>,

    /// rf phase in units of pi; 1.5 puts the drive along +y.
    #[arg(long, default_value_t = 1.5, allow_hyphen_values = true)]
    pub phi: f64,

    /// Larmor minus carrier frequency, Hz.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub offset_hz: f64,

    /// Fast decay rate, 1/s.
    #[arg(long, conflicts_with = "delta_over_mu")]
    pub delta: Option<f64>,

    /// Slow rate, 1/s.
    #[arg(long, conflicts_with = "mu_over_omega1")]
    pub mu: Option<f64>,

    /// Slow rate relative to the preset's measured nutation frequency.
    #[arg(long)]
    pub mu_over_omega1: Option<f64>,

    /// Set delta from mu.
    #[arg(long)]
    pub delta_over_mu: Option<f64>,

    /// Residual Bloch radius.
    #[arg(long)]
    pub nu: Option<f64>,

    /// Coherent evolution only.
    #[arg(long, conflicts_with_all = ["delta", "mu", "mu_over_omega1", "delta_over_mu", "nu"])]
    pub no_decay: bool,

    /// End of the time grid, s.
    #[arg(long, default_value_t = 500e-6)]
    pub t_max: f64,

    /// Number of grid points, including t = 0.
    #[arg(long, default_value_t = 251)]
    pub samples: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "analytic")]
    pub model: ModelName,

    #[command(flatten)]
    pub model_args: ModelArgs,

    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,

    /// Standard deviation of additive Gaussian noise on every component.
    #[arg(long)]
    pub noise: Option<f64>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output file; stdout when absent or `-`.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Table with header `t,mx,my,mz` (CSV) or a JSON trajectory.
    pub input: PathBuf,

    /// Hold delta/mu fixed; without a value, 11.5.
    #[arg(long, num_args = 0..=1, default_missing_value = "11.5")]
    pub fix_ratio: Option<f64>,

    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,

    /// Seed of the noise realisation, recorded in the result.
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Model name (analytic, ode-bloch, ode-density) or file.
    pub first: String,
    /// Model name (analytic, ode-bloch, ode-density) or file.
    pub second: String,

    #[command(flatten)]
    pub model_args: ModelArgs,

    /// Emit the report as JSON.
    #[arg(long)]
    pub json: bool,

    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ThermalArgs {
    #[arg(long, default_value_t = 161.973e6)]
    pub larmor_hz: f64,

    /// Kelvin.
    #[arg(long, default_value_t = 297.15)]
    pub temperature: f64,

    #[arg(long, short)]
    pub output: Option<PathBuf>,
}
