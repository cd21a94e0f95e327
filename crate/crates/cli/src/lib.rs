//! Batch pipelines behind the `levitrap` binary.
//!
//! Every command writes `manifest.json` into its output directory before any
//! other file, then JSON reports and CSV plot tables. Exit codes: 0 success,
//! 2 invalid input, 3 numerical failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use levitrap::{Axis, Error};

mod commands;
pub mod output;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Exit status for a failed command.
pub fn exit_code(err: &Error) -> u8 {
    if err.is_validation() || matches!(err, Error::Io(_)) {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

#[derive(Debug, Parser)]
#[command(name = "levitrap", version, about = "Levitated nanodiamond in an end-cap Paul trap")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "LEVITRAP_OUT", default_value = "levitrap-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the equations of motion and store the trajectory.
    Simulate(SimulateArgs),
    /// Transduce a stored trajectory, estimate its spectrum and fit a mode.
    Psd(PsdArgs),
    /// Charge-to-mass ratio from an axial-frequency voltage scan.
    FitQm(FitQmArgs),
    /// Radius and mass from a linewidth pressure scan.
    FitMass(FitMassArgs),
    /// Closed-loop IQ feedback cooling, single run or gain sweep.
    Cool(CoolArgs),
    /// Decoherence budgets: Diósi-Penrose lifetime, gas scattering, batch queries.
    Decohere(DecohereArgs),
    /// Internal temperature under laser heating.
    HeatBalance(HeatBalanceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    X,
    Y,
    Z,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Axis {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
            AxisArg::Z => Axis::Z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Approx,
    Exact,
    Both,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Seconds; overrides sim.duration.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Store every n-th step; overrides sim.record_every.
    #[arg(long)]
    pub record_every: Option<usize>,
    /// Also write trajectory.csv.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct PsdArgs {
    /// Binary trajectory written by `simulate`.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Detection settings; defaults to a noiseless 1e5 V/m detector.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "z")]
    pub axis: AxisArg,
    /// Frequency resolution in Hz.
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    /// Seconds dropped from the start.
    #[arg(long, default_value_t = 0.0)]
    pub settle: f64,
    /// Detector noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the line fit.
    #[arg(long)]
    pub no_fit: bool,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Generate the scan with the full simulate, transduce, PSD and fit pipeline.
    #[arg(long, conflicts_with = "scan")]
    pub synthetic: bool,
    /// Two-column CSV scan from an earlier run.
    #[arg(long)]
    pub scan: Option<PathBuf>,
    /// Trap geometry and particle; defaults to the reference operating point.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seconds simulated per scan point; 1 for voltage scans, 10 for pressure scans.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Peak-to-floor ratio of the detected line.
    #[arg(long, default_value_t = 30.0)]
    pub snr_db: f64,
}

#[derive(Debug, Args)]
pub struct FitQmArgs {
    #[command(flatten)]
    pub scan: ScanArgs,
    /// Ground-truth charge-to-mass for synthetic scans, C/kg.
    #[arg(long, default_value_t = 75.0)]
    pub qm: f64,
    #[arg(long, default_value_t = 5)]
    pub points: usize,
    /// Largest q_z in the synthetic scan.
    #[arg(long, default_value_t = 0.3)]
    pub q_max: f64,
    /// Gas pressure during the synthetic scan, Pa.
    #[arg(long, default_value_t = 20.0)]
    pub pressure: f64,
    #[arg(long, value_enum, default_value = "both")]
    pub model: ModelArg,
}

#[derive(Debug, Args)]
pub struct FitMassArgs {
    #[command(flatten)]
    pub scan: ScanArgs,
    /// Ground-truth radius for synthetic scans, m.
    #[arg(long, default_value_t = 91e-9)]
    pub radius: f64,
    /// Density assumed in the inversion, kg/m³.
    #[arg(long, default_value_t = 3040.0)]
    pub density: f64,
    /// Pressures in Pa, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [4.0, 7.0, 12.0, 22.0, 40.0])]
    pub pressures: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct CoolArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub gain: Option<f64>,
    /// Target feedback damping in 1/s; sets the gain from the analytic loop response.
    #[arg(long, conflicts_with = "gain")]
    pub damping: Option<f64>,
    /// Demodulation phase in degrees.
    #[arg(long)]
    pub phase: Option<f64>,
    /// Centre the controller on the target mode and set the damping phase.
    #[arg(long)]
    pub tune: bool,
    /// Seconds; overrides sim.duration.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Seconds excluded from the temperature average.
    #[arg(long, default_value_t = 0.5)]
    pub settle: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parameter sweep: `gain=0,5,11`, `damping=50,100,200` (1/s) or `phase=0,90,180,270`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Area-ratio thermometry against a calibration run.
    #[arg(long)]
    pub thermometry: bool,
    /// Calibration pressure in mbar.
    #[arg(long, default_value_t = 1.62e-2)]
    pub calibration_pressure_mbar: f64,
    /// Calibration run length in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub calibration_duration: f64,
    /// PSD resolution in Hz.
    #[arg(long, default_value_t = 5.0)]
    pub bin_width: f64,
    /// Half width of the thermometry window around the mode, Hz.
    #[arg(long, default_value_t = 1000.0)]
    pub window: f64,
}

#[derive(Debug, Args)]
pub struct DecohereArgs {
    /// Diósi-Penrose self-energy and lifetime.
    #[arg(long)]
    pub dp: bool,
    /// kg.
    #[arg(long, requires = "dp")]
    pub mass: Option<f64>,
    /// Branch separation, m.
    #[arg(long, requires = "dp")]
    pub sep: Option<f64>,
    /// kg/m³, used when no radius is given.
    #[arg(long, default_value_t = 3500.0)]
    pub density: f64,
    /// Particle radius, m.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Gas scattering rate and minimum pressure.
    #[arg(long)]
    pub gas: bool,
    /// Pa.
    #[arg(long, requires = "gas")]
    pub pressure: Option<f64>,
    /// Interferometer time, s.
    #[arg(long, default_value_t = 100e-6)]
    pub time: f64,
    /// Allowed γ·t.
    #[arg(long, default_value_t = 1.0)]
    pub budget: f64,
    #[arg(long, default_value_t = 300.0)]
    pub temperature: f64,
    /// JSON-lines queries from a file, or `-` for standard input; results go to standard output.
    #[arg(long, conflicts_with_all = ["dp", "gas"])]
    pub batch: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeatBalanceArgs {
    /// Intensities in W/mm², comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.637, 165.0])]
    pub intensity: Vec<f64>,
    /// Absorption coefficients in 1/cm, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.03, 0.003])]
    pub alpha_per_cm: Vec<f64>,
    /// Anchor: intensity W/mm², α 1/cm, balance K, environment K.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [165.0, 0.03, 500.0, 300.0])]
    pub anchor: Vec<f64>,
    /// Points in the logarithmic 0.1 to 200 W/mm² table.
    #[arg(long, default_value_t = 60)]
    pub scan_points: usize,
}

pub fn run(cli: Cli) -> levitrap::Result<()> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&cli.out, a),
        Command::Psd(a) => commands::psd(&cli.out, a),
        Command::FitQm(a) => commands::fit_qm(&cli.out, a),
        Command::FitMass(a) => commands::fit_mass(&cli.out, a),
        Command::Cool(a) => commands::cool(&cli.out, a),
        Command::Decohere(a) => commands::decohere(&cli.out, a),
        Command::HeatBalance(a) => commands::heat_balance(&cli.out, a),
    }
}
