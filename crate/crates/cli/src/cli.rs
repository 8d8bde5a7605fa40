//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{OutputFormat, SchemeName};

#[derive(Debug, Parser)]
#[command(name = "nuotdr", version, about = "Photon-counting OTDR simulator and analytics")]
pub struct Cli {
    /// Simulation configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `[campaign] seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(short, long, global = true)]
    pub verbose: bool,
    /// Worker threads for the Monte Carlo engine. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a measurement campaign or a single acquisition and write the trace CSV.
    Simulate(SimulateArgs),
    /// Closed-form predictors.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCmd,
    },
    /// Gate-frequency planner and threshold tables.
    Plan(PlanArgs),
    /// Run two configurations over the same fiber and compare them.
    Compare(CompareArgs),
    /// Stitch partial-trace CSV files into one trace.
    Stitch(StitchArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Replace the configured scheme; keys of the old kind are dropped.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeName>,
    /// Laser-off run of this many seconds to measure the dark baseline.
    #[arg(long)]
    pub dark_run: Option<f64>,
    /// Where to write the report; stderr when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write every partial trace of a campaign as `partial_<k>.csv` into this directory.
    #[arg(long)]
    pub partials_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCmd {
    /// Noise-equivalent power.
    Nep(NepArgs),
    /// Dynamic range.
    Dynr(DynrArgs),
    /// Measurement time to a target SNR.
    Time(TimeArgs),
    /// Pulse shortening allowed by a loss of dynamic range.
    Twopoint(TwopointArgs),
    /// Measurement-time ratio against a conventional receiver.
    Ratio(RatioArgs),
    /// Same as the top-level `plan`.
    Plan(PlanArgs),
}

/// Detector parameters; missing values come from `[apd]` and `[laser]` of the config.
#[derive(Debug, Clone, Args, Default)]
pub struct DetectorArgs {
    #[arg(long)]
    pub efficiency: Option<f64>,
    /// Gate-normalized dark-count rate, 1/s.
    #[arg(long)]
    pub dark_rate_hz: Option<f64>,
    #[arg(long)]
    pub wavelength_m: Option<f64>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct PowerArgs {
    /// Optical power on the detector, W.
    #[arg(long, conflicts_with = "power_dbm")]
    pub power_w: Option<f64>,
    /// Optical power on the detector, dBm.
    #[arg(long, allow_negative_numbers = true)]
    pub power_dbm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct NepArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub power: PowerArgs,
    /// Gates per measurement; enables the per-measurement NEP.
    #[arg(long)]
    pub gates: Option<f64>,
    #[arg(long)]
    pub gate_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DynrArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Initial backscatter power; computed from the config's fiber and laser when absent.
    #[arg(long)]
    pub p_bs0_w: Option<f64>,
    /// NEP0 of one measurement; computed from the detector, gates and gate width when absent.
    #[arg(long)]
    pub nep0_w: Option<f64>,
    #[arg(long)]
    pub gates: Option<f64>,
    #[arg(long)]
    pub gate_s: Option<f64>,
    /// Multiply the measurement time by this factor.
    #[arg(long, default_value_t = 1.0)]
    pub time_factor: f64,
}

#[derive(Debug, Args)]
pub struct TimeArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub power: PowerArgs,
    /// Target SNR; `[campaign] snr_floor` when absent.
    #[arg(long)]
    pub snr: Option<f64>,
    /// Detection bandwidth; 1/(2·gate width) of the config when absent.
    #[arg(long)]
    pub bandwidth_hz: Option<f64>,
    #[arg(long)]
    pub f_pulse_hz: Option<f64>,
    /// Normalized NEP, W/√Hz; computed from the detector at the given power when absent.
    #[arg(long)]
    pub nep_norm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TwopointArgs {
    /// Dynamic range given up, dB.
    #[arg(long, allow_negative_numbers = true)]
    pub x_db: f64,
}

#[derive(Debug, Args)]
pub struct RatioArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub power: PowerArgs,
    /// Normalized NEP of the conventional receiver, W/√Hz.
    #[arg(long, conflicts_with = "conv_factor")]
    pub conv_nep_norm: Option<f64>,
    /// Conventional NEP as a multiple of the photon-counting one.
    #[arg(long)]
    pub conv_factor: Option<f64>,
    /// Normalized NEP of the photon counter; from the detector when absent.
    #[arg(long)]
    pub pc_nep_norm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Detection probability of the first gate after the pulse.
    #[arg(long)]
    pub p_sig: Option<f64>,
    /// Dead time, s.
    #[arg(long)]
    pub tau_s: Option<f64>,
    /// Lowest acceptable activation probability.
    #[arg(long)]
    pub act_min: Option<f64>,
    /// Gate width, s; sets the 1/gate cap.
    #[arg(long)]
    pub gate_s: Option<f64>,
    /// Detector efficiency for the free-running threshold.
    #[arg(long)]
    pub efficiency: Option<f64>,
    /// Print the threshold tables instead of a single plan.
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Position of a reflective event; adds dead-zone lengths to the summary.
    #[arg(long)]
    pub event_km: Option<f64>,
    /// Dead-zone recovery threshold, dB.
    #[arg(long, default_value_t = 0.5)]
    pub threshold_db: f64,
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    /// Partial traces in measurement order.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}
