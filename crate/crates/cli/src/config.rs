//! Simulation configuration files.
//!
//! The file is TOML. Sections: `[fiber]` with `[[fiber.segments]]` and
//! `[[fiber.events]]`, `[laser]`, `[apd]` with optional `[apd.afterpulse]` and
//! `[apd.persistence]`, `[scheme]`, `[run]`, `[campaign]` and `[output]`.
//! Unknown keys and duplicate keys are rejected. `fiber`, `laser` and `apd`
//! are required; everything else has defaults, which are materialized on load
//! and can be echoed back with [`SimConfig::echo`]. Defaults that are tool
//! assumptions rather than reference values are listed in
//! [`SimConfig::assumptions`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use nuotdr::detector::{AfterpulseParams, ApdModel, PersistenceParams};
use nuotdr::engine::CampaignConfig;
use nuotdr::fiber::{
    FiberLink, FiberSegment, LaserConfig, PointEvent, DEFAULT_ATTENUATION_DB_PER_KM, DEFAULT_CAPTURE_RATIO,
    DEFAULT_SCATTERING_PER_KM,
};
use nuotdr::schemes::{GatingScheme, SchemeKind};
use nuotdr::units::{self, DEFAULT_GROUP_SPEED_KM_S, DEFAULT_WAVELENGTH_M};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub fiber: Option<RawFiber>,
    pub laser: Option<RawLaser>,
    pub apd: Option<RawApd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<RawScheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RawRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub campaign: Option<RawCampaign>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<RawOutput>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFiber {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_speed_km_s: Option<f64>,
    pub segments: Vec<RawSegment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<RawEvent>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSegment {
    pub length_km: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attenuation_db_per_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scattering_per_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capture_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEvent {
    pub position_km: f64,
    #[serde(default)]
    pub loss_db: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reflectance_db: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLaser {
    pub peak_power_w: f64,
    pub pulse_width_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetition_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavelength_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawApd {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dark_rate_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dead_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub afterpulse: Option<RawAfterpulse>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub persistence: Option<RawPersistence>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAfterpulse {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_trap_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPersistence {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_hz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SchemeName {
    Basic,
    TrainOfGates,
    FreeRunning,
    RapidGating,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScheme {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<SchemeName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate_width_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dead_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay_step_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gates_per_point: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_gate_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_delay_shifts: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_km: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Partial-trace campaign with the basic scheme, single run otherwise.
    Auto,
    Campaign,
    Single,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<RunMode>,
    /// Laser time of a single run, s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    /// Fixed attenuator setting of a single run; chosen automatically when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attenuation_db: Option<f64>,
    /// Laser-off run of this length measuring the dark baseline; 0 uses the analytic dark count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dark_run_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCampaign {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dwell_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor_bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_partials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify_pulses: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chunk_bins: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub mode: RunMode,
    pub duration_s: f64,
    pub attenuation_db: Option<f64>,
    pub dark_run_s: f64,
}

/// A fully validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub link: FiberLink,
    pub laser: LaserConfig,
    pub apd: ApdModel,
    pub scheme: GatingScheme,
    pub run: RunSettings,
    pub campaign: CampaignConfig,
    pub output_path: Option<String>,
    pub format: OutputFormat,
    /// Defaults that are tool assumptions, not reference values.
    pub assumptions: Vec<String>,
    /// The input with every default written out.
    pub materialized: RawConfig,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Read and validate a configuration file.
pub fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parse and validate configuration text.
pub fn parse_config(text: &str) -> Result<SimConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| config_err(parse_message(text, &e)))?;
    raw.materialize()
}

/// toml's message plus an explicit 1-based line:column.
fn parse_message(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message().trim().to_string();
    match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("parse error at line {line}, column {col}: {msg}")
        }
        None => format!("parse error: {msg}"),
    }
}

impl RawConfig {
    /// Fill defaults, build the model types and validate them.
    pub fn materialize(&self) -> Result<SimConfig, CliError> {
        let mut m = self.clone();
        let mut assumptions = Vec::new();
        let mut assume = |s: String| {
            if !assumptions.contains(&s) {
                assumptions.push(s);
            }
        };

        let fiber = m.fiber.as_mut().ok_or_else(|| config_err("missing [fiber] section"))?;
        if fiber.segments.is_empty() {
            return Err(config_err("[fiber] needs at least one [[fiber.segments]] entry"));
        }
        let speed = *fiber.group_speed_km_s.get_or_insert_with(|| {
            assume(format!("group speed {DEFAULT_GROUP_SPEED_KM_S} km/s assumed"));
            DEFAULT_GROUP_SPEED_KM_S
        });
        let mut segments = Vec::new();
        for s in &mut fiber.segments {
            let att = *s.attenuation_db_per_km.get_or_insert_with(|| {
                assume(format!("fiber attenuation {DEFAULT_ATTENUATION_DB_PER_KM} dB/km assumed"));
                DEFAULT_ATTENUATION_DB_PER_KM
            });
            let scat = *s.scattering_per_km.get_or_insert_with(|| {
                assume(format!("Rayleigh scattering coefficient {DEFAULT_SCATTERING_PER_KM} /km assumed"));
                DEFAULT_SCATTERING_PER_KM
            });
            let cap = *s.capture_ratio.get_or_insert_with(|| {
                assume(format!("capture ratio S = {DEFAULT_CAPTURE_RATIO} assumed"));
                DEFAULT_CAPTURE_RATIO
            });
            segments.push(FiberSegment {
                length_km: s.length_km,
                attenuation_db_per_km: att,
                scattering_per_km: scat,
                capture_ratio: cap,
            });
        }
        let events = fiber
            .events
            .iter()
            .map(|e| PointEvent {
                position_km: e.position_km,
                loss_db: e.loss_db,
                reflectance_db: e.reflectance_db,
            })
            .collect();
        let link = FiberLink::with_group_speed(segments, events, speed)?;

        let laser_raw = m.laser.as_mut().ok_or_else(|| config_err("missing [laser] section"))?;
        let repetition_hz = *laser_raw.repetition_hz.get_or_insert_with(|| {
            assume("laser repetition rate set to the largest the link allows".into());
            link.max_pulse_rate_hz()
        });
        let wavelength_m = *laser_raw.wavelength_m.get_or_insert(DEFAULT_WAVELENGTH_M);
        let laser = LaserConfig {
            peak_power_w: laser_raw.peak_power_w,
            pulse_width_s: laser_raw.pulse_width_s,
            repetition_hz,
            wavelength_m,
        };
        laser.validate(&link)?;

        let apd_raw = m.apd.as_mut().ok_or_else(|| config_err("missing [apd] section"))?;
        let d = ApdModel::default();
        let ap = apd_raw.afterpulse.get_or_insert_with(Default::default);
        if ap.a0.is_none() || ap.tau_trap_s.is_none() {
            assume("afterpulse a0 / tau_trap defaults are calibration knobs, not measured values".into());
        }
        let afterpulse = AfterpulseParams {
            a0: *ap.a0.get_or_insert(d.afterpulse.a0),
            tau_trap_s: *ap.tau_trap_s.get_or_insert(d.afterpulse.tau_trap_s),
        };
        let cp = apd_raw.persistence.get_or_insert_with(Default::default);
        if cp.kappa.is_none() || cp.gamma_hz.is_none() {
            assume("charge persistence kappa / gamma are phenomenological, calibrated to a dead-zone scenario".into());
        }
        let persistence = PersistenceParams {
            kappa: *cp.kappa.get_or_insert(d.persistence.kappa),
            gamma_hz: *cp.gamma_hz.get_or_insert(d.persistence.gamma_hz),
        };
        let apd = ApdModel {
            efficiency: *apd_raw.efficiency.get_or_insert(d.efficiency),
            dark_rate_hz: *apd_raw.dark_rate_hz.get_or_insert(d.dark_rate_hz),
            dead_time_s: *apd_raw.dead_time_s.get_or_insert(d.dead_time_s),
            afterpulse,
            persistence,
            photon_energy_j: units::photon_energy(wavelength_m),
        };
        apd.validate()?;

        let sr = m.scheme.get_or_insert_with(Default::default);
        let scheme = build_scheme(sr, &laser, &apd, &mut assume)?;

        let run = m.run.get_or_insert_with(Default::default);
        let settings = RunSettings {
            mode: *run.mode.get_or_insert(RunMode::Auto),
            duration_s: *run.duration_s.get_or_insert(1.0),
            attenuation_db: run.attenuation_db,
            dark_run_s: *run.dark_run_s.get_or_insert(0.0),
        };
        if !(settings.duration_s > 0.0 && settings.duration_s.is_finite()) {
            return Err(config_err(format!("[run] duration_s = {} must be > 0", settings.duration_s)));
        }
        if !(settings.dark_run_s >= 0.0 && settings.dark_run_s.is_finite()) {
            return Err(config_err(format!("[run] dark_run_s = {} must be >= 0", settings.dark_run_s)));
        }
        if let Some(a) = settings.attenuation_db {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(config_err(format!("[run] attenuation_db = {a} must be >= 0")));
            }
        }
        if settings.mode == RunMode::Campaign && !matches!(scheme.kind, SchemeKind::Basic { .. }) {
            return Err(config_err(format!(
                "[run] mode = \"campaign\" needs the basic scheme, not {}",
                scheme.kind.name()
            )));
        }

        let c = m.campaign.get_or_insert_with(Default::default);
        let cd = CampaignConfig::default();
        if c.overlap_km.is_none() {
            assume(format!("partial-trace overlap {} km assumed", cd.overlap_km));
        }
        let campaign = CampaignConfig {
            dwell_per_bin_s: *c.dwell_s.get_or_insert(cd.dwell_per_bin_s),
            snr_floor: *c.snr_floor.get_or_insert(cd.snr_floor),
            floor_bins: *c.floor_bins.get_or_insert(cd.floor_bins),
            overlap_km: *c.overlap_km.get_or_insert(cd.overlap_km),
            target_rate: *c.target_rate.get_or_insert(cd.target_rate),
            seed: *c.seed.get_or_insert(cd.seed),
            max_partials: *c.max_partials.get_or_insert(cd.max_partials),
            verify_pulses: *c.verify_pulses.get_or_insert(cd.verify_pulses),
            chunk_bins: *c.chunk_bins.get_or_insert(cd.chunk_bins),
        };
        campaign.validate()?;

        let out = m.output.get_or_insert_with(Default::default);
        let format = *out.format.get_or_insert(OutputFormat::Csv);
        let output_path = out.path.clone();

        Ok(SimConfig {
            link,
            laser,
            apd,
            scheme,
            run: settings,
            campaign,
            output_path,
            format,
            assumptions,
            materialized: m,
        })
    }
}

fn build_scheme(
    sr: &mut RawScheme,
    laser: &LaserConfig,
    apd: &ApdModel,
    assume: &mut impl FnMut(String),
) -> Result<GatingScheme, CliError> {
    let kind = *sr.kind.get_or_insert(SchemeName::Basic);
    let reject = |key: &str, present: bool| -> Result<(), CliError> {
        if present {
            Err(config_err(format!(
                "[scheme] key `{key}` does not apply to kind = \"{}\"",
                scheme_label(kind)
            )))
        } else {
            Ok(())
        }
    };
    let rapid = GatingScheme::rapid_gating();
    let default_gate = if kind == SchemeName::RapidGating {
        rapid.gate_width_s
    } else {
        laser.pulse_width_s
    };
    if sr.gate_width_s.is_none() && kind != SchemeName::FreeRunning {
        if kind == SchemeName::RapidGating {
            assume(format!("rapid-gating gate width {:e} s assumed", rapid.gate_width_s));
        } else {
            assume("gate width defaults to the laser pulse width".into());
        }
    }
    let dead_time = *sr.dead_time_s.get_or_insert(if kind == SchemeName::RapidGating {
        rapid.dead_time_s
    } else {
        apd.dead_time_s
    });
    let scheme = match kind {
        SchemeName::Basic => {
            reject("f_gate_hz", sr.f_gate_hz.is_some())?;
            reject("start_delay_shifts", sr.start_delay_shifts.is_some())?;
            reject("bin_s", sr.bin_s.is_some())?;
            let gate = *sr.gate_width_s.get_or_insert(default_gate);
            if sr.delay_step_s.is_none() {
                assume("basic-scheme delay step defaults to the gate width".into());
            }
            let step = *sr.delay_step_s.get_or_insert(gate);
            GatingScheme {
                kind: SchemeKind::Basic { delay_step_s: step, gates_per_point: sr.gates_per_point },
                gate_width_s: gate,
                dead_time_s: dead_time,
                bin_s: None,
                window_km: None,
            }
        }
        SchemeName::TrainOfGates => {
            reject("delay_step_s", sr.delay_step_s.is_some())?;
            reject("gates_per_point", sr.gates_per_point.is_some())?;
            let gate = *sr.gate_width_s.get_or_insert(default_gate);
            let f = sr
                .f_gate_hz
                .ok_or_else(|| config_err("[scheme] kind = \"train_of_gates\" needs f_gate_hz"))?;
            GatingScheme {
                kind: SchemeKind::TrainOfGates {
                    f_gate_hz: f,
                    start_delay_shifts: *sr.start_delay_shifts.get_or_insert(1),
                },
                gate_width_s: gate,
                dead_time_s: dead_time,
                bin_s: sr.bin_s,
                window_km: None,
            }
        }
        SchemeName::FreeRunning => {
            reject("delay_step_s", sr.delay_step_s.is_some())?;
            reject("gates_per_point", sr.gates_per_point.is_some())?;
            reject("f_gate_hz", sr.f_gate_hz.is_some())?;
            reject("start_delay_shifts", sr.start_delay_shifts.is_some())?;
            // The armed interval is cut into bins of `bin_s`; gate_width_s is the same quantity.
            let bin = match (sr.bin_s, sr.gate_width_s) {
                (Some(b), Some(g)) if b != g => {
                    return Err(config_err("[scheme] free_running: bin_s and gate_width_s must agree"))
                }
                (Some(b), _) | (None, Some(b)) => b,
                (None, None) => {
                    assume("free-running bin width defaults to the laser pulse width".into());
                    laser.pulse_width_s
                }
            };
            sr.bin_s = Some(bin);
            sr.gate_width_s = Some(bin);
            GatingScheme::free_running(bin, dead_time)
        }
        SchemeName::RapidGating => {
            reject("delay_step_s", sr.delay_step_s.is_some())?;
            reject("gates_per_point", sr.gates_per_point.is_some())?;
            reject("start_delay_shifts", sr.start_delay_shifts.is_some())?;
            let gate = *sr.gate_width_s.get_or_insert(default_gate);
            if sr.f_gate_hz.is_none() {
                assume("rapid-gating frequency 1 GHz assumed".into());
            }
            let f = match rapid.kind {
                SchemeKind::RapidGating { f_gate_hz } => *sr.f_gate_hz.get_or_insert(f_gate_hz),
                _ => unreachable!(),
            };
            GatingScheme {
                kind: SchemeKind::RapidGating { f_gate_hz: f },
                gate_width_s: gate,
                dead_time_s: dead_time,
                bin_s: sr.bin_s,
                window_km: None,
            }
        }
    };
    let scheme = match sr.window_km {
        Some([a, b]) => scheme.with_window(a, b),
        None => scheme,
    };
    scheme.validate()?;
    Ok(scheme)
}

pub fn scheme_label(kind: SchemeName) -> &'static str {
    match kind {
        SchemeName::Basic => "basic",
        SchemeName::TrainOfGates => "train_of_gates",
        SchemeName::FreeRunning => "free_running",
        SchemeName::RapidGating => "rapid_gating",
    }
}

impl SimConfig {
    /// The materialized configuration as TOML.
    pub fn echo(&self) -> String {
        toml::to_string(&self.materialized).unwrap_or_else(|e| format!("# unable to echo configuration: {e}\n"))
    }

    /// Replace the scheme kind, dropping keys that belong to the old kind.
    pub fn with_scheme(&self, kind: SchemeName) -> Result<SimConfig, CliError> {
        let mut raw = self.materialized.clone();
        let old = raw.scheme.take().unwrap_or_default();
        if old.kind == Some(kind) {
            return Ok(self.clone());
        }
        raw.scheme = Some(RawScheme {
            kind: Some(kind),
            dead_time_s: None,
            window_km: old.window_km,
            ..RawScheme::default()
        });
        if let Some(run) = raw.run.as_mut() {
            if run.mode == Some(RunMode::Campaign) && kind != SchemeName::Basic {
                run.mode = Some(RunMode::Single);
            }
        }
        let mut swapped = raw.materialize()?;
        let mut assumptions = self.assumptions.clone();
        for a in swapped.assumptions.drain(..) {
            if !assumptions.contains(&a) {
                assumptions.push(a);
            }
        }
        swapped.assumptions = assumptions;
        Ok(swapped)
    }
}
