//! Bias schemes: gate-schedule generation and the activation-statistics planner.
//!
//! Four ways of arming the diode are modelled. `Basic` opens one gate per
//! laser pulse and scans the delay across pulses; `TrainOfGates` opens a
//! periodic train after each pulse, optionally interleaving shifted trains to
//! reach a finer sampling step; `FreeRunning` keeps the diode armed except
//! during dead time (modelled as back-to-back sub-gates); `RapidGating` uses
//! very short, GHz-rate gates with a short dead time.

use serde::{Deserialize, Serialize};

use crate::detector::ApdModel;
use crate::error::{invalid, Error, Result};
use crate::fiber::{FiberLink, LaserConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeKind {
    Basic {
        /// Delay step between successive sampling points, s.
        delay_step_s: f64,
        /// Fixed number of gates per sampling point; derived from the dwell time when absent.
        #[serde(default)]
        gates_per_point: Option<u64>,
    },
    TrainOfGates {
        f_gate_hz: f64,
        /// Number of interleaved trains, each delayed by a fraction of the gate period.
        #[serde(default = "one")]
        start_delay_shifts: u32,
    },
    FreeRunning,
    RapidGating {
        f_gate_hz: f64,
    },
}

fn one() -> u32 {
    1
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Basic { .. } => "basic",
            SchemeKind::TrainOfGates { .. } => "train_of_gates",
            SchemeKind::FreeRunning => "free_running",
            SchemeKind::RapidGating { .. } => "rapid_gating",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatingScheme {
    pub kind: SchemeKind,
    /// Gate width; for free running, the width of the sub-gates that tile the armed interval.
    pub gate_width_s: f64,
    pub dead_time_s: f64,
    /// Width of the trace bins for free running and rapid gating; defaults to the gate width
    /// (free running) or the laser pulse width (rapid gating).
    pub bin_s: Option<f64>,
    /// Restrict gating to a distance window `[start, end]` in km.
    pub window_km: Option<(f64, f64)>,
}

impl GatingScheme {
    pub fn basic(delay_step_s: f64, gate_width_s: f64, dead_time_s: f64) -> Self {
        Self {
            kind: SchemeKind::Basic {
                delay_step_s,
                gates_per_point: None,
            },
            gate_width_s,
            dead_time_s,
            bin_s: None,
            window_km: None,
        }
    }

    pub fn train_of_gates(f_gate_hz: f64, gate_width_s: f64, dead_time_s: f64) -> Self {
        Self {
            kind: SchemeKind::TrainOfGates {
                f_gate_hz,
                start_delay_shifts: 1,
            },
            gate_width_s,
            dead_time_s,
            bin_s: None,
            window_km: None,
        }
    }

    pub fn free_running(bin_s: f64, dead_time_s: f64) -> Self {
        Self {
            kind: SchemeKind::FreeRunning,
            gate_width_s: bin_s,
            dead_time_s,
            bin_s: Some(bin_s),
            window_km: None,
        }
    }

    /// Rapid gating with the usual operating point: 200 ps gates at 1 GHz, 10 ns dead time.
    pub fn rapid_gating() -> Self {
        Self {
            kind: SchemeKind::RapidGating { f_gate_hz: 1e9 },
            gate_width_s: 200e-12,
            dead_time_s: 10e-9,
            bin_s: None,
            window_km: None,
        }
    }

    pub fn with_window(mut self, start_km: f64, end_km: f64) -> Self {
        self.window_km = Some((start_km, end_km));
        self
    }

    pub fn with_bin(mut self, bin_s: f64) -> Self {
        self.bin_s = Some(bin_s);
        self
    }

    /// Gating frequency; for the basic scheme it equals the pulse rate.
    pub fn gate_frequency(&self, laser: &LaserConfig) -> f64 {
        match self.kind {
            SchemeKind::Basic { .. } => laser.repetition_hz,
            SchemeKind::TrainOfGates { f_gate_hz, .. } | SchemeKind::RapidGating { f_gate_hz } => f_gate_hz,
            SchemeKind::FreeRunning => 1.0 / self.gate_width_s,
        }
    }

    /// Duty cycle Γ = f_gate·Δt_gate (1 for free running).
    pub fn duty_cycle(&self, laser: &LaserConfig) -> f64 {
        match self.kind {
            SchemeKind::FreeRunning => 1.0,
            _ => (self.gate_frequency(laser) * self.gate_width_s).min(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gate_width_s > 0.0 && self.gate_width_s.is_finite()) {
            return Err(invalid("scheme", format!("gate width {} s must be > 0", self.gate_width_s)));
        }
        if !(self.dead_time_s >= 0.0 && self.dead_time_s.is_finite()) {
            return Err(invalid("scheme", format!("dead time {} s must be >= 0", self.dead_time_s)));
        }
        if let Some(b) = self.bin_s {
            if !(b > 0.0 && b.is_finite()) {
                return Err(invalid("scheme", format!("bin width {b} s must be > 0")));
            }
        }
        if let Some((a, b)) = self.window_km {
            if !(a >= 0.0 && b > a) {
                return Err(invalid("scheme", format!("window [{a}, {b}] km must satisfy 0 <= start < end")));
            }
        }
        match self.kind {
            SchemeKind::Basic { delay_step_s, gates_per_point } => {
                if !(delay_step_s > 0.0 && delay_step_s.is_finite()) {
                    return Err(invalid("scheme", format!("delay step {delay_step_s} s must be > 0")));
                }
                if gates_per_point == Some(0) {
                    return Err(invalid("scheme", "gates_per_point must be >= 1"));
                }
            }
            SchemeKind::TrainOfGates { f_gate_hz, start_delay_shifts } => {
                check_gate_rate(f_gate_hz, self.gate_width_s)?;
                if start_delay_shifts == 0 {
                    return Err(invalid("scheme", "start_delay_shifts must be >= 1"));
                }
            }
            SchemeKind::RapidGating { f_gate_hz } => check_gate_rate(f_gate_hz, self.gate_width_s)?,
            SchemeKind::FreeRunning => {}
        }
        Ok(())
    }
}

fn check_gate_rate(f_gate_hz: f64, gate_s: f64) -> Result<()> {
    if !(f_gate_hz > 0.0 && f_gate_hz.is_finite()) {
        return Err(invalid("scheme", format!("gate frequency {f_gate_hz} Hz must be > 0")));
    }
    if f_gate_hz * gate_s >= 1.0 {
        return Err(invalid(
            "scheme",
            format!(
                "gate frequency {f_gate_hz} Hz violates f_gate < 1/gate_width = {} Hz",
                1.0 / gate_s
            ),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledGate {
    /// Opening time relative to the laser pulse, s.
    pub start_s: f64,
    pub bin: usize,
    /// 1-based position within the gates of one pulse.
    pub index: u32,
}

/// Gates applied after one laser pulse. A schedule cycles through its frames.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    pub gates: Vec<ScheduledGate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateSchedule {
    pub scheme: SchemeKind,
    pub frames: Vec<Frame>,
    /// Centre delay of every trace bin, s, ascending.
    pub bin_centers_s: Vec<f64>,
    pub gate_width_s: f64,
    pub dead_time_s: f64,
    pub period_s: f64,
    pub duty_cycle: f64,
}

impl GateSchedule {
    pub fn gates_per_pulse_max(&self) -> usize {
        self.frames.iter().map(|f| f.gates.len()).max().unwrap_or(0)
    }

    pub fn bins(&self) -> usize {
        self.bin_centers_s.len()
    }
}

/// Lay out the gates of `scheme` for one pass over the link.
pub fn build_schedule(scheme: &GatingScheme, laser: &LaserConfig, link: &FiberLink) -> Result<GateSchedule> {
    scheme.validate()?;
    laser.validate(link)?;
    let period = laser.period_s();
    let round_trip = link.round_trip_s().min(period);
    let (t0, t1) = match scheme.window_km {
        Some((a, b)) => {
            if b > link.length_km() * (1.0 + 1e-12) {
                return Err(Error::Schedule(format!(
                    "window end {b} km beyond link length {} km",
                    link.length_km()
                )));
            }
            (link.delay_at_distance(a), link.delay_at_distance(b).min(round_trip))
        }
        None => (0.0, round_trip),
    };
    let w = scheme.gate_width_s;
    if t0 + w > period {
        return Err(Error::Schedule(format!(
            "gate of {w} s at {t0} s does not fit in the {period} s pulse period"
        )));
    }
    // A gate is kept when it opens inside the window and closes before the next pulse.
    let fits = |t: f64| t < t1 - 1e-15 && t + w <= period * (1.0 + 1e-12);

    let mut frames = Vec::new();
    let mut centers = Vec::new();
    match scheme.kind {
        SchemeKind::Basic { delay_step_s, .. } => {
            let mut i = 0u64;
            loop {
                let t = t0 + i as f64 * delay_step_s;
                if !fits(t) {
                    break;
                }
                frames.push(Frame {
                    gates: vec![ScheduledGate { start_s: t, bin: i as usize, index: 1 }],
                });
                centers.push(t + w / 2.0);
                i += 1;
            }
        }
        SchemeKind::TrainOfGates { f_gate_hz, start_delay_shifts } => {
            let spacing = 1.0 / f_gate_hz;
            let shifts = start_delay_shifts as usize;
            let mut starts: Vec<(usize, u32, f64)> = Vec::new();
            for j in 0..shifts {
                let offset = j as f64 * spacing / shifts as f64;
                let mut k = 0u64;
                loop {
                    let t = t0 + offset + k as f64 * spacing;
                    if !fits(t) {
                        break;
                    }
                    starts.push((j, k as u32 + 1, t));
                    k += 1;
                }
            }
            starts.sort_by(|a, b| a.2.total_cmp(&b.2));
            frames = vec![Frame::default(); shifts];
            for (bin, (j, index, t)) in starts.into_iter().enumerate() {
                frames[j].gates.push(ScheduledGate { start_s: t, bin, index });
                centers.push(t + w / 2.0);
            }
        }
        SchemeKind::FreeRunning => {
            let mut gates = Vec::new();
            let mut k = 0u64;
            loop {
                let t = t0 + k as f64 * w;
                if !fits(t) {
                    break;
                }
                gates.push(ScheduledGate { start_s: t, bin: k as usize, index: k as u32 + 1 });
                centers.push(t + w / 2.0);
                k += 1;
            }
            frames.push(Frame { gates });
        }
        SchemeKind::RapidGating { f_gate_hz } => {
            let spacing = 1.0 / f_gate_hz;
            let bin_s = scheme.bin_s.unwrap_or(laser.pulse_width_s).max(spacing);
            let mut gates = Vec::new();
            let mut k = 0u64;
            loop {
                let t = t0 + k as f64 * spacing;
                if !fits(t) {
                    break;
                }
                let bin = ((t - t0) / bin_s).floor() as usize;
                if bin == centers.len() {
                    centers.push(t0 + (bin as f64 + 0.5) * bin_s);
                }
                gates.push(ScheduledGate { start_s: t, bin, index: k as u32 + 1 });
                k += 1;
            }
            frames.push(Frame { gates });
        }
    }
    if centers.is_empty() {
        return Err(Error::Schedule("no gate fits in the delay window".into()));
    }
    // Bin centres are clamped to the fiber so that power lookups stay in range.
    for c in &mut centers {
        *c = c.min(link.round_trip_s());
    }
    Ok(GateSchedule {
        scheme: scheme.kind,
        frames,
        bin_centers_s: centers,
        gate_width_s: w,
        dead_time_s: scheme.dead_time_s,
        period_s: period,
        duty_cycle: scheme.duty_cycle(laser),
    })
}

/// Number of interleaved train positions needed to reach `resolution_km`
/// with gates spaced `1/f_gate_hz`; the measurement time grows by the same factor.
pub fn interleave_shifts(link: &FiberLink, f_gate_hz: f64, resolution_km: f64) -> Result<u32> {
    if !(resolution_km > 0.0) || !(f_gate_hz > 0.0) {
        return Err(Error::Domain("resolution and gate frequency must be > 0".into()));
    }
    let native_km = link.distance_at_delay(1.0 / f_gate_hz);
    Ok(((native_km / resolution_km) - 1e-9).ceil().max(1.0) as u32)
}

/// Probability that gate `i` of a train is armed when every gate sees the
/// same first-gate signal probability: `(1 − p)^(i−1)`.
pub fn activation_probability(i: u32, p_sig_gate1: f64) -> Result<f64> {
    if i == 0 {
        return Err(Error::Domain("gate index starts at 1".into()));
    }
    if !(0.0..1.0).contains(&p_sig_gate1) {
        return Err(Error::Domain(format!("probability {p_sig_gate1} must lie in [0, 1)")));
    }
    Ok((1.0 - p_sig_gate1).powi(i as i32 - 1))
}

/// Deepest gate index whose activation probability stays at or above `activation_min`.
pub fn deepest_compliant_gate(p_sig_gate1: f64, activation_min: f64) -> Result<u32> {
    check_activation_min(activation_min)?;
    if !(0.0..1.0).contains(&p_sig_gate1) {
        return Err(Error::Domain(format!("probability {p_sig_gate1} must lie in [0, 1)")));
    }
    if p_sig_gate1 == 0.0 {
        return Ok(u32::MAX);
    }
    let x = activation_min.ln() / (1.0 - p_sig_gate1).ln();
    Ok((x + 1e-12).floor().min(u32::MAX as f64 - 1.0) as u32 + 1)
}

fn check_activation_min(a: f64) -> Result<()> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Domain(format!("activation minimum {a} must lie in (0, 1)")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateFrequencyPlan {
    /// Continuous solution of `(1 − p)^(f·τ) = activation_min`, before capping, Hz.
    pub continuous_hz: f64,
    /// f·τ of the continuous solution.
    pub gates_per_dead_time: f64,
    /// Whole number of gates skipped after a detection (deepest compliant gate index).
    pub whole_gates: u32,
    /// `whole_gates / τ`, Hz.
    pub whole_gate_hz: f64,
    /// Hard bound 1/Δt_gate, Hz.
    pub cap_hz: f64,
    /// The cap binds: the diode should simply be left armed (free running).
    pub free_running: bool,
}

impl GateFrequencyPlan {
    pub fn continuous_capped_hz(&self) -> f64 {
        self.continuous_hz.min(self.cap_hz)
    }

    pub fn whole_gate_capped_hz(&self) -> f64 {
        self.whole_gate_hz.min(self.cap_hz)
    }
}

/// Highest gating frequency that keeps the first activation minimum of a
/// train of gates above `activation_min`.
pub fn max_gate_frequency(
    p_sig_gate1: f64,
    dead_time_s: f64,
    activation_min: f64,
    gate_width_s: f64,
) -> Result<GateFrequencyPlan> {
    check_activation_min(activation_min)?;
    if !(dead_time_s > 0.0) {
        return Err(Error::Domain(format!("dead time {dead_time_s} s must be > 0")));
    }
    if !(gate_width_s > 0.0) {
        return Err(Error::Domain(format!("gate width {gate_width_s} s must be > 0")));
    }
    let cap_hz = 1.0 / gate_width_s;
    let whole_gates = deepest_compliant_gate(p_sig_gate1, activation_min)?;
    let (product, whole_hz) = if p_sig_gate1 == 0.0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (
            activation_min.ln() / (1.0 - p_sig_gate1).ln(),
            whole_gates as f64 / dead_time_s,
        )
    };
    let continuous_hz = product / dead_time_s;
    Ok(GateFrequencyPlan {
        continuous_hz,
        gates_per_dead_time: product,
        whole_gates,
        whole_gate_hz: whole_hz,
        cap_hz,
        free_running: continuous_hz >= cap_hz,
    })
}

/// Linearized detection rate `1 / (1/(η·μ·Γ) + τ)`, Hz.
pub fn detection_rate(efficiency: f64, flux: f64, duty_cycle: f64, dead_time_s: f64) -> Result<f64> {
    if efficiency < 0.0 || flux < 0.0 || dead_time_s < 0.0 || !(0.0..=1.0).contains(&duty_cycle) {
        return Err(Error::Domain("detection rate inputs must be >= 0 with duty cycle <= 1".into()));
    }
    let raw = efficiency * flux * duty_cycle;
    if raw == 0.0 {
        return Ok(0.0);
    }
    if raw.is_infinite() {
        return Ok(1.0 / dead_time_s);
    }
    Ok(1.0 / (1.0 / raw + dead_time_s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeRunningThreshold {
    /// b = −ln(activation_min).
    pub b: f64,
    /// Flux below which free running keeps the activation floor, photons/s.
    pub max_flux: f64,
    pub max_power_w: f64,
}

/// Flux limit `b/(η·τ)` under which free running is the preferred low-flux mode.
pub fn free_running_threshold(
    efficiency: f64,
    dead_time_s: f64,
    activation_min: f64,
    photon_energy_j: f64,
) -> Result<FreeRunningThreshold> {
    check_activation_min(activation_min)?;
    if !(efficiency > 0.0) || !(dead_time_s > 0.0) {
        return Err(Error::Domain("efficiency and dead time must be > 0".into()));
    }
    let b = -activation_min.ln();
    let max_flux = b / (efficiency * dead_time_s);
    Ok(FreeRunningThreshold {
        b,
        max_flux,
        max_power_w: max_flux * photon_energy_j,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FreeRunning,
    RapidGating,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub regime: Regime,
    pub scheme: GatingScheme,
    /// 1/(η·τ_free_running), photons/s.
    pub threshold_flux: f64,
    pub rationale: String,
}

/// Pick free running below the flux `1/(η·τ)` of the free-running dead time,
/// rapid gating at or above it.
pub fn recommend_scheme(
    flux: f64,
    apd: &ApdModel,
    rapid: &GatingScheme,
    free_running: &GatingScheme,
) -> Result<Recommendation> {
    if !matches!(rapid.kind, SchemeKind::RapidGating { .. }) {
        return Err(invalid("scheme", "rapid candidate must be a rapid_gating scheme"));
    }
    if !matches!(free_running.kind, SchemeKind::FreeRunning) {
        return Err(invalid("scheme", "free-running candidate must be a free_running scheme"));
    }
    if !(flux >= 0.0) {
        return Err(Error::Domain(format!("flux {flux} must be >= 0")));
    }
    let tau = free_running.dead_time_s;
    let threshold = if tau > 0.0 {
        1.0 / (apd.efficiency * tau)
    } else {
        f64::INFINITY
    };
    let (regime, scheme, relation) = if flux < threshold {
        (Regime::FreeRunning, *free_running, "below")
    } else {
        (Regime::RapidGating, *rapid, "at or above")
    };
    Ok(Recommendation {
        regime,
        scheme,
        threshold_flux: threshold,
        rationale: format!(
            "flux {flux:.3e} photons/s is {relation} 1/(eta*tau) = {threshold:.3e} photons/s \
             (eta = {}, free-running dead time {tau:.3e} s)",
            apd.efficiency
        ),
    })
}
