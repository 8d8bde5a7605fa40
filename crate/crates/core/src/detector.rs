//! Geiger-mode APD statistics.
//!
//! Per-gate detection probabilities, the afterpulse law for wide gates, gate
//! sampling with an evolving trap / charge-persistence state, and inversion of
//! detection counts back to optical power.
//!
//! All noise sources are independent Poisson hazards summed in one exponent,
//! so with afterpulsing and persistence switched off a gate fires with
//! probability `1 − exp(−(η·μ + p̂_dc)·Δt_gate)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::units::{self, AFTERPULSE_REFERENCE_GATE_S, DEFAULT_WAVELENGTH_M};

/// Largest per-10 ns excess probability fed into `ln(1 − p)`.
const EXCESS_CAP: f64 = 1.0 - 1e-12;
/// Gate widths above this are outside the validated range of the afterpulse law.
pub const AFTERPULSE_LAW_MAX_GATE_S: f64 = 10e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfterpulseParams {
    /// Afterpulse probability of a 10 ns gate opened right after an avalanche.
    pub a0: f64,
    /// e-folding time of the trap population, s.
    pub tau_trap_s: f64,
}

impl Default for AfterpulseParams {
    /// Calibration knobs, not measured values.
    fn default() -> Self {
        Self {
            a0: 0.1,
            tau_trap_s: 2e-6,
        }
    }
}

impl AfterpulseParams {
    pub fn disabled() -> Self {
        Self {
            a0: 0.0,
            ..Self::default()
        }
    }
}

/// Phenomenological charge persistence: photons arriving while the diode is
/// below breakdown raise the noise hazard of later gates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistenceParams {
    /// Excess per-10 ns noise probability added per incident photon.
    pub kappa: f64,
    /// Decay rate of the excess, 1/s.
    pub gamma_hz: f64,
}

impl Default for PersistenceParams {
    /// Calibrated against a 17 dB loss event preceded by a −45 dB reflector:
    /// the tail decays at 3.5 dB/km and the backscatter is recovered within
    /// 0.5 dB about 2 km after the event.
    fn default() -> Self {
        Self {
            kappa: 1.9e-7,
            gamma_hz: 1.612e5,
        }
    }
}

impl PersistenceParams {
    pub fn disabled() -> Self {
        Self {
            kappa: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApdModel {
    pub efficiency: f64,
    /// Dark count probability per gate normalized by the gate width, 1/s.
    pub dark_rate_hz: f64,
    pub afterpulse: AfterpulseParams,
    pub persistence: PersistenceParams,
    pub dead_time_s: f64,
    /// hν, J.
    pub photon_energy_j: f64,
}

impl Default for ApdModel {
    /// InGaAs/InP diode at −50 °C: η = 10 %, p̂_dc = 2000 /s, 10 µs dead time, 1550 nm.
    fn default() -> Self {
        Self {
            efficiency: 0.1,
            dark_rate_hz: 2000.0,
            afterpulse: AfterpulseParams::default(),
            persistence: PersistenceParams::default(),
            dead_time_s: 10e-6,
            photon_energy_j: units::photon_energy(DEFAULT_WAVELENGTH_M),
        }
    }
}

impl ApdModel {
    /// Ideal diode: no afterpulsing, no charge persistence.
    pub fn ideal(efficiency: f64, dark_rate_hz: f64, dead_time_s: f64) -> Self {
        Self {
            efficiency,
            dark_rate_hz,
            afterpulse: AfterpulseParams::disabled(),
            persistence: PersistenceParams::disabled(),
            dead_time_s,
            ..Self::default()
        }
    }

    pub fn with_wavelength(mut self, wavelength_m: f64) -> Self {
        self.photon_energy_j = units::photon_energy(wavelength_m);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(invalid("apd", format!("efficiency {} must lie in (0, 1]", self.efficiency)));
        }
        if !(self.dark_rate_hz >= 0.0 && self.dark_rate_hz.is_finite()) {
            return Err(invalid("apd", format!("dark rate {} /s must be >= 0", self.dark_rate_hz)));
        }
        let ap = &self.afterpulse;
        if !(ap.a0 >= 0.0 && ap.a0 < 1.0) {
            return Err(invalid("apd", format!("afterpulse a0 {} must lie in [0, 1)", ap.a0)));
        }
        if !(ap.tau_trap_s > 0.0 && ap.tau_trap_s.is_finite()) {
            return Err(invalid("apd", format!("trap lifetime {} s must be > 0", ap.tau_trap_s)));
        }
        let cp = &self.persistence;
        if !(cp.kappa >= 0.0 && cp.kappa.is_finite()) {
            return Err(invalid("apd", format!("persistence kappa {} must be >= 0", cp.kappa)));
        }
        if !(cp.gamma_hz >= 0.0 && cp.gamma_hz.is_finite()) {
            return Err(invalid("apd", format!("persistence gamma {} /s must be >= 0", cp.gamma_hz)));
        }
        if !(self.dead_time_s >= 0.0 && self.dead_time_s.is_finite()) {
            return Err(invalid("apd", format!("dead time {} s must be >= 0", self.dead_time_s)));
        }
        if !(self.photon_energy_j > 0.0) {
            return Err(invalid("apd", "photon energy must be > 0"));
        }
        Ok(())
    }

    /// Photon flux μ = P/hν, photons/s.
    pub fn photon_flux(&self, power_w: f64) -> f64 {
        power_w / self.photon_energy_j
    }

    /// Mean number of signal detections η·μ·Δt in a gate.
    pub fn signal_hazard(&self, power_w: f64, gate_s: f64) -> f64 {
        self.efficiency * self.photon_flux(power_w) * gate_s
    }

    /// Dark count hazard p̂_dc·Δt_gate (dark counts scale linearly with gate width).
    pub fn dark_hazard(&self, gate_s: f64) -> f64 {
        self.dark_rate_hz * gate_s
    }

    /// Dark count probability per gate, linear in the gate width.
    pub fn dark_probability(&self, gate_s: f64) -> f64 {
        self.dark_hazard(gate_s)
    }
}

fn check_gate(gate_s: f64) -> Result<()> {
    if !(gate_s > 0.0 && gate_s.is_finite()) {
        return Err(Error::Domain(format!("gate width {gate_s} s must be > 0")));
    }
    Ok(())
}

/// Probability that a gate of width `gate_s` produces a signal detection,
/// `1 − exp(−η·(P/hν)·Δt)`.
pub fn detection_probability(apd: &ApdModel, power_w: f64, gate_s: f64) -> Result<f64> {
    if !(power_w >= 0.0) {
        return Err(Error::Domain(format!("optical power {power_w} W must be >= 0")));
    }
    check_gate(gate_s)?;
    Ok(-(-apd.signal_hazard(power_w, gate_s)).exp_m1())
}

/// Small-signal form `η·(P/hν)·Δt`.
pub fn detection_probability_linearized(apd: &ApdModel, power_w: f64, gate_s: f64) -> Result<f64> {
    if !(power_w >= 0.0) {
        return Err(Error::Domain(format!("optical power {power_w} W must be >= 0")));
    }
    check_gate(gate_s)?;
    Ok(apd.signal_hazard(power_w, gate_s))
}

/// Inverse of [`detection_probability`]: power giving signal probability `p` per gate.
pub fn power_for_probability(apd: &ApdModel, p: f64, gate_s: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} must lie in [0, 1)")));
    }
    check_gate(gate_s)?;
    Ok(-apd.photon_energy_j / (apd.efficiency * gate_s) * (-p).ln_1p())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub power_w: f64,
    /// ±1σ Poisson interval on the raw detections, propagated through the inversion.
    /// The upper bound is infinite when `p + σ` reaches 1.
    pub interval: (f64, f64),
    /// Dark-corrected signal probability per gate.
    pub probability: f64,
}

/// Estimate the incident power from `detections` out of `gates` activated
/// gates, subtracting `dark_expected` dark counts.
pub fn estimate_power(
    apd: &ApdModel,
    detections: u64,
    dark_expected: f64,
    gates: u64,
    gate_s: f64,
) -> Result<PowerEstimate> {
    if gates == 0 {
        return Err(Error::Domain("at least one activated gate is required".into()));
    }
    if detections > gates {
        return Err(Error::Domain(format!("{detections} detections exceed {gates} gates")));
    }
    if !(dark_expected >= 0.0) {
        return Err(Error::Domain(format!("expected dark counts {dark_expected} must be >= 0")));
    }
    check_gate(gate_s)?;
    if detections == gates {
        return Err(Error::Saturated { detections, gates });
    }
    let n = gates as f64;
    let to_power = |p: f64| -> f64 {
        if p >= 1.0 {
            f64::INFINITY
        } else {
            -apd.photon_energy_j / (apd.efficiency * gate_s) * (-p.max(0.0)).ln_1p()
        }
    };
    let p = ((detections as f64 - dark_expected) / n).max(0.0);
    let sigma = (detections as f64).sqrt() / n;
    Ok(PowerEstimate {
        power_w: to_power(p),
        interval: (to_power(p - sigma), to_power(p + sigma)),
        probability: p,
    })
}

/// Lower bound on the power for a bin in which every gate fired.
pub fn saturated_lower_bound(apd: &ApdModel, dark_expected: f64, gates: u64, gate_s: f64) -> Result<f64> {
    if gates < 2 {
        return Ok(0.0);
    }
    estimate_power(apd, gates - 1, dark_expected, gates, gate_s).map(|e| e.power_w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateAfterpulse {
    pub probability: f64,
    /// The gate is wider than the range in which the afterpulse law was established.
    pub beyond_validity: bool,
}

/// Afterpulse probability of a gate of width `gate_s` opened `dead_time_s`
/// after an avalanche: `1 − (1 − p₁₀)^m` with `p₁₀ = A₀·exp(−τ/τ_trap)` and
/// `m = Δt_gate / 10 ns`.
pub fn afterpulse_probability_gate(apd: &ApdModel, dead_time_s: f64, gate_s: f64) -> Result<GateAfterpulse> {
    if !(dead_time_s >= 0.0) {
        return Err(Error::Domain(format!("dead time {dead_time_s} s must be >= 0")));
    }
    check_gate(gate_s)?;
    let ap = &apd.afterpulse;
    let p10 = ap.a0 * (-dead_time_s / ap.tau_trap_s).exp();
    let m = gate_s / AFTERPULSE_REFERENCE_GATE_S;
    Ok(GateAfterpulse {
        probability: -(m * (-p10).ln_1p()).exp_m1(),
        beyond_validity: gate_s > AFTERPULSE_LAW_MAX_GATE_S,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Signal,
    Dark,
    Afterpulse,
    Persistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateOutcome {
    pub detected: bool,
    /// Present iff `detected`.
    pub cause: Option<Cause>,
}

impl GateOutcome {
    pub const NONE: GateOutcome = GateOutcome {
        detected: false,
        cause: None,
    };
}

/// Poisson hazards (mean avalanche-triggering events) of one gate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GateHazards {
    pub signal: f64,
    pub dark: f64,
    pub afterpulse: f64,
    pub persistence: f64,
}

impl GateHazards {
    pub fn total(&self) -> f64 {
        self.signal + self.dark + self.afterpulse + self.persistence
    }

    pub fn probability(&self) -> f64 {
        -(-self.total()).exp_m1()
    }

    /// Attribute a detection; `v` is uniform on [0, 1).
    pub fn cause(&self, v: f64) -> Cause {
        let mut x = v * self.total();
        for (h, c) in [
            (self.signal, Cause::Signal),
            (self.dark, Cause::Dark),
            (self.afterpulse, Cause::Afterpulse),
        ] {
            if x < h {
                return c;
            }
            x -= h;
        }
        Cause::Persistence
    }
}

/// Hazard of a gate of `m` reference widths facing a per-10 ns excess probability.
pub(crate) fn excess_hazard(excess: f64, m: f64) -> f64 {
    if excess <= 0.0 {
        0.0
    } else {
        -m * (-excess.min(EXCESS_CAP)).ln_1p()
    }
}

/// Evolving detector state along one simulated timeline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ApdState {
    /// Excess afterpulse probability per 10 ns at `clock`.
    pub trap_excess: f64,
    /// Excess persistence noise probability per 10 ns at `clock`.
    pub persistence_excess: f64,
    /// The diode cannot be armed before this time, s.
    pub dead_until: f64,
    /// Time at which the excess values are current, s.
    pub clock: f64,
}

impl ApdState {
    pub fn fresh() -> Self {
        Self::default()
    }

    /// Let both excess populations relax without illumination up to `t`.
    pub fn advance_to(&mut self, apd: &ApdModel, t: f64) {
        let dt = t - self.clock;
        if dt <= 0.0 {
            return;
        }
        if self.trap_excess > 0.0 {
            self.trap_excess *= (-dt / apd.afterpulse.tau_trap_s).exp();
        }
        if self.persistence_excess > 0.0 {
            self.persistence_excess *= (-apd.persistence.gamma_hz * dt).exp();
        }
        self.clock = t;
    }

    /// Hazards seen by a gate opening now.
    pub fn hazards(&self, apd: &ApdModel, power_w: f64, gate_s: f64) -> GateHazards {
        let m = gate_s / AFTERPULSE_REFERENCE_GATE_S;
        GateHazards {
            signal: apd.signal_hazard(power_w, gate_s),
            dark: apd.dark_hazard(gate_s),
            afterpulse: excess_hazard(self.trap_excess, m),
            persistence: excess_hazard(self.persistence_excess, m),
        }
    }

    /// Record an avalanche ending at `gate_end`: traps are refilled and the
    /// diode is held below breakdown for the dead time.
    pub fn register_detection(&mut self, apd: &ApdModel, gate_end: f64) {
        self.advance_to(apd, gate_end);
        self.trap_excess = (self.trap_excess + apd.afterpulse.a0).min(EXCESS_CAP);
        self.dead_until = self.dead_until.max(gate_end + apd.dead_time_s);
    }
}

/// Sample one gate. The state is advanced to the gate end; on detection the
/// trap population is refilled and the dead time applied.
pub fn sample_gate<R: Rng + ?Sized>(
    apd: &ApdModel,
    state: &mut ApdState,
    power_w: f64,
    gate_start: f64,
    gate_s: f64,
    rng: &mut R,
) -> Result<GateOutcome> {
    if !(power_w >= 0.0) {
        return Err(Error::Domain(format!("optical power {power_w} W must be >= 0")));
    }
    check_gate(gate_s)?;
    if gate_start < state.dead_until {
        return Err(Error::Schedule(format!(
            "gate at {gate_start} s opens inside dead time ending at {} s",
            state.dead_until
        )));
    }
    if gate_start < state.clock {
        return Err(Error::Schedule(format!(
            "gate at {gate_start} s precedes detector clock {} s",
            state.clock
        )));
    }
    state.advance_to(apd, gate_start);
    let hz = state.hazards(apd, power_w, gate_s);
    let gate_end = gate_start + gate_s;
    let u: f64 = rng.random();
    if u < hz.probability() {
        let cause = hz.cause(rng.random());
        state.register_detection(apd, gate_end);
        Ok(GateOutcome {
            detected: true,
            cause: Some(cause),
        })
    } else {
        state.advance_to(apd, gate_end);
        Ok(GateOutcome::NONE)
    }
}

/// Persistence gain from a constant illumination `power_w` lasting `duration_s`
/// while the diode is below breakdown. Solves `dx/dt = κ·μ − γ·x` exactly,
/// which reduces to `κ·μ·Δt` for short intervals.
pub fn persistence_injection(apd: &ApdModel, power_w: f64, duration_s: f64) -> f64 {
    let cp = &apd.persistence;
    if cp.kappa == 0.0 || power_w <= 0.0 || duration_s <= 0.0 {
        return 0.0;
    }
    let source = cp.kappa * apd.photon_flux(power_w);
    let gd = cp.gamma_hz * duration_s;
    if gd < 1e-12 {
        source * duration_s
    } else {
        source * (-(-gd).exp_m1()) / cp.gamma_hz
    }
}

/// Illuminate the idle diode for `duration_s`, advancing the state clock.
pub fn accumulate_persistence(apd: &ApdModel, state: &mut ApdState, power_w: f64, duration_s: f64) {
    if duration_s <= 0.0 {
        return;
    }
    let gain = persistence_injection(apd, power_w, duration_s);
    state.advance_to(apd, state.clock + duration_s);
    state.persistence_excess += gain;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn apd() -> ApdModel {
        ApdModel::ideal(0.1, 0.0, 0.0)
    }

    #[test]
    fn detection_probability_examples() {
        let a = apd();
        assert_eq!(detection_probability(&a, 0.0, 100e-9).unwrap(), 0.0);
        let p = detection_probability(&a, 2.86e-12, 100e-9).unwrap();
        assert!((p - 0.2).abs() < 2e-3, "p = {p}");
        // η·μ·Δt = 20 saturates.
        let power = 20.0 * a.photon_energy_j / (0.1 * 100e-9);
        assert!(detection_probability(&a, power, 100e-9).unwrap() > 1.0 - 1e-8);
        assert!(detection_probability(&a, -1.0, 100e-9).is_err());
    }

    #[test]
    fn estimate_power_small_sample() {
        let e = estimate_power(&apd(), 2, 0.0, 10, 100e-9).unwrap();
        assert_relative_eq!(e.power_w, 2.86e-12, max_relative = 2e-3);
        assert!((e.interval.0 * 1e12 - 0.77).abs() < 0.01, "{:?}", e.interval);
        assert!((e.interval.1 * 1e12 - 5.35).abs() < 0.01, "{:?}", e.interval);
    }

    #[test]
    fn estimate_power_large_sample() {
        let e = estimate_power(&apd(), 2002, 2.0, 10_000, 100e-9).unwrap();
        assert!((e.interval.0 * 1e12 - 2.79).abs() < 0.01, "{:?}", e.interval);
        assert!((e.interval.1 * 1e12 - 2.93).abs() < 0.01, "{:?}", e.interval);
    }

    #[test]
    fn estimate_power_edge_cases() {
        let a = apd();
        assert_eq!(estimate_power(&a, 5, 5.0, 100, 1e-6).unwrap().power_w, 0.0);
        assert!(matches!(
            estimate_power(&a, 10, 0.0, 10, 1e-6),
            Err(Error::Saturated { detections: 10, gates: 10 })
        ));
        assert!(estimate_power(&a, 1, 0.0, 0, 1e-6).is_err());
        assert!(estimate_power(&a, 11, 0.0, 10, 1e-6).is_err());
        let lb = saturated_lower_bound(&a, 0.0, 10, 1e-6).unwrap();
        assert!(lb > 0.0 && lb.is_finite());
    }

    #[test]
    fn afterpulse_law_examples() {
        let mut a = apd();
        a.afterpulse = AfterpulseParams { a0: 0.01, tau_trap_s: 1e-6 };
        let one = afterpulse_probability_gate(&a, 0.0, 10e-9).unwrap();
        assert_relative_eq!(one.probability, 0.01, max_relative = 1e-12);
        let ten = afterpulse_probability_gate(&a, 0.0, 100e-9).unwrap();
        assert_relative_eq!(ten.probability, 1.0 - 0.99f64.powi(10), max_relative = 1e-12);
        assert_relative_eq!(ten.probability, 0.0956, epsilon = 1e-4);
        assert!(!ten.beyond_validity);
        assert!(afterpulse_probability_gate(&a, 0.0, 20e-6).unwrap().beyond_validity);
        a.afterpulse.a0 = 0.0;
        for tau in [0.0, 1e-6, 1e-3] {
            assert_eq!(afterpulse_probability_gate(&a, tau, 1e-6).unwrap().probability, 0.0);
        }
    }

    #[test]
    fn dark_free_unlit_gate_never_fires() {
        let a = apd();
        let mut s = ApdState::fresh();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 0..10_000 {
            let out = sample_gate(&a, &mut s, 0.0, k as f64 * 1e-6, 100e-9, &mut rng).unwrap();
            assert_eq!(out, GateOutcome::NONE);
        }
    }

    #[test]
    fn sample_gate_is_deterministic() {
        let a = ApdModel::default();
        let run = || {
            let mut s = ApdState::fresh();
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let mut t = 0.0f64;
            let mut out = Vec::new();
            for _ in 0..2000 {
                t = t.max(s.dead_until);
                out.push(sample_gate(&a, &mut s, 5e-12, t, 1e-6, &mut rng).unwrap());
                t += 2e-6;
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gate_inside_dead_time_is_rejected() {
        let a = ApdModel::ideal(0.1, 0.0, 1e-6);
        let mut s = ApdState::fresh();
        s.register_detection(&a, 1e-7);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_gate(&a, &mut s, 0.0, 5e-7, 1e-8, &mut rng),
            Err(Error::Schedule(_))
        ));
        assert!(sample_gate(&a, &mut s, 0.0, 1.1e-6, 1e-8, &mut rng).is_ok());
    }

    #[test]
    fn causes_follow_hazard_shares() {
        let hz = GateHazards { signal: 1.0, dark: 1.0, afterpulse: 1.0, persistence: 1.0 };
        assert_eq!(hz.cause(0.1), Cause::Signal);
        assert_eq!(hz.cause(0.3), Cause::Dark);
        assert_eq!(hz.cause(0.6), Cause::Afterpulse);
        assert_eq!(hz.cause(0.9), Cause::Persistence);
    }

    #[test]
    fn persistence_examples() {
        let mut a = apd();
        let mut s = ApdState::fresh();
        accumulate_persistence(&a, &mut s, 1e-9, 1e-5);
        assert_eq!(s.persistence_excess, 0.0);

        a.persistence = PersistenceParams { kappa: 1e-7, gamma_hz: 1e5 };
        let mut s = ApdState { persistence_excess: 0.3, ..ApdState::fresh() };
        accumulate_persistence(&a, &mut s, 0.0, 2e-5);
        assert_relative_eq!(s.persistence_excess, 0.3 * (-2.0f64).exp(), max_relative = 1e-12);

        // Short interval: κ·μ·Δt.
        let mut s = ApdState::fresh();
        accumulate_persistence(&a, &mut s, 1e-9, 1e-12);
        assert_relative_eq!(s.persistence_excess, 1e-7 * a.photon_flux(1e-9) * 1e-12, max_relative = 1e-6);
        // Long interval saturates at κ·μ/γ.
        let mut s = ApdState::fresh();
        accumulate_persistence(&a, &mut s, 1e-9, 1.0);
        assert_relative_eq!(s.persistence_excess, 1e-7 * a.photon_flux(1e-9) / 1e5, max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn detection_probability_monotone(p in 0.0f64..1e-9, dp in 0.0f64..1e-9, eta in 0.01f64..1.0, gate in 1e-9f64..1e-5) {
            let mut a = apd();
            a.efficiency = eta;
            let x = detection_probability(&a, p, gate).unwrap();
            prop_assert!(detection_probability(&a, p + dp, gate).unwrap() >= x);
            prop_assert!(detection_probability(&a, p, gate * 1.5).unwrap() >= x);
            a.efficiency = (eta * 1.2).min(1.0);
            prop_assert!(detection_probability(&a, p, gate).unwrap() >= x);
        }

        #[test]
        fn linearized_within_one_percent(hazard in 1e-8f64..0.02) {
            let a = apd();
            let gate = 1e-7;
            let power = hazard * a.photon_energy_j / (a.efficiency * gate);
            let exact = detection_probability(&a, power, gate).unwrap();
            let lin = detection_probability_linearized(&a, power, gate).unwrap();
            prop_assert!((lin - exact).abs() / lin < 0.01);
        }

        #[test]
        fn estimate_inverts_detection_probability(power in 1e-15f64..1e-11, gate in 1e-9f64..1e-6) {
            let a = apd();
            let p = detection_probability(&a, power, gate).unwrap();
            prop_assume!(p < 0.999_999);
            let back = power_for_probability(&a, p, gate).unwrap();
            prop_assert!(((back - power) / power).abs() < 1e-9);
            // Counting form at infinite statistics, N_dc = 0.
            let n = 1u64 << 52;
            let det = (p * n as f64).round() as u64;
            let e = estimate_power(&a, det, 0.0, n, gate).unwrap();
            prop_assert!(((e.power_w - power) / power).abs() < 1e-6);
        }

        #[test]
        fn afterpulse_monotone(tau in 0.0f64..1e-5, dtau in 1e-9f64..1e-6, gate in 1e-8f64..1e-5, dgate in 1e-9f64..1e-6) {
            let a = ApdModel::default();
            let base = afterpulse_probability_gate(&a, tau, gate).unwrap().probability;
            prop_assert!(afterpulse_probability_gate(&a, tau + dtau, gate).unwrap().probability <= base);
            prop_assert!(afterpulse_probability_gate(&a, tau, gate + dgate).unwrap().probability >= base);
        }

        #[test]
        fn afterpulse_small_limit_is_linear(a0 in 1e-6f64..1e-3, gate_ns in 10.0f64..100.0) {
            let mut a = apd();
            a.afterpulse = AfterpulseParams { a0, tau_trap_s: 1e-6 };
            let m = gate_ns / 10.0;
            prop_assume!(m * a0 < 0.01);
            let p = afterpulse_probability_gate(&a, 0.0, gate_ns * 1e-9).unwrap().probability;
            prop_assert!((p - m * a0).abs() / (m * a0) < 0.01);
        }
    }
}
