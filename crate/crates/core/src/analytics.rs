//! Closed-form predictors: NEP family, dynamic range, two-point resolution
//! advantage, SNR / measurement time and conventional-vs-counting time ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{backscatter_power, BackscatterForm, FiberLink, LaserConfig};
use crate::units::five_log;

fn positive(what: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Domain(format!("{what} = {v} must be > 0")));
    }
    Ok(())
}

fn non_negative(what: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Domain(format!("{what} = {v} must be >= 0")));
    }
    Ok(())
}

/// Inputs of the NEP expressions. Per-gate probabilities and their
/// gate-normalized rates are linked by `p̂ = p_gate / Δt_gate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NepInput {
    pub efficiency: f64,
    pub p_sig_gate: f64,
    pub p_dc_gate: f64,
    pub gates: f64,
    pub gate_s: f64,
    pub photon_energy_j: f64,
}

impl NepInput {
    /// Build from gate-normalized rates p̂_sig, p̂_dc (1/s).
    pub fn from_rates(
        efficiency: f64,
        sig_rate_hz: f64,
        dark_rate_hz: f64,
        gates: f64,
        gate_s: f64,
        photon_energy_j: f64,
    ) -> Self {
        Self {
            efficiency,
            p_sig_gate: sig_rate_hz * gate_s,
            p_dc_gate: dark_rate_hz * gate_s,
            gates,
            gate_s,
            photon_energy_j,
        }
    }

    pub fn sig_rate_hz(&self) -> f64 {
        self.p_sig_gate / self.gate_s
    }

    pub fn dark_rate_hz(&self) -> f64 {
        self.p_dc_gate / self.gate_s
    }

    /// Detection bandwidth B = 1/(2·Δt_gate).
    pub fn bandwidth_hz(&self) -> f64 {
        1.0 / (2.0 * self.gate_s)
    }

    fn check(&self) -> Result<()> {
        positive("efficiency", self.efficiency)?;
        positive("gate width", self.gate_s)?;
        positive("photon energy", self.photon_energy_j)?;
        non_negative("signal probability", self.p_sig_gate)?;
        non_negative("dark probability", self.p_dc_gate)?;
        if !(self.gates >= 1.0) {
            return Err(Error::Domain(format!("gate count {} must be >= 1", self.gates)));
        }
        Ok(())
    }
}

/// NEP of one measurement of `gates` gates, W.
pub fn nep(input: &NepInput) -> Result<f64> {
    input.check()?;
    let p = input.p_sig_gate + input.p_dc_gate;
    Ok(input.photon_energy_j / input.efficiency * (p / (input.gates * input.gate_s * input.gate_s)).sqrt())
}

/// NEP without signal shot noise, W.
pub fn nep0(input: &NepInput) -> Result<f64> {
    nep(&NepInput { p_sig_gate: 0.0, ..*input })
}

/// Bandwidth-normalized NEP `(hν/η)·√(2·(p̂_sig + p̂_dc))`, W/√Hz.
pub fn nep_norm(efficiency: f64, sig_rate_hz: f64, dark_rate_hz: f64, photon_energy_j: f64) -> Result<f64> {
    positive("efficiency", efficiency)?;
    positive("photon energy", photon_energy_j)?;
    non_negative("signal rate", sig_rate_hz)?;
    non_negative("dark rate", dark_rate_hz)?;
    Ok(photon_energy_j / efficiency * (2.0 * (sig_rate_hz + dark_rate_hz)).sqrt())
}

pub fn nep_norm0(efficiency: f64, dark_rate_hz: f64, photon_energy_j: f64) -> Result<f64> {
    nep_norm(efficiency, 0.0, dark_rate_hz, photon_energy_j)
}

/// Gate-normalized signal rate η·P/hν produced by an optical power, 1/s.
pub fn signal_rate(efficiency: f64, power_w: f64, photon_energy_j: f64) -> f64 {
    efficiency * power_w / photon_energy_j
}

/// `5·log10(P_BS0 / NEP₀)`, dB.
pub fn dynamic_range(p_bs0_w: f64, nep0_w: f64) -> Result<f64> {
    positive("initial backscatter power", p_bs0_w)?;
    positive("NEP0", nep0_w)?;
    Ok(five_log(p_bs0_w / nep0_w))
}

/// Dynamic range with the initial backscatter level taken from the link model.
pub fn dynamic_range_for_link(link: &FiberLink, laser: &LaserConfig, nep0_w: f64) -> Result<f64> {
    let p = backscatter_power(link, laser, 0.0, BackscatterForm::Linearized)?;
    dynamic_range(p, nep0_w)
}

/// Pulse-length factor α = 10^(−2x/15) that costs `x_db` of dynamic range.
pub fn two_point_advantage(x_db: f64) -> Result<f64> {
    non_negative("x", x_db)?;
    Ok(10f64.powf(-2.0 * x_db / 15.0))
}

/// Time `(1/f)·(SNR·NEP_norm·√B / P)²` to reach `snr_target`, s.
pub fn measurement_time(snr_target: f64, nep_norm_w: f64, bandwidth_hz: f64, power_w: f64, f_pulse_hz: f64) -> Result<f64> {
    positive("SNR target", snr_target)?;
    positive("NEP_norm", nep_norm_w)?;
    positive("bandwidth", bandwidth_hz)?;
    positive("optical power", power_w)?;
    positive("pulse rate", f_pulse_hz)?;
    let r = snr_target * nep_norm_w * bandwidth_hz.sqrt() / power_w;
    Ok(r * r / f_pulse_hz)
}

/// Linearized SNR `P·√(f·t) / (NEP_norm·√B)`.
pub fn snr(power_w: f64, t_s: f64, f_pulse_hz: f64, nep_norm_w: f64, bandwidth_hz: f64) -> Result<f64> {
    non_negative("measurement time", t_s)?;
    non_negative("optical power", power_w)?;
    positive("pulse rate", f_pulse_hz)?;
    positive("NEP_norm", nep_norm_w)?;
    positive("bandwidth", bandwidth_hz)?;
    Ok(power_w * (f_pulse_hz * t_s).sqrt() / (nep_norm_w * bandwidth_hz.sqrt()))
}

/// SNR `N·p_sig / √(N·(p_sig + p_dc))` with the exact per-gate signal
/// probability `1 − e^(−η·μ·Δt)` and `N = f·t` gates.
pub fn snr_exact(
    power_w: f64,
    t_s: f64,
    f_pulse_hz: f64,
    efficiency: f64,
    dark_rate_hz: f64,
    gate_s: f64,
    photon_energy_j: f64,
) -> Result<f64> {
    non_negative("measurement time", t_s)?;
    non_negative("optical power", power_w)?;
    positive("pulse rate", f_pulse_hz)?;
    positive("efficiency", efficiency)?;
    non_negative("dark rate", dark_rate_hz)?;
    positive("gate width", gate_s)?;
    positive("photon energy", photon_energy_j)?;
    let n = f_pulse_hz * t_s;
    let p_sig = -(-signal_rate(efficiency, power_w, photon_energy_j) * gate_s).exp_m1();
    let p_dc = dark_rate_hz * gate_s;
    if n == 0.0 || p_sig + p_dc == 0.0 {
        return Ok(0.0);
    }
    Ok(n * p_sig / (n * (p_sig + p_dc)).sqrt())
}

/// A linear-mode receiver summarized by its normalized NEP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConventionalDetector {
    pub nep_norm_w: f64,
}

impl ConventionalDetector {
    pub fn new(nep_norm_w: f64) -> Result<Self> {
        positive("conventional NEP_norm", nep_norm_w)?;
        Ok(Self { nep_norm_w })
    }
}

/// Measurement-time ratio `(NEP_conv / NEP_pc)²` at equal SNR.
pub fn time_ratio(conv: &ConventionalDetector, pc_nep_norm_w: f64) -> Result<f64> {
    positive("conventional NEP_norm", conv.nep_norm_w)?;
    positive("photon-counting NEP_norm", pc_nep_norm_w)?;
    let r = conv.nep_norm_w / pc_nep_norm_w;
    Ok(r * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{dbm_to_watts, photon_energy};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hv() -> f64 {
        photon_energy(1550e-9)
    }

    #[test]
    fn nep_examples() {
        let zero = NepInput { efficiency: 0.1, p_sig_gate: 0.0, p_dc_gate: 0.0, gates: 10.0, gate_s: 1e-6, photon_energy_j: hv() };
        assert_eq!(nep(&zero).unwrap(), 0.0);
        let x = NepInput { p_dc_gate: 2e-3, gates: 9e4, ..zero };
        let n0 = nep0(&x).unwrap();
        let oracle = 1.281_6e-18 * (2e-3f64 / (9e4 * 1e-12)).sqrt();
        assert_relative_eq!(n0, oracle, max_relative = 1e-4);
        let quad = NepInput { gates: 3.6e5, ..x };
        assert_relative_eq!(nep0(&quad).unwrap(), n0 / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn nep_norm_examples() {
        let n0 = nep_norm0(0.1, 2000.0, hv()).unwrap();
        assert!((0.7e-16..=1.3e-16).contains(&n0), "{n0}");
        assert_relative_eq!(n0, 8.1e-17, max_relative = 0.01);
        let rate = signal_rate(0.1, dbm_to_watts(-103.0), hv());
        assert_relative_eq!(rate / 0.1, 3.9e5, max_relative = 0.01);
        let n = nep_norm(0.1, rate, 2000.0, hv()).unwrap();
        assert!((n - 3.6e-16).abs() / 3.6e-16 < 0.05, "{n}");
        assert_eq!(nep_norm(0.1, 0.0, 0.0, hv()).unwrap(), 0.0);
    }

    #[test]
    fn dynamic_range_examples() {
        assert_eq!(dynamic_range(1e-9, 1e-9).unwrap(), 0.0);
        assert_relative_eq!(dynamic_range(1e-7, 1e-9).unwrap(), 10.0, epsilon = 1e-12);
        assert!(dynamic_range(0.0, 1e-9).is_err());
        assert!(dynamic_range(1e-9, -1.0).is_err());
        let link = FiberLink::uniform(200.0, 0.2).unwrap();
        let laser = LaserConfig::for_link(&link, 0.4, 1e-6);
        let d = dynamic_range_for_link(&link, &laser, 6.0e-15).unwrap();
        assert!((d - 44.0).abs() < 1.0, "{d}");
    }

    #[test]
    fn two_point_examples() {
        assert!((two_point_advantage(10.0).unwrap() - 0.046).abs() < 0.001);
        assert_eq!(two_point_advantage(0.0).unwrap(), 1.0);
        assert_relative_eq!(two_point_advantage(15.0).unwrap(), 0.01, max_relative = 1e-12);
        assert!(two_point_advantage(-1.0).is_err());
    }

    #[test]
    fn measurement_time_example() {
        let p = dbm_to_watts(-103.0);
        let t = measurement_time(4.0, 3.67e-16, 1e7, p, 500.0).unwrap();
        assert!((15.0..=25.0).contains(&t), "{t}");
        assert_relative_eq!(measurement_time(8.0, 3.67e-16, 1e7, p, 500.0).unwrap(), 4.0 * t, max_relative = 1e-12);
        assert_relative_eq!(measurement_time(4.0, 3.67e-16, 1e7, 2.0 * p, 500.0).unwrap(), t / 4.0, max_relative = 1e-12);
        assert_eq!(snr(p, 0.0, 500.0, 3.67e-16, 1e7).unwrap(), 0.0);
    }

    #[test]
    fn time_ratio_examples() {
        let r = time_ratio(&ConventionalDetector::new(6.3e-15).unwrap(), 3.6e-16).unwrap();
        assert!((290.0..=320.0).contains(&r), "{r}");
        assert_eq!(time_ratio(&ConventionalDetector::new(1e-16).unwrap(), 1e-16).unwrap(), 1.0);
        let pc = 1e-16;
        let lo = time_ratio(&ConventionalDetector::new(63.0 * pc).unwrap(), pc).unwrap();
        let hi = time_ratio(&ConventionalDetector::new(100.0 * pc).unwrap(), pc).unwrap();
        assert!((lo - 4000.0).abs() < 40.0 && (hi - 10000.0).abs() < 1e-6);
        assert!(ConventionalDetector::new(0.0).is_err());
    }

    proptest! {
        #[test]
        fn snr_inverts_measurement_time(s in 0.5f64..50.0, nepn in 1e-17f64..1e-14, b in 1e5f64..1e9, dbm in -120.0f64..-80.0, f in 10.0f64..1e5) {
            let p = dbm_to_watts(dbm);
            let t = measurement_time(s, nepn, b, p, f).unwrap();
            let back = snr(p, t, f, nepn, b).unwrap();
            prop_assert!((back - s).abs() / s < 1e-12);
        }

        #[test]
        fn exact_snr_matches_linear_in_small_signal(hazard in 1e-6f64..0.02, dark in 0.0f64..1e4, t in 0.1f64..100.0) {
            let (eta, gate, f) = (0.1, 1e-7, 1e3);
            let power = hazard * hv() / (eta * gate);
            let sig = signal_rate(eta, power, hv());
            let nn = nep_norm(eta, sig, dark, hv()).unwrap();
            let lin = snr(power, t, f, nn, 1.0 / (2.0 * gate)).unwrap();
            let ex = snr_exact(power, t, f, eta, dark, gate, hv()).unwrap();
            prop_assert!((lin - ex).abs() / ex < 0.01);
        }

        #[test]
        fn nep0_matches_normalized_form(eta in 0.01f64..1.0, dark in 1.0f64..1e5, gate in 1e-9f64..1e-5, gates in 1.0f64..1e9) {
            let input = NepInput::from_rates(eta, 0.0, dark, gates, gate, hv());
            let direct = nep0(&input).unwrap();
            let via = nep_norm0(eta, dark, hv()).unwrap() * (input.bandwidth_hz() / gates).sqrt();
            prop_assert!((direct - via).abs() / direct < 1e-12);
        }

        #[test]
        fn longer_measurement_raises_dynamic_range(d in 1.0f64..1000.0, gates in 1e2f64..1e7) {
            let base = NepInput::from_rates(0.1, 0.0, 2000.0, gates, 1e-6, hv());
            let longer = NepInput { gates: gates * d, ..base };
            let p = 1e-9;
            let gain = dynamic_range(p, nep0(&longer).unwrap()).unwrap() - dynamic_range(p, nep0(&base).unwrap()).unwrap();
            prop_assert!((gain - 2.5 * d.log10()).abs() < 1e-9);
        }

        #[test]
        fn shorter_pulse_costs_x_db(x in 1.0f64..20.0, width_ns in 10.0f64..10_000.0) {
            // Shorter pulse: backscatter ∝ Δl_p and NEP₀ ∝ 1/√Δt_gate with Δt_gate tracking the pulse.
            let link = FiberLink::uniform(50.0, 0.2).unwrap();
            let laser = LaserConfig::for_link(&link, 0.4, width_ns * 1e-9);
            let short = LaserConfig { pulse_width_s: laser.pulse_width_s * two_point_advantage(x).unwrap(), ..laser };
            let dr = |l: &LaserConfig| {
                let input = NepInput::from_rates(0.1, 0.0, 2000.0, 1e5, l.pulse_width_s, hv());
                dynamic_range_for_link(&link, l, nep0(&input).unwrap()).unwrap()
            };
            prop_assert!((dr(&laser) - dr(&short) - x).abs() < 1e-9);
        }
    }
}
