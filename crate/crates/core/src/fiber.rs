//! Deterministic optical model of the fiber under test.
//!
//! Given a piecewise link description and a laser pulse, this module returns
//! the expected optical power arriving back at the detector as a function of
//! round-trip delay: Rayleigh backscatter from the local segment, attenuated
//! by the round trip to that point, plus rectangular reflection pulses from
//! reflective point events.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::units::{self, DEFAULT_GROUP_SPEED_KM_S, DEFAULT_WAVELENGTH_M};

/// Assumed capture ratio at 1550 nm. Not a measured value; reports flag it.
pub const DEFAULT_CAPTURE_RATIO: f64 = 0.0015;
/// Rayleigh scattering coefficient of standard fiber at 1550 nm, 1/km.
pub const DEFAULT_SCATTERING_PER_KM: f64 = 0.04;
pub const DEFAULT_ATTENUATION_DB_PER_KM: f64 = 0.2;

/// Slack used when comparing positions against segment and link boundaries, km.
const POSITION_EPS_KM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberSegment {
    pub length_km: f64,
    /// One-way total attenuation, dB/km.
    pub attenuation_db_per_km: f64,
    /// Rayleigh scattering coefficient α_s, 1/km.
    pub scattering_per_km: f64,
    /// Fraction S of scattered light recaptured in the backward guided mode.
    pub capture_ratio: f64,
}

impl FiberSegment {
    /// Standard single-mode fiber at 1550 nm with the default scattering parameters.
    pub fn standard(length_km: f64) -> Self {
        Self::with_attenuation(length_km, DEFAULT_ATTENUATION_DB_PER_KM)
    }

    pub fn with_attenuation(length_km: f64, attenuation_db_per_km: f64) -> Self {
        Self {
            length_km,
            attenuation_db_per_km,
            scattering_per_km: DEFAULT_SCATTERING_PER_KM,
            capture_ratio: DEFAULT_CAPTURE_RATIO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km > 0.0 && self.length_km.is_finite()) {
            return Err(invalid("segment", format!("length {} km must be > 0", self.length_km)));
        }
        if !(self.attenuation_db_per_km >= 0.0 && self.attenuation_db_per_km.is_finite()) {
            return Err(invalid(
                "segment",
                format!("attenuation {} dB/km must be >= 0", self.attenuation_db_per_km),
            ));
        }
        if !(self.scattering_per_km > 0.0 && self.scattering_per_km.is_finite()) {
            return Err(invalid(
                "segment",
                format!("scattering coefficient {} /km must be > 0", self.scattering_per_km),
            ));
        }
        if !(self.capture_ratio > 0.0 && self.capture_ratio < 1.0) {
            return Err(invalid(
                "segment",
                format!("capture ratio {} must lie in (0, 1)", self.capture_ratio),
            ));
        }
        Ok(())
    }
}

/// A localized loss and/or reflection (connector, splice, splitter).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEvent {
    pub position_km: f64,
    pub loss_db: f64,
    /// Reflectance in dB (<= 0); `None` for a non-reflective event.
    pub reflectance_db: Option<f64>,
}

impl PointEvent {
    pub fn loss(position_km: f64, loss_db: f64) -> Self {
        Self {
            position_km,
            loss_db,
            reflectance_db: None,
        }
    }

    pub fn reflective(position_km: f64, loss_db: f64, reflectance_db: f64) -> Self {
        Self {
            position_km,
            loss_db,
            reflectance_db: Some(reflectance_db),
        }
    }

    fn reflectance(&self) -> Option<f64> {
        self.reflectance_db.filter(|r| r.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberLink {
    segments: Vec<FiberSegment>,
    events: Vec<PointEvent>,
    group_speed_km_s: f64,
}

impl FiberLink {
    pub fn new(segments: Vec<FiberSegment>, events: Vec<PointEvent>) -> Result<Self> {
        Self::with_group_speed(segments, events, DEFAULT_GROUP_SPEED_KM_S)
    }

    pub fn with_group_speed(
        segments: Vec<FiberSegment>,
        mut events: Vec<PointEvent>,
        group_speed_km_s: f64,
    ) -> Result<Self> {
        if segments.is_empty() {
            return Err(invalid("fiber", "link needs at least one segment"));
        }
        for s in &segments {
            s.validate()?;
        }
        if !(group_speed_km_s > 0.0 && group_speed_km_s.is_finite()) {
            return Err(invalid("fiber", format!("group speed {group_speed_km_s} km/s must be > 0")));
        }
        let length: f64 = segments.iter().map(|s| s.length_km).sum();
        for e in &events {
            if !(e.position_km >= 0.0 && e.position_km <= length + POSITION_EPS_KM) {
                return Err(invalid(
                    "event",
                    format!("position {} km outside link [0, {length}] km", e.position_km),
                ));
            }
            if !(e.loss_db >= 0.0 && e.loss_db.is_finite()) {
                return Err(invalid("event", format!("loss {} dB must be >= 0", e.loss_db)));
            }
            if let Some(r) = e.reflectance_db {
                if r > 0.0 || r.is_nan() {
                    return Err(invalid("event", format!("reflectance {r} dB must be <= 0")));
                }
            }
            if e.loss_db == 0.0 && e.reflectance().is_none() {
                return Err(invalid(
                    "event",
                    format!("event at {} km has neither loss nor reflectance", e.position_km),
                ));
            }
        }
        events.sort_by(|a, b| a.position_km.total_cmp(&b.position_km));
        Ok(Self {
            segments,
            events,
            group_speed_km_s,
        })
    }

    /// A single standard segment with no events.
    pub fn uniform(length_km: f64, attenuation_db_per_km: f64) -> Result<Self> {
        Self::new(
            vec![FiberSegment::with_attenuation(length_km, attenuation_db_per_km)],
            Vec::new(),
        )
    }

    pub fn segments(&self) -> &[FiberSegment] {
        &self.segments
    }

    pub fn events(&self) -> &[PointEvent] {
        &self.events
    }

    pub fn group_speed_km_s(&self) -> f64 {
        self.group_speed_km_s
    }

    pub fn length_km(&self) -> f64 {
        self.segments.iter().map(|s| s.length_km).sum()
    }

    /// Round-trip time of flight over the whole link, s.
    pub fn round_trip_s(&self) -> f64 {
        2.0 * self.length_km() / self.group_speed_km_s
    }

    /// Highest pulse repetition rate that keeps one pulse in the fiber.
    pub fn max_pulse_rate_hz(&self) -> f64 {
        self.group_speed_km_s / (2.0 * self.length_km())
    }

    pub fn distance_at_delay(&self, delay_s: f64) -> f64 {
        self.group_speed_km_s * delay_s / 2.0
    }

    pub fn delay_at_distance(&self, z_km: f64) -> f64 {
        2.0 * z_km / self.group_speed_km_s
    }

    fn check_position(&self, z_km: f64) -> Result<()> {
        let len = self.length_km();
        if z_km.is_nan() || z_km < 0.0 || z_km > len + POSITION_EPS_KM {
            return Err(Error::Range {
                what: "position_km",
                value: z_km,
                min: 0.0,
                max: len,
            });
        }
        Ok(())
    }

    /// Segment covering `z_km`; a boundary position belongs to the following segment.
    pub fn segment_at(&self, z_km: f64) -> Result<&FiberSegment> {
        self.check_position(z_km)?;
        let mut start = 0.0;
        for seg in &self.segments {
            if z_km < start + seg.length_km {
                return Ok(seg);
            }
            start += seg.length_km;
        }
        Ok(self.segments.last().expect("non-empty"))
    }

    /// One-way loss from the launch point to `z_km`, dB: distributed
    /// attenuation plus every event located strictly before `z_km`.
    pub fn cumulative_loss(&self, z_km: f64) -> Result<f64> {
        self.check_position(z_km)?;
        let mut loss = 0.0;
        let mut start = 0.0;
        for seg in &self.segments {
            if z_km <= start {
                break;
            }
            let covered = (z_km - start).min(seg.length_km);
            loss += covered * seg.attenuation_db_per_km;
            start += seg.length_km;
        }
        loss += self
            .events
            .iter()
            .filter(|e| e.position_km < z_km)
            .map(|e| e.loss_db)
            .sum::<f64>();
        Ok(loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserConfig {
    /// Effective peak power launched into the fiber (after internal and connector losses), W.
    pub peak_power_w: f64,
    pub pulse_width_s: f64,
    pub repetition_hz: f64,
    pub wavelength_m: f64,
}

impl LaserConfig {
    /// Laser running at the highest repetition rate the link allows.
    pub fn for_link(link: &FiberLink, peak_power_w: f64, pulse_width_s: f64) -> Self {
        Self {
            peak_power_w,
            pulse_width_s,
            repetition_hz: link.max_pulse_rate_hz(),
            wavelength_m: DEFAULT_WAVELENGTH_M,
        }
    }

    pub fn photon_energy(&self) -> f64 {
        units::photon_energy(self.wavelength_m)
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.repetition_hz
    }

    /// Spatial pulse length Δl_p = c·Δt_pulse, km.
    pub fn pulse_length_km(&self, link: &FiberLink) -> f64 {
        link.group_speed_km_s() * self.pulse_width_s
    }

    pub fn validate(&self, link: &FiberLink) -> Result<()> {
        if !(self.peak_power_w > 0.0 && self.peak_power_w.is_finite()) {
            return Err(invalid("laser", format!("peak power {} W must be > 0", self.peak_power_w)));
        }
        if !(self.pulse_width_s > 0.0 && self.pulse_width_s.is_finite()) {
            return Err(invalid("laser", format!("pulse width {} s must be > 0", self.pulse_width_s)));
        }
        if !(self.wavelength_m > 0.0 && self.wavelength_m.is_finite()) {
            return Err(invalid("laser", format!("wavelength {} m must be > 0", self.wavelength_m)));
        }
        let max = link.max_pulse_rate_hz();
        if !(self.repetition_hz > 0.0) || self.repetition_hz > max * (1.0 + 1e-9) {
            return Err(invalid(
                "laser",
                format!(
                    "repetition rate {} Hz must be in (0, {max}] Hz for a {} km link",
                    self.repetition_hz,
                    link.length_km()
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackscatterForm {
    /// S·P·α_s·Δl_p, valid for α_s·Δl_p ≪ 1.
    #[default]
    Linearized,
    /// S·P·(1 − exp(−α_s·Δl_p)).
    Exact,
}

/// Rayleigh backscatter power returning from position `z_km`, W.
pub fn backscatter_power(
    link: &FiberLink,
    laser: &LaserConfig,
    z_km: f64,
    form: BackscatterForm,
) -> Result<f64> {
    let seg = link.segment_at(z_km)?;
    let loss = link.cumulative_loss(z_km)?;
    let pulse_km = laser.pulse_length_km(link);
    let scattered = match form {
        BackscatterForm::Linearized => seg.scattering_per_km * pulse_km,
        BackscatterForm::Exact => -(-seg.scattering_per_km * pulse_km).exp_m1(),
    };
    Ok(seg.capture_ratio * laser.peak_power_w * scattered * units::db_loss_factor(2.0 * loss))
}

/// Expected optical power on the detector at round-trip `delay_s`, W.
///
/// Reflections are rectangular pulses of spatial width Δl_p centred on the event.
pub fn incident_power(link: &FiberLink, laser: &LaserConfig, delay_s: f64) -> Result<f64> {
    let max = link.round_trip_s();
    if delay_s.is_nan() || delay_s < 0.0 || delay_s > max * (1.0 + 1e-12) {
        return Err(Error::Range {
            what: "delay_s",
            value: delay_s,
            min: 0.0,
            max,
        });
    }
    let z = link.distance_at_delay(delay_s).min(link.length_km());
    let mut power = backscatter_power(link, laser, z, BackscatterForm::Linearized)?;
    let half_window = laser.pulse_length_km(link) / 2.0;
    for e in link.events() {
        if let Some(r) = e.reflectance() {
            if (z - e.position_km).abs() <= half_window {
                let to_event = link.cumulative_loss(e.position_km)?;
                power += laser.peak_power_w
                    * units::db_loss_factor(-r)
                    * units::db_loss_factor(2.0 * to_event);
            }
        }
    }
    Ok(power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn laser_1us(link: &FiberLink) -> LaserConfig {
        LaserConfig::for_link(link, 0.4, 1e-6)
    }

    fn loss_link() -> FiberLink {
        FiberLink::new(
            vec![FiberSegment::standard(8.0), FiberSegment::standard(8.0)],
            vec![PointEvent::reflective(8.0, 17.0, -45.0)],
        )
        .unwrap()
    }

    #[test]
    fn cumulative_loss_examples() {
        let link = FiberLink::uniform(200.0, 0.2).unwrap();
        assert_relative_eq!(link.cumulative_loss(100.0).unwrap(), 20.0, epsilon = 1e-12);
        assert_eq!(link.cumulative_loss(0.0).unwrap(), 0.0);
        let link = loss_link();
        assert_relative_eq!(link.cumulative_loss(8.001).unwrap(), 18.6002, epsilon = 1e-9);
        // The event itself is not "strictly before" its own position.
        assert_relative_eq!(link.cumulative_loss(8.0).unwrap(), 1.6, epsilon = 1e-12);
    }

    #[test]
    fn cumulative_loss_out_of_range() {
        let link = FiberLink::uniform(10.0, 0.2).unwrap();
        assert!(matches!(link.cumulative_loss(10.5), Err(Error::Range { .. })));
        assert!(matches!(link.cumulative_loss(-0.1), Err(Error::Range { .. })));
    }

    #[test]
    fn backscatter_examples() {
        let link = FiberLink::uniform(200.0, 0.2).unwrap();
        let laser = laser_1us(&link);
        assert_relative_eq!(laser.pulse_length_km(&link), 0.2, epsilon = 1e-15);
        let p0 = backscatter_power(&link, &laser, 0.0, BackscatterForm::Linearized).unwrap();
        assert_relative_eq!(p0, 4.8e-6, max_relative = 1e-12);
        let p50 = backscatter_power(&link, &laser, 50.0, BackscatterForm::Linearized).unwrap();
        assert_relative_eq!(p50, 4.8e-8, max_relative = 1e-12);
    }

    #[test]
    fn exact_vs_linearized_at_small_product() {
        // α_s·Δl_p = 0.008 with a 1 µs pulse (0.2 km) and α_s = 0.04 /km.
        let link = FiberLink::uniform(200.0, 0.2).unwrap();
        let laser = laser_1us(&link);
        let lin = backscatter_power(&link, &laser, 0.0, BackscatterForm::Linearized).unwrap();
        let exact = backscatter_power(&link, &laser, 0.0, BackscatterForm::Exact).unwrap();
        let expected_ratio = (1.0 - (-0.008f64).exp()) / 0.008;
        assert_relative_eq!(exact / lin, expected_ratio, max_relative = 1e-12);
        assert!((1.0 - exact / lin - 0.004).abs() < 2e-5);
    }

    #[test]
    fn reflection_term() {
        let link = loss_link();
        let laser = laser_1us(&link);
        let at_event = incident_power(&link, &laser, link.delay_at_distance(8.0)).unwrap();
        let bs = backscatter_power(&link, &laser, 8.0, BackscatterForm::Linearized).unwrap();
        let refl = at_event - bs;
        assert_relative_eq!(refl, 0.4 * 10f64.powf(-4.5) * 10f64.powf(-0.32), max_relative = 1e-9);
        assert_relative_eq!(refl, 6.05e-6, max_relative = 2e-3);
        // Outside the Δl_p/2 window only backscatter remains.
        let d = link.delay_at_distance(8.0 + 0.11);
        let far = incident_power(&link, &laser, d).unwrap();
        let bs_far = backscatter_power(&link, &laser, 8.11, BackscatterForm::Linearized).unwrap();
        assert_eq!(far, bs_far);
    }

    #[test]
    fn no_events_means_backscatter_only() {
        let link = FiberLink::uniform(50.0, 0.2).unwrap();
        let laser = laser_1us(&link);
        for i in 0..50 {
            let z = i as f64;
            let p = incident_power(&link, &laser, link.delay_at_distance(z)).unwrap();
            let bs = backscatter_power(&link, &laser, z, BackscatterForm::Linearized).unwrap();
            assert_relative_eq!(p, bs, max_relative = 1e-12);
        }
    }

    #[test]
    fn negative_delay_is_range_error() {
        let link = FiberLink::uniform(50.0, 0.2).unwrap();
        let laser = laser_1us(&link);
        assert!(matches!(incident_power(&link, &laser, -1e-9), Err(Error::Range { .. })));
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        assert!(FiberLink::new(vec![], vec![]).is_err());
        assert!(FiberLink::uniform(-1.0, 0.2).is_err());
        let mut seg = FiberSegment::standard(1.0);
        seg.capture_ratio = 1.0;
        assert!(FiberLink::new(vec![seg], vec![]).is_err());
        assert!(FiberLink::new(vec![FiberSegment::standard(1.0)], vec![PointEvent::loss(2.0, 1.0)]).is_err());
        assert!(FiberLink::new(
            vec![FiberSegment::standard(1.0)],
            vec![PointEvent { position_km: 0.5, loss_db: 0.0, reflectance_db: None }]
        )
        .is_err());
        let link = FiberLink::uniform(200.0, 0.2).unwrap();
        assert_relative_eq!(link.max_pulse_rate_hz(), 500.0);
        let mut laser = laser_1us(&link);
        laser.repetition_hz = 600.0;
        assert!(laser.validate(&link).is_err());
    }

    proptest! {
        #[test]
        fn backscatter_strictly_decreasing(att in 0.01f64..1.0, z in 0.0f64..49.0, dz in 0.01f64..1.0) {
            let link = FiberLink::uniform(50.0, att).unwrap();
            let laser = laser_1us(&link);
            let a = backscatter_power(&link, &laser, z, BackscatterForm::Linearized).unwrap();
            let b = backscatter_power(&link, &laser, z + dz, BackscatterForm::Linearized).unwrap();
            prop_assert!(b < a);
        }

        #[test]
        fn five_log_slope_equals_attenuation(att in 0.0f64..1.0, z in 0.0f64..40.0, dz in 0.1f64..10.0) {
            let link = FiberLink::uniform(50.0, att).unwrap();
            let laser = laser_1us(&link);
            let a = backscatter_power(&link, &laser, z, BackscatterForm::Linearized).unwrap();
            let b = backscatter_power(&link, &laser, z + dz, BackscatterForm::Linearized).unwrap();
            let slope = (units::five_log(b) - units::five_log(a)) / dz;
            prop_assert!((slope + att).abs() < 1e-9);
        }

        #[test]
        fn linearized_within_one_percent(alpha_s in 0.001f64..0.1, width_us in 0.01f64..1.0) {
            let mut seg = FiberSegment::standard(50.0);
            seg.scattering_per_km = alpha_s;
            let link = FiberLink::new(vec![seg], vec![]).unwrap();
            let laser = LaserConfig::for_link(&link, 0.4, width_us * 1e-6);
            prop_assume!(alpha_s * laser.pulse_length_km(&link) < 0.02);
            let lin = backscatter_power(&link, &laser, 1.0, BackscatterForm::Linearized).unwrap();
            let exact = backscatter_power(&link, &laser, 1.0, BackscatterForm::Exact).unwrap();
            prop_assert!((lin - exact).abs() / exact < 0.01);
        }

        #[test]
        fn pure_loss_event_drops_trace_by_its_loss(loss in 0.1f64..30.0) {
            let link = FiberLink::new(
                vec![FiberSegment::standard(20.0)],
                vec![PointEvent::loss(10.0, loss)],
            ).unwrap();
            let laser = laser_1us(&link);
            let eps = 1e-6;
            let before = backscatter_power(&link, &laser, 10.0 - eps, BackscatterForm::Linearized).unwrap();
            let after = backscatter_power(&link, &laser, 10.0 + eps, BackscatterForm::Linearized).unwrap();
            let drop = units::five_log(before) - units::five_log(after);
            prop_assert!((drop - loss).abs() < 1e-5);
        }
    }
}
