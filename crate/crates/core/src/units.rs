//! Physical constants and the dB/dBm conversions used across the crate.
//!
//! Powers are carried in watts, distances in km and times in seconds
//! everywhere; these helpers are the only place logarithmic units appear.

/// Planck constant, J·s (exact, SI 2019).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT_VACUUM: f64 = 299_792_458.0;
/// Default group speed in standard single-mode fiber, km/s.
pub const DEFAULT_GROUP_SPEED_KM_S: f64 = 2.0e5;
/// Default wavelength, m.
pub const DEFAULT_WAVELENGTH_M: f64 = 1550e-9;
/// Reference gate width of the afterpulse characterisation, s.
pub const AFTERPULSE_REFERENCE_GATE_S: f64 = 10e-9;

/// Photon energy hν for a vacuum wavelength in metres.
pub fn photon_energy(wavelength_m: f64) -> f64 {
    PLANCK * SPEED_OF_LIGHT_VACUUM / wavelength_m
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// Linear power factor for a loss of `db` (positive = attenuation).
pub fn db_loss_factor(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// OTDR trace convention: 5·log10 of a power ratio (the fiber is traversed twice).
pub fn five_log(ratio: f64) -> f64 {
    5.0 * ratio.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn photon_energy_at_1550() {
        assert_relative_eq!(photon_energy(1550e-9), 1.281_6e-19, max_relative = 1e-4);
    }

    #[test]
    fn minus_103_dbm_is_exact() {
        assert_relative_eq!(dbm_to_watts(-103.0), 10f64.powf(-10.3) * 1e-3, max_relative = 1e-15);
        assert_relative_eq!(watts_to_dbm(dbm_to_watts(-99.0)), -99.0, epsilon = 1e-12);
    }

    #[test]
    fn five_log_of_hundred_is_ten() {
        assert_relative_eq!(five_log(100.0), 10.0);
    }
}
