//! Physical constants and unit conversions.

use std::f64::consts::TAU;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.854_187_812_8e-12;

/// Ordinary frequency (Hz) to angular frequency (rad/s).
#[inline]
pub fn hz_to_rad(f: f64) -> f64 {
    f * TAU
}

/// Angular frequency (rad/s) to ordinary frequency (Hz).
#[inline]
pub fn rad_to_hz(w: f64) -> f64 {
    w / TAU
}

/// Power in dBm to watts.
#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

/// Power in watts to dBm.
#[inline]
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

/// Linear power factor of an attenuation given in dB.
#[inline]
pub fn attenuation_factor(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_round_trip() {
        for dbm in [-120.0, -30.0, 0.0, 13.5] {
            assert!((watts_to_dbm(dbm_to_watts(dbm)) - dbm).abs() < 1e-12);
        }
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn angular_round_trip() {
        assert_eq!(rad_to_hz(hz_to_rad(1.0)), 1.0);
    }
}
