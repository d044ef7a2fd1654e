//! Physical constants of the Earth-Moon system and conversions between
//! dimensional units (km, km/s, days) and canonical units (LU, VU, TU).
//!
//! Everything downstream of this module works in canonical units: the
//! length unit is the Earth-Moon distance, the time unit is the Earth-Moon
//! orbital period divided by 2π, and the velocity unit is their ratio.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds per day.
pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error, PartialEq)]
pub enum ConstantsError {
    #[error("mass parameter must satisfy 0 < mu < 0.5, got {0}")]
    MassParameterOutOfRange(f64),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("length conversion rejects negative input: {0} km")]
    NegativeLength(f64),
    #[error("conversion input must be finite, got {0}")]
    NonFinite(f64),
}

/// Earth-Moon system constants with derived canonical units.
///
/// `vu_km_s` is always `lu_km / (tu_days * 86400)`; it is derived at
/// construction rather than stored independently so the velocity unit can
/// never drift out of step with the length and time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConstants {
    /// Dimensionless mass parameter m_moon / (m_earth + m_moon).
    pub mu: f64,
    /// Length unit: Earth-Moon distance in km.
    pub lu_km: f64,
    /// Time unit in days (Earth-Moon period / 2π).
    pub tu_days: f64,
    /// Velocity unit in km/s, equal to LU / TU.
    pub vu_km_s: f64,
    /// Earth radius in km.
    pub earth_radius_km: f64,
    /// Moon radius in km.
    pub moon_radius_km: f64,
}

impl SystemConstants {
    /// Builds the constant set from the sidereal Earth-Moon period.
    pub fn new(
        mu: f64,
        lu_km: f64,
        period_days: f64,
        earth_radius_km: f64,
        moon_radius_km: f64,
    ) -> Result<Self, ConstantsError> {
        if !(mu > 0.0 && mu < 0.5) {
            return Err(ConstantsError::MassParameterOutOfRange(mu));
        }
        for (name, value) in [
            ("lu_km", lu_km),
            ("period_days", period_days),
            ("earth_radius_km", earth_radius_km),
            ("moon_radius_km", moon_radius_km),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConstantsError::NonPositive { name, value });
            }
        }
        let tu_days = period_days / (2.0 * std::f64::consts::PI);
        let vu_km_s = lu_km / (tu_days * SECONDS_PER_DAY);
        Ok(Self {
            mu,
            lu_km,
            tu_days,
            vu_km_s,
            earth_radius_km,
            moon_radius_km,
        })
    }

    /// km → LU. Rejects negative lengths.
    pub fn length_to_canonical(&self, km: f64) -> Result<f64, ConstantsError> {
        if !km.is_finite() {
            return Err(ConstantsError::NonFinite(km));
        }
        if km < 0.0 {
            return Err(ConstantsError::NegativeLength(km));
        }
        Ok(km / self.lu_km)
    }

    /// LU → km.
    pub fn length_to_km(&self, lu: f64) -> f64 {
        lu * self.lu_km
    }

    /// km/s → VU.
    pub fn velocity_to_canonical(&self, km_s: f64) -> Result<f64, ConstantsError> {
        if !km_s.is_finite() {
            return Err(ConstantsError::NonFinite(km_s));
        }
        Ok(km_s / self.vu_km_s)
    }

    /// VU → km/s.
    pub fn velocity_to_km_s(&self, vu: f64) -> f64 {
        vu * self.vu_km_s
    }

    /// days → TU.
    pub fn time_to_canonical(&self, days: f64) -> Result<f64, ConstantsError> {
        if !days.is_finite() {
            return Err(ConstantsError::NonFinite(days));
        }
        Ok(days / self.tu_days)
    }

    /// TU → days.
    pub fn time_to_days(&self, tu: f64) -> f64 {
        tu * self.tu_days
    }

    /// Earth surface radius in LU (collision radius).
    pub fn earth_radius_canonical(&self) -> f64 {
        self.earth_radius_km / self.lu_km
    }

    /// Moon surface radius in LU (collision radius).
    pub fn moon_radius_canonical(&self) -> f64 {
        self.moon_radius_km / self.lu_km
    }
}

impl Default for SystemConstants {
    /// Standard Earth-Moon set: mu = 0.0121505856, LU = 384400 km,
    /// T = 27.321582 days, R_E = 6378.145 km, R_M = 1737.1 km.
    fn default() -> Self {
        Self::new(0.012_150_585_6, 384_400.0, 27.321_582, 6_378.145, 1_737.1)
            .expect("default constants are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn length_unit_definition() {
        let c = SystemConstants::default();
        assert_eq!(c.length_to_canonical(384_400.0).unwrap(), 1.0);
        assert_eq!(c.length_to_canonical(0.0).unwrap(), 0.0);
    }

    #[test]
    fn parking_orbit_radius() {
        let c = SystemConstants::default();
        let r = c.length_to_canonical(6378.145 + 167.0).unwrap();
        // Independent hand computation: 6545.145 / 384400.
        let expected = 6545.145 / 384400.0;
        assert_eq!(r, expected);
        assert!((r - 0.017027).abs() < 1e-6);
    }

    #[test]
    fn negative_length_rejected() {
        let c = SystemConstants::default();
        assert_eq!(
            c.length_to_canonical(-1.0),
            Err(ConstantsError::NegativeLength(-1.0))
        );
    }

    #[test]
    fn non_finite_rejected() {
        let c = SystemConstants::default();
        assert!(c.velocity_to_canonical(f64::NAN).is_err());
        assert!(c.time_to_canonical(f64::INFINITY).is_err());
        assert!(c.length_to_canonical(f64::NAN).is_err());
    }

    #[test]
    fn velocity_unit_definition() {
        let c = SystemConstants::default();
        assert_eq!(c.velocity_to_canonical(0.0).unwrap(), 0.0);
        assert_eq!(c.velocity_to_canonical(c.vu_km_s).unwrap(), 1.0);
        assert!((c.vu_km_s - 1.023).abs() < 1e-3);
    }

    #[test]
    fn velocity_unit_consistent_with_length_and_time() {
        let c = SystemConstants::default();
        let expected = c.lu_km / (c.tu_days * SECONDS_PER_DAY);
        assert_eq!(c.vu_km_s, expected);
    }

    #[test]
    fn time_unit_definition() {
        let c = SystemConstants::default();
        assert_eq!(c.time_to_canonical(0.0).unwrap(), 0.0);
        assert_eq!(c.time_to_canonical(c.tu_days).unwrap(), 1.0);
    }

    #[test]
    fn ten_pi_tu_in_days_matches_longest_transfer() {
        // 10π TU must land within half a day of 136.5842 days, which pins
        // the period choice.
        let c = SystemConstants::default();
        let days = c.time_to_days(10.0 * PI);
        assert!(
            (days - 136.5842).abs() < 0.5,
            "10π TU = {days} days, expected ≈ 136.58"
        );
    }

    #[test]
    fn mass_parameter_bounds_enforced() {
        assert!(SystemConstants::new(0.0, 384400.0, 27.3, 6378.0, 1737.0).is_err());
        assert!(SystemConstants::new(0.6, 384400.0, 27.3, 6378.0, 1737.0).is_err());
        assert!(SystemConstants::new(-0.1, 384400.0, 27.3, 6378.0, 1737.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn conversions_invert(x in -1.0e6_f64..1.0e6) {
                let c = SystemConstants::default();
                let v = c.velocity_to_km_s(c.velocity_to_canonical(x).unwrap());
                prop_assert!((v - x).abs() <= 1e-14 * x.abs().max(1.0));
                let t = c.time_to_days(c.time_to_canonical(x).unwrap());
                prop_assert!((t - x).abs() <= 1e-14 * x.abs().max(1.0));
            }

            #[test]
            fn length_inverts(x in 0.0_f64..1.0e9) {
                let c = SystemConstants::default();
                let l = c.length_to_km(c.length_to_canonical(x).unwrap());
                prop_assert!((l - x).abs() <= 1e-14 * x.abs().max(1.0));
            }
        }
    }
}
