//! Bi-impulsive transfer boundary model: departure-state construction from
//! the (phase angle, velocity ratio) pair, tangential-circular residuals at
//! both ends, and the two impulse magnitudes.
//!
//! The transfer departs a prograde circular Earth parking orbit tangentially
//! and inserts tangentially into a circular Moon orbit. Both boundary
//! conditions are two-component residuals: a radius condition and a
//! tangency condition written against the inertial velocity.

use serde::{Deserialize, Serialize};

use crate::constants::SystemConstants;
use crate::dynamics::PlanarState;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// The triple that fully determines an initial-guess trajectory: departure
/// phase angle (rad), initial-to-circular velocity ratio, and time of
/// flight (TU).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstructionParams {
    pub alpha: f64,
    pub beta: f64,
    pub tof: f64,
}

impl ConstructionParams {
    pub fn new(alpha: f64, beta: f64, tof: f64) -> Self {
        Self { alpha, beta, tof }
    }

    /// Same parameters with the phase angle wrapped into [0, 2π).
    pub fn normalized(self) -> Self {
        let mut alpha = self.alpha.rem_euclid(TWO_PI);
        if alpha >= TWO_PI {
            alpha = 0.0;
        }
        Self { alpha, ..self }
    }
}

/// Circular parking/target orbit altitudes, km above each surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSpec {
    pub earth_altitude_km: f64,
    pub moon_altitude_km: f64,
}

impl OrbitSpec {
    pub fn new(earth_altitude_km: f64, moon_altitude_km: f64) -> Self {
        Self {
            earth_altitude_km,
            moon_altitude_km,
        }
    }

    /// Departure radius (R_E + h_i) in LU.
    pub fn departure_radius(&self, c: &SystemConstants) -> f64 {
        (c.earth_radius_km + self.earth_altitude_km) / c.lu_km
    }

    /// Insertion radius (R_M + h_f) in LU.
    pub fn insertion_radius(&self, c: &SystemConstants) -> f64 {
        (c.moon_radius_km + self.moon_altitude_km) / c.lu_km
    }
}

impl Default for OrbitSpec {
    /// 167 km Earth parking orbit to a 100 km Moon target orbit.
    fn default() -> Self {
        Self::new(167.0, 100.0)
    }
}

/// Impulse magnitudes; canonical values carry the sign of the speed excess
/// over circular, and the total is the plain sum of the two components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpulseSummary {
    pub departure_km_s: f64,
    pub insertion_km_s: f64,
    pub total_km_s: f64,
    pub departure_canonical: f64,
    pub insertion_canonical: f64,
    pub total_canonical: f64,
}

impl ImpulseSummary {
    /// Propellant-style total: sum of unsigned burn magnitudes.
    pub fn total_magnitude_km_s(&self) -> f64 {
        self.departure_km_s.abs() + self.insertion_km_s.abs()
    }
}

/// Circular speed about the Earth at the departure radius (canonical).
pub fn circular_speed_earth(c: &SystemConstants, orbit: &OrbitSpec) -> f64 {
    ((1.0 - c.mu) / orbit.departure_radius(c)).sqrt()
}

/// Circular speed about the Moon at the insertion radius (canonical).
pub fn circular_speed_moon(c: &SystemConstants, orbit: &OrbitSpec) -> f64 {
    (c.mu / orbit.insertion_radius(c)).sqrt()
}

/// Departure state on the prograde Earth parking orbit.
///
/// The position sits at phase angle `alpha` on the circle of radius
/// (R_E + h_i) about the Earth; the rotating-frame velocity is chosen so the
/// inertial speed is `beta` times local circular and tangential, which makes
/// the departure residual vanish identically.
pub fn departure_state(
    c: &SystemConstants,
    orbit: &OrbitSpec,
    p: &ConstructionParams,
) -> PlanarState {
    let r = orbit.departure_radius(c);
    let (sin_a, cos_a) = p.alpha.sin_cos();
    let speed = p.beta * circular_speed_earth(c, orbit) - r;
    PlanarState {
        x: r * cos_a - c.mu,
        y: r * sin_a,
        u: -speed * sin_a,
        v: speed * cos_a,
    }
}

/// Sensitivity of the departure state to the velocity ratio. The position
/// does not depend on it, so the first two components are zero.
pub fn departure_state_beta_derivative(
    c: &SystemConstants,
    orbit: &OrbitSpec,
    alpha: f64,
) -> [f64; 4] {
    let (sin_a, cos_a) = alpha.sin_cos();
    let v_circ = circular_speed_earth(c, orbit);
    [0.0, 0.0, -v_circ * sin_a, v_circ * cos_a]
}

/// Departure residual: circular radius and inertial tangency at the Earth.
pub fn departure_residual(c: &SystemConstants, orbit: &OrbitSpec, s: &PlanarState) -> [f64; 2] {
    let r = orbit.departure_radius(c);
    let xe = s.x + c.mu;
    [
        xe * xe + s.y * s.y - r * r,
        xe * (s.u - s.y) + s.y * (s.v + xe),
    ]
}

/// Insertion residual: circular radius and inertial tangency at the Moon.
pub fn insertion_residual(c: &SystemConstants, orbit: &OrbitSpec, s: &PlanarState) -> [f64; 2] {
    let r = orbit.insertion_radius(c);
    let xm = s.x + c.mu - 1.0;
    [
        xm * xm + s.y * s.y - r * r,
        xm * (s.u - s.y) + s.y * (s.v + xm),
    ]
}

pub fn insertion_residual_norm(c: &SystemConstants, orbit: &OrbitSpec, s: &PlanarState) -> f64 {
    let r = insertion_residual(c, orbit, s);
    (r[0] * r[0] + r[1] * r[1]).sqrt()
}

/// Gradient of the insertion residual with respect to the state,
/// rows ordered (radius condition, tangency condition).
pub fn insertion_residual_state_jacobian(
    c: &SystemConstants,
    s: &PlanarState,
) -> [[f64; 4]; 2] {
    let xm = s.x + c.mu - 1.0;
    [
        [2.0 * xm, 2.0 * s.y, 0.0, 0.0],
        // d/dx [xm(u-y) + y(v+xm)] = (u-y) + y, and similarly for the rest.
        [s.u, s.v, xm, s.y],
    ]
}

/// Sign of the Moon-centered inertial angular momentum: +1 for a prograde
/// (counterclockwise) insertion, -1 for retrograde.
pub fn insertion_sense(c: &SystemConstants, s: &PlanarState) -> i8 {
    let xm = s.x + c.mu - 1.0;
    let l = xm * (s.v + xm) - s.y * (s.u - s.y);
    if l >= 0.0 {
        1
    } else {
        -1
    }
}

/// Impulse magnitudes for corrected boundary states: inertial speed excess
/// over the local circular speed at each end, reported in km/s and
/// canonical units.
pub fn impulses(
    c: &SystemConstants,
    orbit: &OrbitSpec,
    departure: &PlanarState,
    insertion: &PlanarState,
) -> ImpulseSummary {
    let xe = departure.x + c.mu;
    let dep_speed =
        ((departure.u - departure.y).powi(2) + (departure.v + xe).powi(2)).sqrt();
    let dv_dep = dep_speed - circular_speed_earth(c, orbit);

    let xm = insertion.x + c.mu - 1.0;
    let ins_speed =
        ((insertion.u - insertion.y).powi(2) + (insertion.v + xm).powi(2)).sqrt();
    let dv_ins = ins_speed - circular_speed_moon(c, orbit);

    let departure_km_s = c.velocity_to_km_s(dv_dep);
    let insertion_km_s = c.velocity_to_km_s(dv_ins);
    ImpulseSummary {
        departure_km_s,
        insertion_km_s,
        total_km_s: departure_km_s + insertion_km_s,
        departure_canonical: dv_dep,
        insertion_canonical: dv_ins,
        total_canonical: dv_dep + dv_ins,
    }
}

/// Moon-centered analog of the departure construction; mainly useful for
/// building test states that satisfy the insertion residual exactly.
pub fn moon_circular_state(
    c: &SystemConstants,
    orbit: &OrbitSpec,
    angle: f64,
    speed_ratio: f64,
) -> PlanarState {
    let r = orbit.insertion_radius(c);
    let (sin_a, cos_a) = angle.sin_cos();
    let speed = speed_ratio * circular_speed_moon(c, orbit) - r;
    PlanarState {
        x: r * cos_a + 1.0 - c.mu,
        y: r * sin_a,
        u: -speed * sin_a,
        v: speed * cos_a,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn setup() -> (SystemConstants, OrbitSpec) {
        (SystemConstants::default(), OrbitSpec::default())
    }

    fn norm2(v: [f64; 2]) -> f64 {
        (v[0] * v[0] + v[1] * v[1]).sqrt()
    }

    #[test]
    fn departure_state_at_zero_phase_unit_ratio() {
        let (c, orbit) = setup();
        let r = orbit.departure_radius(&c);
        let s = departure_state(&c, &orbit, &ConstructionParams::new(0.0, 1.0, 1.0));
        let v_circ = ((1.0 - c.mu) / r).sqrt();
        assert_eq!(s.x, r - c.mu);
        assert_eq!(s.y, 0.0);
        assert_eq!(s.u, 0.0);
        assert!((s.v - (v_circ - r)).abs() < 1e-16);
    }

    #[test]
    fn departure_state_at_quarter_phase() {
        let (c, orbit) = setup();
        let r = orbit.departure_radius(&c);
        let s = departure_state(&c, &orbit, &ConstructionParams::new(FRAC_PI_2, 1.41, 1.0));
        let speed = 1.41 * ((1.0 - c.mu) / r).sqrt() - r;
        assert!((s.x + c.mu).abs() < 1e-16);
        assert!((s.y - r).abs() < 1e-16);
        assert!((s.u + speed).abs() < 1e-15);
        assert!(s.v.abs() < 1e-15);
    }

    #[test]
    fn departure_residual_vanishes_by_construction() {
        let (c, orbit) = setup();
        for k in 0..24 {
            let alpha = k as f64 * PI / 12.0;
            for b in [1.4, 1.407, 1.414] {
                let s = departure_state(&c, &orbit, &ConstructionParams::new(alpha, b, 1.0));
                let res = departure_residual(&c, &orbit, &s);
                assert!(
                    norm2(res) < 1e-14,
                    "alpha={alpha} beta={b}: |psi| = {}",
                    norm2(res)
                );
            }
        }
    }

    #[test]
    fn departure_residual_at_double_radius_tangential() {
        let (c, orbit) = setup();
        let r = orbit.departure_radius(&c);
        let theta = 0.7_f64;
        let (sin_t, cos_t) = theta.sin_cos();
        let speed = 0.3;
        // Tangential inertial velocity at twice the parking radius.
        let x = 2.0 * r * cos_t - c.mu;
        let y = 2.0 * r * sin_t;
        let s = PlanarState::new(x, y, y - speed * sin_t, -(x + c.mu) + speed * cos_t);
        let res = departure_residual(&c, &orbit, &s);
        assert!((res[0] - 3.0 * r * r).abs() < 1e-16);
        assert!(res[1].abs() < 1e-16);
    }

    #[test]
    fn departure_residual_flags_radial_velocity() {
        let (c, orbit) = setup();
        let r = orbit.departure_radius(&c);
        let theta = 1.1_f64;
        let (sin_t, cos_t) = theta.sin_cos();
        let speed = 0.4;
        // Radial inertial velocity at the parking radius: rotate the
        // tangential construction by 90 degrees.
        let x = r * cos_t - c.mu;
        let y = r * sin_t;
        let s = PlanarState::new(x, y, y + speed * cos_t, -(x + c.mu) + speed * sin_t);
        let res = departure_residual(&c, &orbit, &s);
        assert!(res[0].abs() < 1e-16);
        // Hand evaluation: the tangency component equals r * speed.
        assert!((res[1] - r * speed).abs() < 1e-16);
    }

    #[test]
    fn insertion_residual_vanishes_for_moon_circular_state() {
        let (c, orbit) = setup();
        for k in 0..8 {
            let s = moon_circular_state(&c, &orbit, k as f64 * PI / 4.0, 1.0);
            assert!(norm2(insertion_residual(&c, &orbit, &s)) < 1e-14);
        }
    }

    #[test]
    fn insertion_residual_at_moon_center() {
        let (c, orbit) = setup();
        let r = orbit.insertion_radius(&c);
        let s = PlanarState::new(1.0 - c.mu, 0.0, 0.0, 0.0);
        let res = insertion_residual(&c, &orbit, &s);
        assert_eq!(res[0], -r * r);
        assert_eq!(res[1], 0.0);
    }

    #[test]
    fn insertion_residual_mirror_flips_tangency_only() {
        let (c, orbit) = setup();
        let s = PlanarState::new(0.99, 0.004, 0.3, -0.2);
        let res = insertion_residual(&c, &orbit, &s);
        let res_m = insertion_residual(&c, &orbit, &s.mirrored());
        assert_eq!(res_m[0], res[0]);
        assert_eq!(res_m[1], -res[1]);
    }

    #[test]
    fn insertion_jacobian_matches_finite_differences() {
        let (c, orbit) = setup();
        let s = PlanarState::new(0.98, 0.01, 0.2, -0.5);
        let jac = insertion_residual_state_jacobian(&c, &s);
        let h = 1e-7;
        for j in 0..4 {
            let mut sp = s.to_array();
            let mut sm = s.to_array();
            sp[j] += h;
            sm[j] -= h;
            let rp = insertion_residual(&c, &orbit, &PlanarState::from_array(sp));
            let rm = insertion_residual(&c, &orbit, &PlanarState::from_array(sm));
            for i in 0..2 {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                assert!(
                    (jac[i][j] - fd).abs() < 1e-6,
                    "jac[{i}][{j}] {} vs {}",
                    jac[i][j],
                    fd
                );
            }
        }
    }

    #[test]
    fn departure_impulse_zero_at_unit_ratio() {
        let (c, orbit) = setup();
        let s = departure_state(&c, &orbit, &ConstructionParams::new(0.9, 1.0, 1.0));
        let moon = moon_circular_state(&c, &orbit, 0.0, 1.0);
        let imp = impulses(&c, &orbit, &s, &moon);
        assert!(imp.departure_canonical.abs() < 1e-13);
        assert!(imp.insertion_canonical.abs() < 1e-13);
    }

    #[test]
    fn departure_impulse_affine_in_velocity_ratio() {
        let (c, orbit) = setup();
        let v_circ = circular_speed_earth(&c, &orbit);
        let moon = moon_circular_state(&c, &orbit, 0.0, 1.0);
        let s = departure_state(&c, &orbit, &ConstructionParams::new(2.2, 1.41, 1.0));
        let imp = impulses(&c, &orbit, &s, &moon);
        assert!(
            (imp.departure_canonical - 0.41 * v_circ).abs() < 1e-13,
            "dv = {}, expected {}",
            imp.departure_canonical,
            0.41 * v_circ
        );
    }

    #[test]
    fn impulse_total_is_exact_component_sum() {
        let (c, orbit) = setup();
        let s = departure_state(&c, &orbit, &ConstructionParams::new(1.0, 1.404, 1.0));
        let moon = moon_circular_state(&c, &orbit, 2.0, 1.3);
        let imp = impulses(&c, &orbit, &s, &moon);
        assert_eq!(imp.total_km_s, imp.departure_km_s + imp.insertion_km_s);
        assert_eq!(
            imp.total_canonical,
            imp.departure_canonical + imp.insertion_canonical
        );
    }

    #[test]
    fn insertion_sense_signs() {
        let (c, orbit) = setup();
        let prograde = moon_circular_state(&c, &orbit, 0.3, 1.0);
        let retro = moon_circular_state(&c, &orbit, 0.3, -1.0);
        assert_eq!(insertion_sense(&c, &prograde), 1);
        assert_eq!(insertion_sense(&c, &retro), -1);
    }

    #[test]
    fn params_normalize_into_primary_interval() {
        let p = ConstructionParams::new(-0.5, 1.4, 1.0).normalized();
        assert!(p.alpha >= 0.0 && p.alpha < TWO_PI);
        assert!((p.alpha - (TWO_PI - 0.5)).abs() < 1e-15);
        let q = ConstructionParams::new(7.0 * PI, 1.4, 1.0).normalized();
        assert!((q.alpha - PI).abs() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Quantified identity: the departure construction satisfies its
            /// own residual over the whole admissible box.
            #[test]
            fn construction_satisfies_departure_residual(
                alpha in 0.0..TWO_PI,
                beta in 1.4_f64..1.414,
            ) {
                let (c, orbit) = setup();
                let s = departure_state(&c, &orbit, &ConstructionParams::new(alpha, beta, 1.0));
                prop_assert!(norm2(departure_residual(&c, &orbit, &s)) < 1e-14);
            }

            /// The departure impulse is affine in the velocity ratio with
            /// slope equal to the local circular speed.
            #[test]
            fn impulse_slope_is_circular_speed(
                alpha in 0.0..TWO_PI,
                b1 in 1.4_f64..1.414,
                b2 in 1.4_f64..1.414,
            ) {
                let (c, orbit) = setup();
                let v_circ = circular_speed_earth(&c, &orbit);
                let moon = moon_circular_state(&c, &orbit, 0.0, 1.0);
                let s1 = departure_state(&c, &orbit, &ConstructionParams::new(alpha, b1, 1.0));
                let s2 = departure_state(&c, &orbit, &ConstructionParams::new(alpha, b2, 1.0));
                let d1 = impulses(&c, &orbit, &s1, &moon).departure_canonical;
                let d2 = impulses(&c, &orbit, &s2, &moon).departure_canonical;
                prop_assert!(((d1 - d2) - (b1 - b2) * v_circ).abs() < 1e-14);
            }
        }
    }
}
