//! Planar circular restricted three-body dynamics in the Earth-Moon
//! rotating frame: vector field, effective potential, Jacobi-style energy,
//! variational (state-transition-matrix) equations, and an adaptive
//! propagator with Earth/Moon collision detection.
//!
//! All quantities are canonical. The Earth sits at (-mu, 0), the Moon at
//! (1-mu, 0).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::SystemConstants;
use crate::ode::{Dop853, OdeError, OdeSettings, OdeStats, StepOutcome};

/// Planar rotating-frame state (x, y, u, v) in LU and LU/TU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarState {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

impl PlanarState {
    pub fn new(x: f64, y: f64, u: f64, v: f64) -> Self {
        Self { x, y, u, v }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.u, self.v]
    }

    /// Distance to the Earth's center.
    pub fn earth_distance(&self, mu: f64) -> f64 {
        let xe = self.x + mu;
        (xe * xe + self.y * self.y).sqrt()
    }

    /// Distance to the Moon's center.
    pub fn moon_distance(&self, mu: f64) -> f64 {
        let xm = self.x + mu - 1.0;
        (xm * xm + self.y * self.y).sqrt()
    }

    /// Reflection across the x axis with time direction preserved:
    /// (x, -y, -u, v). Propagating a mirrored state mirrors the trajectory.
    pub fn mirrored(&self) -> Self {
        Self::new(self.x, -self.y, -self.u, self.v)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.u.is_finite() && self.v.is_finite()
    }
}

/// State plus the 4x4 state transition matrix d state(t) / d state(0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedState {
    pub state: PlanarState,
    /// Row-major: `stm[i][j]` = d component_i(t) / d component_j(0).
    pub stm: [[f64; 4]; 4],
}

impl AugmentedState {
    pub fn identity(state: PlanarState) -> Self {
        let mut stm = [[0.0; 4]; 4];
        for (i, row) in stm.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { state, stm }
    }

    /// Applies the STM to an initial-state perturbation.
    pub fn map_perturbation(&self, delta: [f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i] += self.stm[i][j] * delta[j];
            }
        }
        out
    }
}

/// Effective potential of the rotating frame,
/// Ω = (x² + y²)/2 + (1-μ)/r₁ + μ/r₂.
pub fn effective_potential(c: &SystemConstants, s: &PlanarState) -> f64 {
    let mu = c.mu;
    let r1 = s.earth_distance(mu);
    let r2 = s.moon_distance(mu);
    0.5 * (s.x * s.x + s.y * s.y) + (1.0 - mu) / r1 + mu / r2
}

/// Rotating-frame equations of motion:
/// (ẋ, ẏ, u̇, v̇) = (u, v, 2v + ∂Ω/∂x, -2u + ∂Ω/∂y).
pub fn vector_field(c: &SystemConstants, s: &PlanarState) -> [f64; 4] {
    let mut out = [0.0; 4];
    rhs_state(c.mu, &s.to_array(), &mut out);
    out
}

/// Energy integral 2Ω - (u² + v²), conserved along trajectories; used as an
/// integration-accuracy monitor.
pub fn jacobi_energy(c: &SystemConstants, s: &PlanarState) -> f64 {
    2.0 * effective_potential(c, s) - (s.u * s.u + s.v * s.v)
}

/// Jacobian A of the vector field, so that the STM obeys Φ̇ = A Φ.
pub fn variational_matrix(c: &SystemConstants, s: &PlanarState) -> [[f64; 4]; 4] {
    let (oxx, oxy, oyy) = potential_hessian(c.mu, s.x, s.y);
    [
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [oxx, oxy, 0.0, 2.0],
        [oxy, oyy, -2.0, 0.0],
    ]
}

#[inline]
fn rhs_state(mu: f64, y: &[f64; 4], dy: &mut [f64; 4]) {
    let xe = y[0] + mu;
    let xm = xe - 1.0;
    let y2 = y[1] * y[1];
    let r1_sq = xe * xe + y2;
    let r2_sq = xm * xm + y2;
    let inv_r13 = 1.0 / (r1_sq * r1_sq.sqrt());
    let inv_r23 = 1.0 / (r2_sq * r2_sq.sqrt());
    let omega_x = y[0] - (1.0 - mu) * xe * inv_r13 - mu * xm * inv_r23;
    let omega_y = y[1] - (1.0 - mu) * y[1] * inv_r13 - mu * y[1] * inv_r23;
    dy[0] = y[2];
    dy[1] = y[3];
    dy[2] = 2.0 * y[3] + omega_x;
    dy[3] = -2.0 * y[2] + omega_y;
}

/// Second partials (Ωxx, Ωxy, Ωyy) of the effective potential.
#[inline]
fn potential_hessian(mu: f64, x: f64, y: f64) -> (f64, f64, f64) {
    let xe = x + mu;
    let xm = xe - 1.0;
    let y2 = y * y;
    let r1_sq = xe * xe + y2;
    let r2_sq = xm * xm + y2;
    let inv_r1 = 1.0 / r1_sq.sqrt();
    let inv_r2 = 1.0 / r2_sq.sqrt();
    let inv_r13 = inv_r1 * inv_r1 * inv_r1;
    let inv_r23 = inv_r2 * inv_r2 * inv_r2;
    let inv_r15 = inv_r13 * inv_r1 * inv_r1;
    let inv_r25 = inv_r23 * inv_r2 * inv_r2;
    let p1 = 1.0 - mu;
    let oxx = 1.0 - p1 * (inv_r13 - 3.0 * xe * xe * inv_r15) - mu * (inv_r23 - 3.0 * xm * xm * inv_r25);
    let oyy = 1.0 - p1 * (inv_r13 - 3.0 * y2 * inv_r15) - mu * (inv_r23 - 3.0 * y2 * inv_r25);
    let oxy = 3.0 * y * (p1 * xe * inv_r15 + mu * xm * inv_r25);
    (oxx, oxy, oyy)
}

/// Augmented right-hand side: state in `y[0..4]`, STM row-major in `y[4..20]`.
#[inline]
fn rhs_augmented(mu: f64, y: &[f64; 20], dy: &mut [f64; 20]) {
    let state: &[f64; 4] = y[0..4].try_into().expect("state slice");
    let mut ds = [0.0; 4];
    rhs_state(mu, state, &mut ds);
    dy[0..4].copy_from_slice(&ds);

    let (oxx, oxy, oyy) = potential_hessian(mu, y[0], y[1]);
    // Φ̇ = A Φ with A rows (0 0 1 0; 0 0 0 1; oxx oxy 0 2; oxy oyy -2 0).
    for j in 0..4 {
        let p0 = y[4 + j];
        let p1 = y[8 + j];
        let p2 = y[12 + j];
        let p3 = y[16 + j];
        dy[4 + j] = p2;
        dy[8 + j] = p3;
        dy[12 + j] = oxx * p0 + oxy * p1 + 2.0 * p3;
        dy[16 + j] = oxy * p0 + oyy * p1 - 2.0 * p2;
    }
}

/// How the propagation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationCause {
    Completed,
    EarthCollision,
    MoonCollision,
}

/// Collision handling during propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CollisionMode {
    /// No event detection (free propagation).
    Ignore,
    /// Halt at the first surface crossing. When `earth_arming_radius` is
    /// set, the Earth event stays disarmed until the trajectory first
    /// climbs above that radius, so departures from low orbit do not
    /// trigger it; the Moon event is always armed.
    Detect { earth_arming_radius: Option<f64> },
}

#[derive(Debug, Clone, Copy)]
pub struct PropagationOptions {
    /// Absolute and relative integration tolerance.
    pub tolerance: f64,
    pub max_steps: usize,
    pub collisions: CollisionMode,
    /// When set, record dense samples every `sample_interval` time units.
    pub sample_interval: Option<f64>,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-13,
            max_steps: 10_000_000,
            collisions: CollisionMode::Detect {
                earth_arming_radius: None,
            },
            sample_interval: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub final_state: PlanarState,
    /// Elapsed time: the requested time of flight when completed, the event
    /// time when a collision terminated the arc.
    pub time: f64,
    pub terminated_by: TerminationCause,
    pub dense_samples: Option<Vec<(f64, PlanarState)>>,
    pub stats: OdeStats,
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("initial state coincides with a primary center")]
    SingularState,
    #[error("integration failed: {0}")]
    Integration(#[from] OdeError),
}

/// Propagates a state for `tof` time units (negative integrates backward).
pub fn propagate(
    c: &SystemConstants,
    s0: &PlanarState,
    tof: f64,
    options: &PropagationOptions,
) -> Result<PropagationResult, DynamicsError> {
    let mu = c.mu;
    let y0 = s0.to_array();
    let mut samples = options.sample_interval.map(|_| Vec::new());
    let (yf, time, cause, stats) = propagate_core(
        mu,
        |y, dy| rhs_state(mu, y, dy),
        y0,
        tof,
        c,
        options,
        samples.as_mut(),
    )?;
    Ok(PropagationResult {
        final_state: PlanarState::from_array(yf),
        time,
        terminated_by: cause,
        dense_samples: samples
            .map(|v| v.into_iter().map(|(t, a)| (t, PlanarState::from_array(a))).collect()),
        stats,
    })
}

/// Propagates state and STM together. Step control acts on the state
/// components only so the step sequence matches the plain propagation.
pub fn propagate_with_stm(
    c: &SystemConstants,
    s0: &PlanarState,
    tof: f64,
    options: &PropagationOptions,
) -> Result<(AugmentedState, f64, TerminationCause, OdeStats), DynamicsError> {
    let mu = c.mu;
    let aug0 = AugmentedState::identity(*s0);
    let mut y0 = [0.0; 20];
    y0[0..4].copy_from_slice(&aug0.state.to_array());
    for i in 0..4 {
        y0[4 + 4 * i + i] = 1.0;
    }
    let (yf, time, cause, stats) = propagate_core(
        mu,
        |y, dy| rhs_augmented(mu, y, dy),
        y0,
        tof,
        c,
        options,
        None,
    )?;
    let mut stm = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            stm[i][j] = yf[4 + 4 * i + j];
        }
    }
    let state = PlanarState::new(yf[0], yf[1], yf[2], yf[3]);
    Ok((AugmentedState { state, stm }, time, cause, stats))
}

/// Surface-crossing functions; positive outside the body.
#[inline]
fn earth_gap<const N: usize>(mu: f64, radius: f64, y: &[f64; N]) -> f64 {
    let xe = y[0] + mu;
    (xe * xe + y[1] * y[1]).sqrt() - radius
}

#[inline]
fn moon_gap<const N: usize>(mu: f64, radius: f64, y: &[f64; N]) -> f64 {
    let xm = y[0] + mu - 1.0;
    (xm * xm + y[1] * y[1]).sqrt() - radius
}

/// Radial rate toward the given center offset; negative while approaching.
#[inline]
fn radial_rate<const N: usize>(offset: f64, y: &[f64; N]) -> f64 {
    let xr = y[0] + offset;
    let r = (xr * xr + y[1] * y[1]).sqrt();
    (xr * y[2] + y[1] * y[3]) / r
}

/// Close approaches closer than this multiple of the collision radius get a
/// dense interior check for a surface dip between step endpoints.
const PROXIMITY_FACTOR: f64 = 10.0;
/// Event times are located to this absolute tolerance (TU).
const EVENT_TIME_TOL: f64 = 1e-12;

#[allow(clippy::too_many_arguments)]
fn propagate_core<const N: usize, F>(
    mu: f64,
    rhs: F,
    y0: [f64; N],
    tof: f64,
    c: &SystemConstants,
    options: &PropagationOptions,
    mut samples: Option<&mut Vec<(f64, [f64; N])>>,
) -> Result<([f64; N], f64, TerminationCause, OdeStats), DynamicsError>
where
    F: FnMut(&[f64; N], &mut [f64; N]),
{
    let r_earth = c.earth_radius_canonical();
    let r_moon = c.moon_radius_canonical();

    let r1_0 = earth_gap(mu, 0.0, &y0);
    let r2_0 = moon_gap(mu, 0.0, &y0);
    if r1_0 == 0.0 || r2_0 == 0.0 {
        return Err(DynamicsError::SingularState);
    }

    let (detect, arming) = match options.collisions {
        CollisionMode::Ignore => (false, None),
        CollisionMode::Detect {
            earth_arming_radius,
        } => (true, earth_arming_radius),
    };

    // Earth event latch: disarmed until the trajectory first clears the
    // arming radius.
    let mut earth_armed = match arming {
        Some(r_arm) => r1_0 > r_arm,
        None => true,
    };

    if let Some(buf) = samples.as_deref_mut() {
        buf.push((0.0, y0));
    }

    // Immediate triggers: the predicate is already non-positive at start.
    if detect {
        if earth_armed && r1_0 - r_earth <= 0.0 {
            return Ok((y0, 0.0, TerminationCause::EarthCollision, OdeStats::default()));
        }
        if r2_0 - r_moon <= 0.0 {
            return Ok((y0, 0.0, TerminationCause::MoonCollision, OdeStats::default()));
        }
    }

    let settings = OdeSettings {
        rtol: options.tolerance,
        atol: options.tolerance,
        max_steps: options.max_steps,
        error_dims: 4,
        ..OdeSettings::default()
    };
    let mut solver = Dop853::new(rhs, 0.0, y0, tof, &settings);
    let mut next_sample = options.sample_interval.map(|dt| dt * tof.signum());

    loop {
        match solver.advance()? {
            StepOutcome::Finished => break,
            StepOutcome::Advanced => {}
        }

        let t0 = solver.t_prev();
        let t1 = solver.t();
        let ya = *solver.y_prev();
        let yb = *solver.y();

        if detect {
            if !earth_armed {
                if let Some(r_arm) = arming {
                    if earth_gap(mu, 0.0, &yb) > r_arm {
                        earth_armed = true;
                    }
                }
            }

            let mut hit: Option<(f64, TerminationCause)> = None;
            if earth_armed {
                if let Some(t_ev) =
                    crossing_time(&mut solver, t0, t1, &ya, &yb, |y| earth_gap(mu, r_earth, y))
                {
                    hit = Some((t_ev, TerminationCause::EarthCollision));
                }
            }
            if let Some(t_ev) =
                crossing_time(&mut solver, t0, t1, &ya, &yb, |y| moon_gap(mu, r_moon, y))
            {
                let earlier = match hit {
                    Some((t_other, _)) => (t_ev - t_other) * tof.signum() < 0.0,
                    None => true,
                };
                if earlier {
                    hit = Some((t_ev, TerminationCause::MoonCollision));
                }
            }
            // Grazing: a radial minimum inside the step can dip below the
            // surface without a sign change at either endpoint.
            if hit.is_none() {
                for (offset, radius, cause, armed) in [
                    (mu, r_earth, TerminationCause::EarthCollision, earth_armed),
                    (mu - 1.0, r_moon, TerminationCause::MoonCollision, true),
                ] {
                    if !armed {
                        continue;
                    }
                    if let Some(t_ev) =
                        grazing_time(&mut solver, t0, t1, &ya, &yb, offset, radius)
                    {
                        hit = Some((t_ev, cause));
                        break;
                    }
                }
            }

            if let Some((t_ev, cause)) = hit {
                let y_ev = solver.interpolate(t_ev);
                if let Some(buf) = samples.as_deref_mut() {
                    if let Some(dt) = options.sample_interval {
                        sample_until(buf, &mut solver, &mut next_sample, dt, t_ev, tof.signum());
                    }
                    buf.push((t_ev, y_ev));
                }
                return Ok((y_ev, t_ev, cause, solver.stats()));
            }
        }

        if let Some(buf) = samples.as_deref_mut() {
            if let Some(dt) = options.sample_interval {
                let t_now = solver.t();
                sample_until(buf, &mut solver, &mut next_sample, dt, t_now, tof.signum());
            }
        }
    }

    let yf = *solver.y();
    if let Some(buf) = samples.as_deref_mut() {
        let record_end = buf.last().map(|(t, _)| *t != tof).unwrap_or(true);
        if record_end {
            buf.push((tof, yf));
        }
    }
    Ok((yf, tof, TerminationCause::Completed, solver.stats()))
}

/// Emits pending uniform samples with time strictly before `t_limit`.
fn sample_until<const N: usize, F>(
    buf: &mut Vec<(f64, [f64; N])>,
    solver: &mut Dop853<N, F>,
    next_sample: &mut Option<f64>,
    dt: f64,
    t_limit: f64,
    dir: f64,
) where
    F: FnMut(&[f64; N], &mut [f64; N]),
{
    while let Some(ts) = *next_sample {
        if (ts - t_limit) * dir >= 0.0 {
            break;
        }
        buf.push((ts, solver.interpolate(ts)));
        *next_sample = Some(ts + dir * dt);
    }
}

/// Sign-change crossing located by bisection on the dense output; returns
/// the event time when `g` goes from positive to non-positive across the
/// step.
fn crossing_time<const N: usize, F, G>(
    solver: &mut Dop853<N, F>,
    t0: f64,
    t1: f64,
    ya: &[f64; N],
    yb: &[f64; N],
    g: G,
) -> Option<f64>
where
    F: FnMut(&[f64; N], &mut [f64; N]),
    G: Fn(&[f64; N]) -> f64,
{
    let ga = g(ya);
    let gb = g(yb);
    if !(ga > 0.0 && gb <= 0.0) {
        return None;
    }
    Some(bisect_crossing(solver, t0, t1, g))
}

fn bisect_crossing<const N: usize, F, G>(
    solver: &mut Dop853<N, F>,
    mut t_lo: f64,
    mut t_hi: f64,
    g: G,
) -> f64
where
    F: FnMut(&[f64; N], &mut [f64; N]),
    G: Fn(&[f64; N]) -> f64,
{
    // Invariant: g(t_lo) > 0 >= g(t_hi).
    while (t_hi - t_lo).abs() > EVENT_TIME_TOL {
        let tm = 0.5 * (t_lo + t_hi);
        if tm == t_lo || tm == t_hi {
            break;
        }
        let ym = solver.interpolate(tm);
        if g(&ym) > 0.0 {
            t_lo = tm;
        } else {
            t_hi = tm;
        }
    }
    t_hi
}

/// Detects a surface dip at a radial minimum interior to the step: the
/// radial rate changes sign from approaching to receding while the body is
/// within `PROXIMITY_FACTOR` collision radii.
fn grazing_time<const N: usize, F>(
    solver: &mut Dop853<N, F>,
    t0: f64,
    t1: f64,
    ya: &[f64; N],
    yb: &[f64; N],
    offset: f64,
    radius: f64,
) -> Option<f64>
where
    F: FnMut(&[f64; N], &mut [f64; N]),
{
    let gap = |y: &[f64; N]| {
        let xr = y[0] + offset;
        (xr * xr + y[1] * y[1]).sqrt() - radius
    };
    let near = gap(ya).min(gap(yb)) < radius * (PROXIMITY_FACTOR - 1.0);
    if !near {
        return None;
    }
    let forward = t1 > t0;
    let (ra, rb) = if forward {
        (radial_rate(offset, ya), radial_rate(offset, yb))
    } else {
        // Backward in time: approach shows as positive physical rate.
        (-radial_rate(offset, ya), -radial_rate(offset, yb))
    };
    if !(ra < 0.0 && rb > 0.0) {
        return None;
    }
    // Bisect the radial-rate root to find the minimum, then check the gap.
    let mut lo = t0;
    let mut hi = t1;
    for _ in 0..80 {
        if (hi - lo).abs() <= EVENT_TIME_TOL {
            break;
        }
        let tm = 0.5 * (lo + hi);
        let ym = solver.interpolate(tm);
        let rate = if forward {
            radial_rate(offset, &ym)
        } else {
            -radial_rate(offset, &ym)
        };
        if rate < 0.0 {
            lo = tm;
        } else {
            hi = tm;
        }
    }
    let t_min = 0.5 * (lo + hi);
    let y_min = solver.interpolate(t_min);
    if gap(&y_min) > 0.0 {
        return None;
    }
    // The dip crosses zero between the (positive) start and the minimum.
    Some(bisect_crossing(solver, t0, t_min, gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn consts() -> SystemConstants {
        SystemConstants::default()
    }

    /// A grid-style departure state: near-escape ellipse leaving the 167 km
    /// parking orbit, staying clear of the Moon for several revolutions.
    fn sample_orbit_state() -> PlanarState {
        let c = consts();
        let r = (c.earth_radius_km + 167.0) / c.lu_km;
        let v = 1.4 * ((1.0 - c.mu) / r).sqrt() - r;
        PlanarState::new(r - c.mu, 0.0, 0.0, v)
    }

    /// Collinear force balance along y = 0 between the primaries,
    /// located by bisection; independent of the vector field code.
    fn l1_position(c: &SystemConstants) -> f64 {
        let mu = c.mu;
        let g = |x: f64| {
            let xe = x + mu;
            let xm = x + mu - 1.0;
            x - (1.0 - mu) * xe.signum() / (xe * xe) - mu * xm.signum() / (xm * xm)
        };
        let mut lo = -mu + 1e-3;
        let mut hi = 1.0 - mu - 1e-3;
        assert!(g(lo) < 0.0 && g(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn acceleration_vanishes_at_l1() {
        let c = consts();
        let x_l1 = l1_position(&c);
        let s = PlanarState::new(x_l1, 0.0, 0.0, 0.0);
        let f = vector_field(&c, &s);
        assert!(f[2].abs() < 1e-12, "ax = {}", f[2]);
        assert!(f[3].abs() < 1e-12, "ay = {}", f[3]);
    }

    #[test]
    fn vector_field_mirror_symmetry() {
        let c = consts();
        let s = PlanarState::new(0.3, 0.21, -0.4, 0.9);
        let f = vector_field(&c, &s);
        let fm = vector_field(&c, &s.mirrored());
        assert_eq!(fm[0], -f[0]);
        assert_eq!(fm[1], f[1]);
        assert_eq!(fm[2], f[2]);
        assert_eq!(fm[3], -f[3]);
    }

    #[test]
    fn far_field_acceleration_is_centrifugal() {
        let c = consts();
        let s = PlanarState::new(10.0, 0.0, 0.0, 0.0);
        let f = vector_field(&c, &s);
        // Centrifugal term dominates: about +10 in x.
        assert!((f[2] - 10.0).abs() < 0.02, "ax = {}", f[2]);
        // Cross-check the analytic gradient against central differences of
        // the effective potential.
        let h = 1e-6;
        let om = |x: f64, y: f64| effective_potential(&c, &PlanarState::new(x, y, 0.0, 0.0));
        let fd_x = (om(10.0 + h, 0.0) - om(10.0 - h, 0.0)) / (2.0 * h);
        assert!((f[2] - fd_x).abs() < 1e-7, "analytic {} vs fd {}", f[2], fd_x);
    }

    #[test]
    fn jacobi_energy_of_resting_state_is_twice_potential() {
        let c = consts();
        let s = PlanarState::new(0.4, 0.2, 0.0, 0.0);
        assert_eq!(jacobi_energy(&c, &s), 2.0 * effective_potential(&c, &s));
    }

    #[test]
    fn jacobi_energy_mirror_invariant() {
        let c = consts();
        let s = PlanarState::new(0.37, -0.11, 0.52, 0.1);
        assert_eq!(jacobi_energy(&c, &s), jacobi_energy(&c, &s.mirrored()));
    }

    #[test]
    fn jacobi_energy_conserved_along_arc() {
        let c = consts();
        let s = sample_orbit_state();
        let j0 = jacobi_energy(&c, &s);
        let opts = PropagationOptions {
            collisions: CollisionMode::Ignore,
            ..PropagationOptions::default()
        };
        let res = propagate(&c, &s, 2.0 * PI, &opts).unwrap();
        assert_eq!(res.terminated_by, TerminationCause::Completed);
        let j1 = jacobi_energy(&c, &res.final_state);
        assert!((j1 - j0).abs() < 1e-10, "drift {}", (j1 - j0).abs());
    }

    #[test]
    fn variational_matrix_matches_finite_differences() {
        let c = consts();
        let s = PlanarState::new(0.5, 0.3, -0.2, 0.4);
        let a = variational_matrix(&c, &s);
        let h = 1e-7;
        for j in 0..4 {
            let mut sp = s.to_array();
            let mut sm = s.to_array();
            sp[j] += h;
            sm[j] -= h;
            let fp = vector_field(&c, &PlanarState::from_array(sp));
            let fm = vector_field(&c, &PlanarState::from_array(sm));
            for i in 0..4 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                let scale = fd.abs().max(1.0);
                assert!(
                    (a[i][j] - fd).abs() / scale < 1e-6,
                    "A[{i}][{j}] = {} vs fd {}",
                    a[i][j],
                    fd
                );
            }
        }
    }

    #[test]
    fn stm_identity_at_zero_time() {
        let aug = AugmentedState::identity(sample_orbit_state());
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(aug.stm[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    fn mat_mul(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for (k, bk) in b.iter().enumerate() {
                    out[i][j] += a[i][k] * bk[j];
                }
            }
        }
        out
    }

    fn det4(m: &[[f64; 4]; 4]) -> f64 {
        // Laplace expansion is fine for a test.
        let minor = |r: usize, c: usize| {
            let mut sub = [[0.0; 3]; 3];
            let mut ii = 0;
            for i in 0..4 {
                if i == r {
                    continue;
                }
                let mut jj = 0;
                for j in 0..4 {
                    if j == c {
                        continue;
                    }
                    sub[ii][jj] = m[i][j];
                    jj += 1;
                }
                ii += 1;
            }
            sub[0][0] * (sub[1][1] * sub[2][2] - sub[1][2] * sub[2][1])
                - sub[0][1] * (sub[1][0] * sub[2][2] - sub[1][2] * sub[2][0])
                + sub[0][2] * (sub[1][0] * sub[2][1] - sub[1][1] * sub[2][0])
        };
        (0..4).fold(0.0, |acc, j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc + sign * m[0][j] * minor(0, j)
        })
    }

    #[test]
    fn stm_composes_over_legs_and_stays_symplectic() {
        let c = consts();
        let s0 = sample_orbit_state();
        let opts = PropagationOptions {
            collisions: CollisionMode::Ignore,
            ..PropagationOptions::default()
        };
        let t1 = 0.8;
        let t2 = 1.9;

        let (full, _, _, _) = propagate_with_stm(&c, &s0, t2, &opts).unwrap();
        let (leg1, _, _, _) = propagate_with_stm(&c, &s0, t1, &opts).unwrap();
        let (leg2, _, _, _) = propagate_with_stm(&c, &leg1.state, t2 - t1, &opts).unwrap();

        let composed = mat_mul(&leg2.stm, &leg1.stm);
        // Entries grow to ~1e4 through the perigee pass; compare relative
        // to the largest entry.
        let scale = full
            .stm
            .iter()
            .flatten()
            .fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (full.stm[i][j] - composed[i][j]).abs() < 1e-8 * scale,
                    "stm[{i}][{j}] {} vs composed {}",
                    full.stm[i][j],
                    composed[i][j]
                );
            }
        }
        let det = det4(&full.stm);
        assert!((det - 1.0).abs() < 1e-6, "det = {det}");
    }

    #[test]
    fn stm_predicts_perturbed_final_state() {
        let c = consts();
        let s0 = sample_orbit_state();
        let opts = PropagationOptions {
            collisions: CollisionMode::Ignore,
            ..PropagationOptions::default()
        };
        // Short arc: the response to a 1e-8 perturbation must stay above
        // the accumulated integration error for the comparison to resolve.
        let tof = 0.25;
        let (aug, _, _, _) = propagate_with_stm(&c, &s0, tof, &opts).unwrap();

        let delta = 1e-8;
        let mut sp = s0.to_array();
        sp[0] += delta;
        let perturbed = propagate(&c, &PlanarState::from_array(sp), tof, &opts).unwrap();
        let predicted = aug.map_perturbation([delta, 0.0, 0.0, 0.0]);
        let actual: Vec<f64> = perturbed
            .final_state
            .to_array()
            .iter()
            .zip(aug.state.to_array())
            .map(|(a, b)| a - b)
            .collect();
        let err: f64 = predicted
            .iter()
            .zip(&actual)
            .map(|(p, a)| (p - a) * (p - a))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = actual.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / norm < 1e-5, "relative error {}", err / norm);
    }

    #[test]
    fn forward_backward_recovers_initial_state() {
        let c = consts();
        let s0 = sample_orbit_state();
        let opts = PropagationOptions {
            collisions: CollisionMode::Ignore,
            ..PropagationOptions::default()
        };
        // One near-parabolic perigee pass costs ~1e-8 here; stay within the
        // first revolution for the tight componentwise bound.
        let tof = 1.5;
        let fwd = propagate(&c, &s0, tof, &opts).unwrap();
        let back = propagate(&c, &fwd.final_state, -tof, &opts).unwrap();
        let a = back.final_state.to_array();
        let b = s0.to_array();
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() < 1e-9, "component {i}: {} vs {}", a[i], b[i]);
        }
    }

    #[test]
    fn propagated_mirror_matches_mirrored_propagation() {
        let c = consts();
        let s0 = sample_orbit_state();
        let opts = PropagationOptions {
            collisions: CollisionMode::Ignore,
            ..PropagationOptions::default()
        };
        let tof = 3.0;
        // Mirroring reverses the sense of time: integrate the mirrored
        // state backward to retrace the same geometric path.
        let fwd = propagate(&c, &s0, tof, &opts).unwrap();
        let mir = propagate(&c, &s0.mirrored(), -tof, &opts).unwrap();
        let expect = fwd.final_state.mirrored();
        let got = mir.final_state;
        assert!((got.x - expect.x).abs() < 1e-9);
        assert!((got.y - expect.y).abs() < 1e-9);
        assert!((got.u - expect.u).abs() < 1e-9);
        assert!((got.v - expect.v).abs() < 1e-9);
    }

    #[test]
    fn state_inside_earth_terminates_immediately() {
        let c = consts();
        let r = 0.9 * c.earth_radius_canonical();
        let s = PlanarState::new(r - c.mu, 0.0, 0.0, 5.0);
        let res = propagate(&c, &s, 1.0, &PropagationOptions::default()).unwrap();
        assert_eq!(res.terminated_by, TerminationCause::EarthCollision);
        assert_eq!(res.time, 0.0);
    }

    #[test]
    fn moon_impact_reports_event_time() {
        let c = consts();
        // Drop toward the Moon from rest nearby; rotating-frame terms are
        // small at this range, so impact happens well before 1 TU.
        let s = PlanarState::new(1.0 - c.mu + 0.02, 0.0, -0.3, 0.0);
        let res = propagate(&c, &s, 1.0, &PropagationOptions::default()).unwrap();
        assert_eq!(res.terminated_by, TerminationCause::MoonCollision);
        assert!(res.time > 0.0 && res.time < 1.0);
        let r2 = res.final_state.moon_distance(c.mu);
        assert!(
            (r2 - c.moon_radius_canonical()).abs() < 1e-9,
            "impact radius {r2}"
        );
    }

    #[test]
    fn earth_event_disarmed_until_departure_clears_arming_radius() {
        let c = consts();
        let r_dep = (c.earth_radius_km + 167.0) / c.lu_km;
        // Circular-ish start right at the parking radius: inside the arming
        // shell, must not trigger at once.
        let v_circ = ((1.0 - c.mu) / r_dep).sqrt();
        let s = PlanarState::new(r_dep - c.mu, 0.0, 0.0, 1.4 * v_circ - r_dep);
        let opts = PropagationOptions {
            collisions: CollisionMode::Detect {
                earth_arming_radius: Some(1.05 * r_dep),
            },
            ..PropagationOptions::default()
        };
        let res = propagate(&c, &s, 0.5, &opts).unwrap();
        assert_eq!(res.terminated_by, TerminationCause::Completed);
    }

    #[test]
    fn near_singular_passage_is_a_distinct_failure() {
        let c = consts();
        // Radial free fall into the Moon with events off: the step size
        // collapses approaching the singularity.
        let s = PlanarState::new(1.0 - c.mu + 0.002, 0.0, -0.1, -0.002);
        let opts = PropagationOptions {
            collisions: CollisionMode::Ignore,
            max_steps: 200_000,
            ..PropagationOptions::default()
        };
        let err = propagate(&c, &s, 2.0, &opts).unwrap_err();
        assert!(matches!(
            err,
            DynamicsError::Integration(OdeError::StepSizeUnderflow { .. })
                | DynamicsError::Integration(OdeError::MaxStepsExceeded { .. })
        ));
    }

    #[test]
    fn dense_samples_cover_requested_interval() {
        let c = consts();
        let s = sample_orbit_state();
        let opts = PropagationOptions {
            collisions: CollisionMode::Ignore,
            sample_interval: Some(0.25),
            ..PropagationOptions::default()
        };
        let res = propagate(&c, &s, 2.0, &opts).unwrap();
        let samples = res.dense_samples.unwrap();
        assert_eq!(samples.first().unwrap().0, 0.0);
        assert_eq!(samples.last().unwrap().0, 2.0);
        for w in samples.windows(2) {
            assert!(w[1].0 > w[0].0);
        }
        // Uniform interior samples present.
        assert!(samples.iter().any(|(t, _)| (*t - 0.25).abs() < 1e-12));
        // Sampled points agree with a direct propagation to that time.
        let (tm, sm) = samples[2];
        let direct = propagate(&c, &s, tm, &opts).unwrap().final_state;
        assert!((sm.x - direct.x).abs() < 1e-10);
        assert!((sm.y - direct.y).abs() < 1e-10);
    }
}
