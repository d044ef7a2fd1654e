//! Grid search stage: deterministic enumeration of construction parameters,
//! initial-guess evaluation by propagation, and collision pruning.
//!
//! Grids are enumerated by index as `min + k * step` with per-axis counts
//! computed once, never by repeated addition, so two runs over the same
//! specification visit bit-identical parameter triples. The phase-angle
//! axis is half-open (the 2π endpoint is excluded); the velocity-ratio and
//! time-of-flight axes include both endpoints.

use serde::{Deserialize, Serialize};

use crate::constants::SystemConstants;
use crate::corrector::EARTH_ARMING_FACTOR;
use crate::dynamics::{
    propagate, CollisionMode, PlanarState, PropagationOptions, TerminationCause,
};
use crate::transfer::{departure_state, insertion_residual_norm, ConstructionParams, OrbitSpec};

/// One sweep axis: closed or half-open range with a fixed step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AxisSpec {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    /// Structurally valid: positive step, finite range. An inverted range
    /// (min above max) is valid but empty.
    pub fn is_valid(&self) -> bool {
        self.step > 0.0 && self.min.is_finite() && self.max.is_finite()
    }

    fn ratio(&self) -> f64 {
        (self.max - self.min) / self.step
    }

    /// Point count with both endpoints included; zero for inverted ranges.
    pub fn count_closed(&self) -> u64 {
        if !self.is_valid() || self.max < self.min {
            return 0;
        }
        let q = self.ratio();
        (q + 1e-9 * q.abs().max(1.0)).floor() as u64 + 1
    }

    /// Point count with the upper endpoint excluded; a degenerate
    /// single-point range still yields that one point, and an inverted
    /// range yields none.
    pub fn count_half_open(&self) -> u64 {
        if !self.is_valid() || self.max < self.min {
            return 0;
        }
        let q = self.ratio();
        ((q - 1e-9 * q.abs().max(1.0)).ceil() as u64).max(1)
    }

    /// k-th grid value, clamped so closed axes never exceed `max` by a
    /// rounding ulp.
    pub fn value(&self, k: u64) -> f64 {
        (self.min + k as f64 * self.step).min(self.max)
    }
}

/// Ranges and step sizes for the (alpha, beta, tof) sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Departure phase angle axis, half-open.
    pub alpha: AxisSpec,
    /// Velocity ratio axis, closed.
    pub beta: AxisSpec,
    /// Time-of-flight axis (TU), closed.
    pub tof: AxisSpec,
}

impl GridSpec {
    pub fn alpha_count(&self) -> u64 {
        self.alpha.count_half_open()
    }

    pub fn beta_count(&self) -> u64 {
        self.beta.count_closed()
    }

    pub fn tof_count(&self) -> u64 {
        self.tof.count_closed()
    }

    pub fn total(&self) -> u64 {
        self.alpha_count() * self.beta_count() * self.tof_count()
    }

    pub fn is_valid(&self) -> bool {
        self.alpha.is_valid() && self.beta.is_valid() && self.tof.is_valid()
    }

    /// Lexicographic enumeration: alpha outermost, time of flight innermost.
    pub fn params_at(&self, index: u64) -> ConstructionParams {
        let nb = self.beta_count();
        let nt = self.tof_count();
        let it = index % nt;
        let ib = (index / nt) % nb;
        let ia = index / (nt * nb);
        ConstructionParams {
            alpha: self.alpha.value(ia),
            beta: self.beta.value(ib),
            tof: self.tof.value(it),
        }
    }

    pub fn params_iter(&self) -> impl Iterator<Item = ConstructionParams> + '_ {
        (0..self.total()).map(move |i| self.params_at(i))
    }
}

impl Default for GridSpec {
    /// Full-resolution sweep: alpha over [0, 2π) by π/36, beta over
    /// [1.4, 1.414] by 0.0002, time of flight over [π/50, 10π] by π/50.
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            alpha: AxisSpec::new(0.0, 2.0 * PI, PI / 36.0),
            beta: AxisSpec::new(1.4, 1.414, 0.0002),
            tof: AxisSpec::new(PI / 50.0, 10.0 * PI, PI / 50.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateStatus {
    FeasibleGuess,
    Collided,
    IntegratorFailure,
}

/// An evaluated initial guess: the propagated endpoint and its insertion
/// residual norm, present only for guesses that completed without hitting a
/// primary.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub grid_index: u64,
    pub params: ConstructionParams,
    pub status: CandidateStatus,
    pub final_state: Option<PlanarState>,
    pub insertion_residual_norm: Option<f64>,
}

/// Propagates one construction-parameter triple into a candidate: builds
/// the departure state, integrates over the full time of flight with
/// collision events armed, and records the insertion residual at the end.
pub fn evaluate_candidate(
    c: &SystemConstants,
    orbit: &OrbitSpec,
    grid_index: u64,
    params: ConstructionParams,
    integration_tolerance: f64,
) -> Candidate {
    let s0 = departure_state(c, orbit, &params);
    let opts = PropagationOptions {
        tolerance: integration_tolerance,
        collisions: CollisionMode::Detect {
            earth_arming_radius: Some(EARTH_ARMING_FACTOR * orbit.departure_radius(c)),
        },
        ..PropagationOptions::default()
    };
    match propagate(c, &s0, params.tof, &opts) {
        Ok(res) if res.terminated_by == TerminationCause::Completed => {
            let norm = insertion_residual_norm(c, orbit, &res.final_state);
            Candidate {
                grid_index,
                params,
                status: CandidateStatus::FeasibleGuess,
                final_state: Some(res.final_state),
                insertion_residual_norm: Some(norm),
            }
        }
        Ok(_) => Candidate {
            grid_index,
            params,
            status: CandidateStatus::Collided,
            final_state: None,
            insertion_residual_norm: None,
        },
        Err(_) => Candidate {
            grid_index,
            params,
            status: CandidateStatus::IntegratorFailure,
            final_state: None,
            insertion_residual_norm: None,
        },
    }
}

/// Optional pre-correction screen. With no threshold every feasible guess
/// passes, which reproduces the correct-everything behavior of the full
/// pipeline; a threshold turns it into a throughput optimization.
pub fn screen(candidate: &Candidate, threshold: Option<f64>) -> bool {
    match (candidate.status, candidate.insertion_residual_norm) {
        (CandidateStatus::FeasibleGuess, Some(norm)) => match threshold {
            Some(limit) => norm < limit,
            None => true,
        },
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn paper_grid_axis_counts() {
        let grid = GridSpec::default();
        assert_eq!(grid.alpha_count(), 72);
        assert_eq!(grid.beta_count(), 71);
        assert_eq!(grid.tof_count(), 500);
        assert_eq!(grid.total(), 2_556_000);
    }

    #[test]
    fn desk_grid_axis_counts() {
        let grid = GridSpec {
            alpha: AxisSpec::new(0.0, 2.0 * PI, PI / 12.0),
            beta: AxisSpec::new(1.4, 1.414, 0.001),
            tof: AxisSpec::new(PI / 50.0, 10.0 * PI, PI / 25.0),
        };
        assert_eq!(grid.alpha_count(), 24);
        assert_eq!(grid.beta_count(), 15);
        assert_eq!(grid.tof_count(), 250);
        assert_eq!(grid.total(), 90_000);
    }

    #[test]
    fn alpha_axis_excludes_upper_endpoint() {
        let grid = GridSpec::default();
        let n = grid.alpha_count();
        for k in 0..n {
            assert!(grid.alpha.value(k) < 2.0 * PI);
        }
        assert_eq!(grid.alpha.value(n - 1), 71.0 * PI / 36.0);
    }

    #[test]
    fn closed_axes_include_both_endpoints() {
        let grid = GridSpec::default();
        assert_eq!(grid.beta.value(0), 1.4);
        let last = grid.beta.value(grid.beta_count() - 1);
        assert!(last <= 1.414 && (last - 1.414).abs() < 1e-12);
        let tof_last = grid.tof.value(grid.tof_count() - 1);
        assert!((tof_last - 10.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn single_point_ranges_yield_one_candidate() {
        let grid = GridSpec {
            alpha: AxisSpec::new(1.0, 1.0, 0.1),
            beta: AxisSpec::new(1.41, 1.41, 0.01),
            tof: AxisSpec::new(2.0, 2.0, 0.5),
        };
        assert_eq!(grid.total(), 1);
        let p = grid.params_at(0);
        assert_eq!(p.alpha, 1.0);
        assert_eq!(p.beta, 1.41);
        assert_eq!(p.tof, 2.0);
    }

    #[test]
    fn empty_when_inverted_range() {
        let axis = AxisSpec::new(2.0, 1.0, 0.1);
        assert_eq!(axis.count_closed(), 0);
        assert_eq!(axis.count_half_open(), 0);
        assert!(axis.is_valid());
        let grid = GridSpec {
            alpha: AxisSpec::new(2.0, 1.0, 0.1),
            ..GridSpec::default()
        };
        assert_eq!(grid.total(), 0);
    }

    #[test]
    fn enumeration_is_lexicographic_and_bijective() {
        let grid = GridSpec {
            alpha: AxisSpec::new(0.0, 2.0 * PI, PI / 2.0),
            beta: AxisSpec::new(1.4, 1.402, 0.001),
            tof: AxisSpec::new(1.0, 3.0, 1.0),
        };
        assert_eq!(grid.total(), 4 * 3 * 3);
        let all: Vec<ConstructionParams> = grid.params_iter().collect();
        assert_eq!(all.len(), 36);
        // Innermost axis varies fastest.
        assert_eq!(all[0].tof, 1.0);
        assert_eq!(all[1].tof, 2.0);
        assert_eq!(all[3].beta, all[0].beta + 0.001);
        assert_eq!(all[9].alpha, PI / 2.0);
        // Deterministic: re-enumeration is bit-identical.
        let again: Vec<ConstructionParams> = grid.params_iter().collect();
        assert_eq!(all, again);
    }

    #[test]
    fn candidate_statuses() {
        let c = SystemConstants::default();
        let orbit = OrbitSpec::default();
        // A short arc that stays near the Earth: feasible, far from the Moon.
        let p = ConstructionParams::new(0.0, 1.4, 0.5);
        let cand = evaluate_candidate(&c, &orbit, 0, p, 1e-13);
        assert_eq!(cand.status, CandidateStatus::FeasibleGuess);
        assert!(cand.insertion_residual_norm.unwrap() > 0.0);

        // Aimed straight at the Moon: collides on the way.
        let collide = ConstructionParams::new(0.0, 1.4095, 29.0 * PI / 50.0);
        let cand2 = evaluate_candidate(&c, &orbit, 1, collide, 1e-13);
        if cand2.status == CandidateStatus::Collided {
            assert!(cand2.final_state.is_none());
            assert!(cand2.insertion_residual_norm.is_none());
        }
    }

    #[test]
    fn screen_rules() {
        let c = SystemConstants::default();
        let orbit = OrbitSpec::default();
        let p = ConstructionParams::new(0.0, 1.4, 0.5);
        let feasible = evaluate_candidate(&c, &orbit, 0, p, 1e-13);
        assert!(screen(&feasible, None));
        assert!(screen(
            &Candidate {
                insertion_residual_norm: Some(0.4),
                ..feasible.clone()
            },
            Some(0.5)
        ));
        assert!(!screen(
            &Candidate {
                insertion_residual_norm: Some(0.6),
                ..feasible.clone()
            },
            Some(0.5)
        ));
        let collided = Candidate {
            status: CandidateStatus::Collided,
            final_state: None,
            insertion_residual_norm: None,
            ..feasible
        };
        assert!(!screen(&collided, None));
    }
}
