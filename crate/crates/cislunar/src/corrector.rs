//! Trajectory correction: with the departure phase angle frozen, adjust the
//! velocity ratio and time of flight inside box bounds until the insertion
//! residual vanishes.
//!
//! The two residuals in two variables are solved by damped Gauss-Newton
//! (Levenberg-Marquardt) with projection onto the box. The Jacobian is
//! analytic: sensitivity to the velocity ratio chains the insertion-residual
//! gradient through the state transition matrix and the departure-state
//! derivative, and sensitivity to the time of flight is the residual
//! gradient applied to the terminal vector field.

use serde::{Deserialize, Serialize};

use crate::constants::SystemConstants;
use crate::dynamics::{
    propagate, propagate_with_stm, vector_field, CollisionMode, PlanarState, PropagationOptions,
    TerminationCause,
};
use crate::transfer::{
    departure_state, departure_state_beta_derivative, insertion_residual,
    insertion_residual_state_jacobian, ConstructionParams, OrbitSpec,
};

/// Departure orbits arm the Earth-collision event only after the trajectory
/// first climbs past this multiple of the departure radius.
pub const EARTH_ARMING_FACTOR: f64 = 1.05;

/// Box bounds, tolerances, and budgets for one correction run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionSettings {
    pub beta_min: f64,
    pub beta_max: f64,
    pub tof_min: f64,
    pub tof_max: f64,
    /// Minimum accepted parameter step before declaring a stall.
    pub step_tolerance: f64,
    /// Minimum residual-norm decrease per accepted step before declaring a
    /// stall.
    pub function_tolerance: f64,
    /// Constraint tolerance mirrored from the solver configuration; the
    /// acceptance threshold below is what decides success.
    pub constraint_tolerance: f64,
    pub max_iterations: usize,
    pub max_residual_evals: usize,
    /// A correction converged once the residual norm drops below this.
    pub acceptance_threshold: f64,
    /// Initial Levenberg-Marquardt damping.
    pub initial_damping: f64,
    /// Consecutive rejected trial steps tolerated when trials keep hitting
    /// a primary before the correction is abandoned as colliding.
    pub max_consecutive_rejections: usize,
    /// Integration tolerance for every arc evaluated by the corrector.
    pub integration_tolerance: f64,
}

impl Default for CorrectionSettings {
    fn default() -> Self {
        Self {
            beta_min: 1.4,
            beta_max: 1.414,
            tof_min: std::f64::consts::PI / 50.0,
            tof_max: 10.0 * std::f64::consts::PI,
            step_tolerance: 1e-8,
            function_tolerance: 1e-8,
            constraint_tolerance: 1e-8,
            max_iterations: 500,
            max_residual_evals: 500,
            acceptance_threshold: 1e-8,
            initial_damping: 1e-3,
            max_consecutive_rejections: 20,
            integration_tolerance: 1e-13,
        }
    }
}

impl CorrectionSettings {
    pub fn clamp(&self, p: ConstructionParams) -> ConstructionParams {
        ConstructionParams {
            alpha: p.alpha,
            beta: p.beta.clamp(self.beta_min, self.beta_max),
            tof: p.tof.clamp(self.tof_min, self.tof_max),
        }
    }

    pub fn contains(&self, p: &ConstructionParams) -> bool {
        p.beta >= self.beta_min
            && p.beta <= self.beta_max
            && p.tof >= self.tof_min
            && p.tof <= self.tof_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrectionStatus {
    Converged,
    Stalled,
    BoundLocked,
    CollidedDuringIteration,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionOutcome {
    pub status: CorrectionStatus,
    /// Corrected parameters; the phase angle is carried through untouched.
    pub params: ConstructionParams,
    pub residual_norm: f64,
    /// Accepted Levenberg-Marquardt iterations.
    pub iterations: usize,
    pub residual_evals: usize,
    /// Condition estimate of the last 2x2 Jacobian.
    pub jacobian_condition: f64,
    /// Terminal state of the arc at the reported parameters.
    pub insertion_state: Option<PlanarState>,
    /// Residual norms at the start and after each accepted step.
    pub accepted_residual_norms: Vec<f64>,
}

/// Residual, analytic Jacobian over (beta, tof), and the terminal state.
#[derive(Debug, Clone, Copy)]
pub struct ResidualJacobian {
    pub residual: [f64; 2],
    pub jacobian: [[f64; 2]; 2],
    pub final_state: PlanarState,
}

/// Why an arc evaluation produced no residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcFailure {
    Collision(TerminationCause),
    IntegrationFailure,
}

fn propagation_options(c: &SystemConstants, orbit: &OrbitSpec, tol: f64) -> PropagationOptions {
    PropagationOptions {
        tolerance: tol,
        collisions: CollisionMode::Detect {
            earth_arming_radius: Some(EARTH_ARMING_FACTOR * orbit.departure_radius(c)),
        },
        ..PropagationOptions::default()
    }
}

/// Evaluates the insertion residual at the given parameters (one plain
/// propagation with collision events armed).
pub fn evaluate_residual(
    c: &SystemConstants,
    orbit: &OrbitSpec,
    p: &ConstructionParams,
    tol: f64,
) -> Result<([f64; 2], PlanarState), ArcFailure> {
    let s0 = departure_state(c, orbit, p);
    let opts = propagation_options(c, orbit, tol);
    match propagate(c, &s0, p.tof, &opts) {
        Ok(res) if res.terminated_by == TerminationCause::Completed => {
            Ok((insertion_residual(c, orbit, &res.final_state), res.final_state))
        }
        Ok(res) => Err(ArcFailure::Collision(res.terminated_by)),
        Err(_) => Err(ArcFailure::IntegrationFailure),
    }
}

/// Evaluates residual and analytic Jacobian (one variational propagation).
pub fn residual_and_jacobian(
    c: &SystemConstants,
    orbit: &OrbitSpec,
    p: &ConstructionParams,
    tol: f64,
) -> Result<ResidualJacobian, ArcFailure> {
    let s0 = departure_state(c, orbit, p);
    let opts = propagation_options(c, orbit, tol);
    let (aug, _, cause, _) =
        propagate_with_stm(c, &s0, p.tof, &opts).map_err(|_| ArcFailure::IntegrationFailure)?;
    if cause != TerminationCause::Completed {
        return Err(ArcFailure::Collision(cause));
    }

    let residual = insertion_residual(c, orbit, &aug.state);
    let dpsi = insertion_residual_state_jacobian(c, &aug.state);
    let dx0_dbeta = departure_state_beta_derivative(c, orbit, p.alpha);
    let dxf_dbeta = aug.map_perturbation(dx0_dbeta);
    let dxf_dtof = vector_field(c, &aug.state);

    let mut jacobian = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..4 {
            jacobian[i][0] += dpsi[i][k] * dxf_dbeta[k];
            jacobian[i][1] += dpsi[i][k] * dxf_dtof[k];
        }
    }
    Ok(ResidualJacobian {
        residual,
        jacobian,
        final_state: aug.state,
    })
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Condition estimate of a 2x2 matrix from the singular values of J^T J.
fn condition_estimate(j: &[[f64; 2]; 2]) -> f64 {
    let a = j[0][0] * j[0][0] + j[1][0] * j[1][0];
    let b = j[0][0] * j[0][1] + j[1][0] * j[1][1];
    let d = j[0][1] * j[0][1] + j[1][1] * j[1][1];
    let tr = a + d;
    let det = a * d - b * b;
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let l_max = 0.5 * (tr + disc);
    let l_min = 0.5 * (tr - disc);
    if l_min <= 0.0 {
        f64::INFINITY
    } else {
        (l_max / l_min).sqrt()
    }
}

/// Corrects one initial guess. The phase angle is never adjusted; only the
/// velocity ratio and time of flight move, and only inside the box.
///
/// `warm_final_state` lets the caller reuse the terminal state of the guess
/// propagation (the search loop already has it) so the first residual costs
/// nothing.
pub fn correct(
    c: &SystemConstants,
    orbit: &OrbitSpec,
    guess: ConstructionParams,
    warm_final_state: Option<PlanarState>,
    settings: &CorrectionSettings,
) -> CorrectionOutcome {
    let tol = settings.integration_tolerance;
    let mut evals = 0usize;

    let mut params = guess;
    let (mut residual, mut final_state) = match warm_final_state {
        Some(s) => (insertion_residual(c, orbit, &s), s),
        None => {
            evals += 1;
            match evaluate_residual(c, orbit, &params, tol) {
                Ok(pair) => pair,
                Err(failure) => {
                    return failed_outcome(failure, params, evals);
                }
            }
        }
    };
    let mut r_norm = norm2(residual);
    let mut history = vec![r_norm];

    if r_norm < settings.acceptance_threshold {
        return CorrectionOutcome {
            status: CorrectionStatus::Converged,
            params,
            residual_norm: r_norm,
            iterations: 0,
            residual_evals: evals,
            jacobian_condition: f64::NAN,
            insertion_state: Some(final_state),
            accepted_residual_norms: history,
        };
    }

    let mut lambda = settings.initial_damping;
    let mut condition = f64::NAN;
    let mut iterations = 0usize;

    while iterations < settings.max_iterations {
        let rj = match residual_and_jacobian(c, orbit, &params, tol) {
            Ok(rj) => rj,
            Err(failure) => return failed_outcome(failure, params, evals),
        };
        let j = rj.jacobian;
        condition = condition_estimate(&j);
        // Normal-equation pieces for the damped step.
        let jtj = [
            [
                j[0][0] * j[0][0] + j[1][0] * j[1][0],
                j[0][0] * j[0][1] + j[1][0] * j[1][1],
            ],
            [
                j[0][0] * j[0][1] + j[1][0] * j[1][1],
                j[0][1] * j[0][1] + j[1][1] * j[1][1],
            ],
        ];
        let grad = [
            j[0][0] * residual[0] + j[1][0] * residual[1],
            j[0][1] * residual[0] + j[1][1] * residual[1],
        ];

        let mut consecutive_rejections = 0usize;
        let accepted = loop {
            let a11 = jtj[0][0] * (1.0 + lambda) + 1e-300;
            let a22 = jtj[1][1] * (1.0 + lambda) + 1e-300;
            let a12 = jtj[0][1];
            let det = a11 * a22 - a12 * a12;
            let step = if det.abs() > 0.0 && det.is_finite() {
                [
                    (-grad[0] * a22 + grad[1] * a12) / det,
                    (-grad[1] * a11 + grad[0] * a12) / det,
                ]
            } else {
                [0.0, 0.0]
            };
            let trial = settings.clamp(ConstructionParams {
                alpha: params.alpha,
                beta: params.beta + step[0],
                tof: params.tof + step[1],
            });
            let moved = [trial.beta - params.beta, trial.tof - params.tof];
            let step_norm = norm2(moved);

            if step_norm < settings.step_tolerance || !step_norm.is_finite() {
                return CorrectionOutcome {
                    status: stall_status(&params, &grad, settings),
                    params,
                    residual_norm: r_norm,
                    iterations,
                    residual_evals: evals,
                    jacobian_condition: condition,
                    insertion_state: Some(final_state),
                    accepted_residual_norms: history,
                };
            }
            if evals >= settings.max_residual_evals {
                return CorrectionOutcome {
                    status: CorrectionStatus::BudgetExhausted,
                    params,
                    residual_norm: r_norm,
                    iterations,
                    residual_evals: evals,
                    jacobian_condition: condition,
                    insertion_state: Some(final_state),
                    accepted_residual_norms: history,
                };
            }

            evals += 1;
            match evaluate_residual(c, orbit, &trial, tol) {
                Ok((r_trial, s_trial)) => {
                    let r_trial_norm = norm2(r_trial);
                    if r_trial_norm < r_norm {
                        break Some((trial, r_trial, r_trial_norm, s_trial));
                    }
                    // Worse than the current point: raise damping and retry.
                    lambda = (lambda * 10.0).min(1e14);
                    consecutive_rejections += 1;
                    if lambda >= 1e14 {
                        return CorrectionOutcome {
                            status: stall_status(&params, &grad, settings),
                            params,
                            residual_norm: r_norm,
                            iterations,
                            residual_evals: evals,
                            jacobian_condition: condition,
                            insertion_state: Some(final_state),
                            accepted_residual_norms: history,
                        };
                    }
                }
                Err(ArcFailure::Collision(_)) | Err(ArcFailure::IntegrationFailure) => {
                    // The trial arc hit a primary (or failed); reject the
                    // step, shorten via damping, and retry.
                    lambda = (lambda * 10.0).min(1e14);
                    consecutive_rejections += 1;
                    if consecutive_rejections >= settings.max_consecutive_rejections {
                        return CorrectionOutcome {
                            status: CorrectionStatus::CollidedDuringIteration,
                            params,
                            residual_norm: r_norm,
                            iterations,
                            residual_evals: evals,
                            jacobian_condition: condition,
                            insertion_state: Some(final_state),
                            accepted_residual_norms: history,
                        };
                    }
                }
            }
        };

        let (trial, r_trial, r_trial_norm, s_trial) = accepted.expect("loop breaks with a value");
        let decrease = r_norm - r_trial_norm;
        params = trial;
        residual = r_trial;
        r_norm = r_trial_norm;
        final_state = s_trial;
        history.push(r_norm);
        iterations += 1;
        lambda = (lambda * 0.1).max(1e-15);

        if r_norm < settings.acceptance_threshold {
            return CorrectionOutcome {
                status: CorrectionStatus::Converged,
                params,
                residual_norm: r_norm,
                iterations,
                residual_evals: evals,
                jacobian_condition: condition,
                insertion_state: Some(final_state),
                accepted_residual_norms: history,
            };
        }
        if decrease < settings.function_tolerance {
            // The pre-step Jacobian is a good enough gradient proxy for the
            // bound classification.
            let grad = [
                j[0][0] * residual[0] + j[1][0] * residual[1],
                j[0][1] * residual[0] + j[1][1] * residual[1],
            ];
            return CorrectionOutcome {
                status: stall_status(&params, &grad, settings),
                params,
                residual_norm: r_norm,
                iterations,
                residual_evals: evals,
                jacobian_condition: condition,
                insertion_state: Some(final_state),
                accepted_residual_norms: history,
            };
        }
    }

    CorrectionOutcome {
        status: CorrectionStatus::BudgetExhausted,
        params,
        residual_norm: r_norm,
        iterations,
        residual_evals: evals,
        jacobian_condition: condition,
        insertion_state: Some(final_state),
        accepted_residual_norms: history,
    }
}

fn failed_outcome(
    failure: ArcFailure,
    params: ConstructionParams,
    evals: usize,
) -> CorrectionOutcome {
    let status = match failure {
        ArcFailure::Collision(_) => CorrectionStatus::CollidedDuringIteration,
        ArcFailure::IntegrationFailure => CorrectionStatus::Stalled,
    };
    CorrectionOutcome {
        status,
        params,
        residual_norm: f64::INFINITY,
        iterations: 0,
        residual_evals: evals,
        jacobian_condition: f64::NAN,
        insertion_state: None,
        accepted_residual_norms: Vec::new(),
    }
}

/// Distinguishes a stall pressed against the box from a plain stall: a
/// parameter sits at a bound and the cost gradient points out of the box.
fn stall_status(
    params: &ConstructionParams,
    grad: &[f64; 2],
    settings: &CorrectionSettings,
) -> CorrectionStatus {
    let eps_beta = 1e-12 * settings.beta_max.abs().max(1.0);
    let eps_tof = 1e-12 * settings.tof_max.abs().max(1.0);
    let locked_beta = (params.beta - settings.beta_min <= eps_beta && grad[0] > 0.0)
        || (settings.beta_max - params.beta <= eps_beta && grad[0] < 0.0);
    let locked_tof = (params.tof - settings.tof_min <= eps_tof && grad[1] > 0.0)
        || (settings.tof_max - params.tof <= eps_tof && grad[1] < 0.0);
    if locked_beta || locked_tof {
        CorrectionStatus::BoundLocked
    } else {
        CorrectionStatus::Stalled
    }
}

