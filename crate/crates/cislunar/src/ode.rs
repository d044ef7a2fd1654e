//! Adaptive Dormand-Prince 8(5,3) integrator with dense output.
//!
//! Explicit Runge-Kutta pair of order 8 with a combined 5th/3rd-order error
//! estimate and a 7th-order interpolant (Hairer, Nørsett & Wanner, "Solving
//! Ordinary Differential Equations I", dop853). The caller drives the step
//! loop, which keeps event detection and trajectory sampling out of the
//! integrator itself: after every accepted step the previous interval
//! [`t_prev`, `t`] can be interpolated on demand. The three extra stages the
//! interpolant needs are evaluated lazily, only for steps where someone asks.
//!
//! Systems are autonomous (the right-hand side receives the state only),
//! which is all the rotating-frame dynamics require. Integration runs
//! forward or backward depending on the sign of `tf - t0`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OdeError {
    /// Step size shrank below machine resolution at the current time; the
    /// usual cause here is a near-singular passage by one of the primaries.
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("exceeded {max_steps} steps at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },
}

/// Integrator tolerances and limits.
#[derive(Debug, Clone, Copy)]
pub struct OdeSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Maximum step magnitude; 0 means |tf - t0|.
    pub h_max: f64,
    pub max_steps: usize,
    /// Number of leading components used in the error norm; 0 means all.
    /// Variational integrations control error on the physical state only so
    /// that step sequences match the plain propagation.
    pub error_dims: usize,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-13,
            atol: 1e-13,
            h_max: 0.0,
            max_steps: 10_000_000,
            error_dims: 0,
        }
    }
}

/// Counters accumulated over one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdeStats {
    pub steps: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

pub struct Dop853<const N: usize, F>
where
    F: FnMut(&[f64; N], &mut [f64; N]),
{
    rhs: F,
    tf: f64,
    posneg: f64,
    h: f64,
    h_max: f64,
    rtol: f64,
    atol: f64,
    max_steps: usize,
    err_dims: usize,

    t: f64,
    y: [f64; N],
    f_cur: [f64; N],
    t_old: f64,
    h_old: f64,
    y_old: [f64; N],
    f_old: [f64; N],

    // Stage storage; slots are reused exactly as in the reference scheme
    // (stage 11 lands in k2, stage 12 in k3, the blended derivative in k4).
    k2: [f64; N],
    k3: [f64; N],
    k4: [f64; N],
    k5: [f64; N],
    k6: [f64; N],
    k7: [f64; N],
    k8: [f64; N],
    k9: [f64; N],
    k10: [f64; N],

    cont: [[f64; N]; 8],
    cont_ready: bool,

    facold: f64,
    last_rejected: bool,
    done: bool,
    stats: OdeStats,
}

/// Outcome of [`Dop853::advance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// One step was accepted; `[t_prev, t]` is available for interpolation.
    Advanced,
    /// The integration had already reached the end point.
    Finished,
}

impl<const N: usize, F> Dop853<N, F>
where
    F: FnMut(&[f64; N], &mut [f64; N]),
{
    pub fn new(mut rhs: F, t0: f64, y0: [f64; N], tf: f64, settings: &OdeSettings) -> Self {
        let posneg = if tf >= t0 { 1.0 } else { -1.0 };
        let h_max = if settings.h_max > 0.0 {
            settings.h_max
        } else {
            (tf - t0).abs().max(1e-12)
        };
        let mut f0 = [0.0; N];
        rhs(&y0, &mut f0);
        let err_dims = if settings.error_dims == 0 || settings.error_dims > N {
            N
        } else {
            settings.error_dims
        };
        let mut solver = Self {
            rhs,
            tf,
            posneg,
            h: 0.0,
            h_max,
            rtol: settings.rtol,
            atol: settings.atol,
            max_steps: settings.max_steps,
            err_dims,
            t: t0,
            y: y0,
            f_cur: f0,
            t_old: t0,
            h_old: 0.0,
            y_old: y0,
            f_old: f0,
            k2: [0.0; N],
            k3: [0.0; N],
            k4: [0.0; N],
            k5: [0.0; N],
            k6: [0.0; N],
            k7: [0.0; N],
            k8: [0.0; N],
            k9: [0.0; N],
            k10: [0.0; N],
            cont: [[0.0; N]; 8],
            cont_ready: false,
            facold: 1e-4,
            last_rejected: false,
            done: tf == t0,
            stats: OdeStats {
                rhs_evals: 1,
                ..OdeStats::default()
            },
        };
        solver.h = solver.initial_step();
        solver
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    /// Right-hand side at the current point.
    pub fn f(&self) -> &[f64; N] {
        &self.f_cur
    }

    pub fn t_prev(&self) -> f64 {
        self.t_old
    }

    pub fn y_prev(&self) -> &[f64; N] {
        &self.y_old
    }

    pub fn stats(&self) -> OdeStats {
        self.stats
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Starting step size from the classic dop853 heuristic.
    fn initial_step(&mut self) -> f64 {
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..self.err_dims {
            let sk = self.atol + self.rtol * self.y[i].abs();
            dnf += (self.f_cur[i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(self.h_max);

        // One explicit Euler step to estimate the second derivative.
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = self.y[i] + self.posneg * h * self.f_cur[i];
        }
        let mut f1 = [0.0; N];
        (self.rhs)(&y1, &mut f1);
        self.stats.rhs_evals += 1;
        let mut der2 = 0.0;
        for i in 0..self.err_dims {
            let sk = self.atol + self.rtol * self.y[i].abs();
            der2 += ((f1[i] - self.f_cur[i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h;

        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(1.0 / 8.0)
        };
        h = (100.0 * h).min(h1).min(self.h_max);
        h * self.posneg
    }

    /// Advances past exactly one accepted step (retrying rejected attempts
    /// internally) or reports that the end point was already reached.
    pub fn advance(&mut self) -> Result<StepOutcome, OdeError> {
        if self.done {
            return Ok(StepOutcome::Finished);
        }
        loop {
            if self.stats.steps >= self.max_steps {
                return Err(OdeError::MaxStepsExceeded {
                    t: self.t,
                    max_steps: self.max_steps,
                });
            }
            if self.h.abs() <= 10.0 * f64::EPSILON * self.t.abs().max(1.0) {
                return Err(OdeError::StepSizeUnderflow { t: self.t });
            }

            // Clamp the final step onto the end point.
            let mut last = false;
            if (self.t + 1.01 * self.h - self.tf) * self.posneg > 0.0 {
                self.h = self.tf - self.t;
                last = true;
            }

            self.stats.steps += 1;
            if self.try_step() {
                self.cont_ready = false;
                if last {
                    self.t = self.tf;
                    self.done = true;
                }
                return Ok(StepOutcome::Advanced);
            } else if last {
                // The clamped attempt was rejected; the end point is no
                // longer one step away.
                continue;
            }
        }
    }

    /// One attempted step; returns true when accepted.
    #[allow(clippy::needless_range_loop)]
    fn try_step(&mut self) -> bool {
        let h = self.h;
        let t = self.t;
        let k1 = self.f_cur;

        let ys = lincomb(&self.y, h, &[(A21, &k1)]);
        (self.rhs)(&ys, &mut self.k2);
        let ys = lincomb(&self.y, h, &[(A31, &k1), (A32, &self.k2)]);
        (self.rhs)(&ys, &mut self.k3);
        let ys = lincomb(&self.y, h, &[(A41, &k1), (A43, &self.k3)]);
        (self.rhs)(&ys, &mut self.k4);
        let ys = lincomb(&self.y, h, &[(A51, &k1), (A53, &self.k3), (A54, &self.k4)]);
        (self.rhs)(&ys, &mut self.k5);
        let ys = lincomb(&self.y, h, &[(A61, &k1), (A64, &self.k4), (A65, &self.k5)]);
        (self.rhs)(&ys, &mut self.k6);
        let ys = lincomb(
            &self.y,
            h,
            &[(A71, &k1), (A74, &self.k4), (A75, &self.k5), (A76, &self.k6)],
        );
        (self.rhs)(&ys, &mut self.k7);
        let ys = lincomb(
            &self.y,
            h,
            &[
                (A81, &k1),
                (A84, &self.k4),
                (A85, &self.k5),
                (A86, &self.k6),
                (A87, &self.k7),
            ],
        );
        (self.rhs)(&ys, &mut self.k8);
        let ys = lincomb(
            &self.y,
            h,
            &[
                (A91, &k1),
                (A94, &self.k4),
                (A95, &self.k5),
                (A96, &self.k6),
                (A97, &self.k7),
                (A98, &self.k8),
            ],
        );
        (self.rhs)(&ys, &mut self.k9);
        let ys = lincomb(
            &self.y,
            h,
            &[
                (A101, &k1),
                (A104, &self.k4),
                (A105, &self.k5),
                (A106, &self.k6),
                (A107, &self.k7),
                (A108, &self.k8),
                (A109, &self.k9),
            ],
        );
        (self.rhs)(&ys, &mut self.k10);
        // Stage 11 lands in k2, stage 12 in k3.
        let ys = lincomb(
            &self.y,
            h,
            &[
                (A111, &k1),
                (A114, &self.k4),
                (A115, &self.k5),
                (A116, &self.k6),
                (A117, &self.k7),
                (A118, &self.k8),
                (A119, &self.k9),
                (A1110, &self.k10),
            ],
        );
        (self.rhs)(&ys, &mut self.k2);
        let y12 = lincomb(
            &self.y,
            h,
            &[
                (A121, &k1),
                (A124, &self.k4),
                (A125, &self.k5),
                (A126, &self.k6),
                (A127, &self.k7),
                (A128, &self.k8),
                (A129, &self.k9),
                (A1210, &self.k10),
                (A1211, &self.k2),
            ],
        );
        (self.rhs)(&y12, &mut self.k3);
        self.stats.rhs_evals += 11;

        // Blended 8th-order derivative (k4) and solution (k5).
        for i in 0..N {
            self.k4[i] = B1 * k1[i]
                + B6 * self.k6[i]
                + B7 * self.k7[i]
                + B8 * self.k8[i]
                + B9 * self.k9[i]
                + B10 * self.k10[i]
                + B11 * self.k2[i]
                + B12 * self.k3[i];
            self.k5[i] = self.y[i] + h * self.k4[i];
        }

        // Combined 5th/3rd-order error estimate.
        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..self.err_dims {
            let sk = self.atol + self.rtol * self.y[i].abs().max(self.k5[i].abs());
            let erri3 = self.k4[i] - BHH1 * k1[i] - BHH2 * self.k9[i] - BHH3 * self.k3[i];
            err2 += (erri3 / sk).powi(2);
            let erri5 = ER1 * k1[i]
                + ER6 * self.k6[i]
                + ER7 * self.k7[i]
                + ER8 * self.k8[i]
                + ER9 * self.k9[i]
                + ER10 * self.k10[i]
                + ER11 * self.k2[i]
                + ER12 * self.k3[i];
            err += (erri5 / sk).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err * (1.0 / (deno * self.err_dims as f64)).sqrt();

        // PI step-size controller with Lund stabilization.
        const EXPO1: f64 = 1.0 / 8.0 - BETA * 0.2;
        const SAFE: f64 = 0.9;
        const FAC1: f64 = 0.333;
        const FAC2: f64 = 6.0;
        let fac11 = err.powf(EXPO1);
        let fac = (fac11 / self.facold.powf(BETA) / SAFE).clamp(1.0 / FAC2, 1.0 / FAC1);
        let mut h_new = h / fac;

        if err <= 1.0 {
            self.facold = err.max(1e-4);
            let mut f_new = [0.0; N];
            (self.rhs)(&self.k5, &mut f_new);
            self.stats.rhs_evals += 1;

            self.t_old = t;
            self.h_old = h;
            self.y_old = self.y;
            self.f_old = self.f_cur;

            self.t = t + h;
            self.y = self.k5;
            self.f_cur = f_new;

            if self.last_rejected {
                h_new = if self.posneg > 0.0 {
                    h_new.min(h)
                } else {
                    h_new.max(h)
                };
                self.last_rejected = false;
            }
            self.h = clamp_magnitude(h_new, self.h_max, self.posneg);
            self.stats.accepted += 1;
            true
        } else {
            self.h = h / (fac11 / SAFE).min(1.0 / FAC1);
            self.last_rejected = true;
            self.stats.rejected += 1;
            false
        }
    }

    /// Dense-output evaluation inside the most recent accepted step.
    ///
    /// `t` should lie in `[t_prev, t]`; the polynomial extrapolates smoothly
    /// a little beyond either end. The interpolation stages are computed on
    /// first use per step.
    pub fn interpolate(&mut self, t: f64) -> [f64; N] {
        if self.h_old == 0.0 {
            return self.y;
        }
        if !self.cont_ready {
            self.prepare_interpolation();
        }
        let s = (t - self.t_old) / self.h_old;
        let s1 = 1.0 - s;
        let mut out = [0.0; N];
        for i in 0..N {
            let conpar =
                self.cont[4][i] + s * (self.cont[5][i] + s1 * (self.cont[6][i] + s * self.cont[7][i]));
            out[i] = self.cont[0][i]
                + s * (self.cont[1][i]
                    + s1 * (self.cont[2][i] + s * (self.cont[3][i] + s1 * conpar)));
        }
        out
    }

    #[allow(clippy::needless_range_loop)]
    fn prepare_interpolation(&mut self) {
        let h = self.h_old;
        let y_old = &self.y_old;
        let k_old = &self.f_old;
        // self.f_cur is the derivative at the step end (stage 13).
        let k13 = self.f_cur;

        for i in 0..N {
            let ydiff = self.y[i] - y_old[i];
            let bspl = h * k_old[i] - ydiff;
            self.cont[0][i] = y_old[i];
            self.cont[1][i] = ydiff;
            self.cont[2][i] = bspl;
            self.cont[3][i] = ydiff - h * k13[i] - bspl;
            self.cont[4][i] = D41 * k_old[i]
                + D46 * self.k6[i]
                + D47 * self.k7[i]
                + D48 * self.k8[i]
                + D49 * self.k9[i]
                + D410 * self.k10[i]
                + D411 * self.k2[i]
                + D412 * self.k3[i];
            self.cont[5][i] = D51 * k_old[i]
                + D56 * self.k6[i]
                + D57 * self.k7[i]
                + D58 * self.k8[i]
                + D59 * self.k9[i]
                + D510 * self.k10[i]
                + D511 * self.k2[i]
                + D512 * self.k3[i];
            self.cont[6][i] = D61 * k_old[i]
                + D66 * self.k6[i]
                + D67 * self.k7[i]
                + D68 * self.k8[i]
                + D69 * self.k9[i]
                + D610 * self.k10[i]
                + D611 * self.k2[i]
                + D612 * self.k3[i];
            self.cont[7][i] = D71 * k_old[i]
                + D76 * self.k6[i]
                + D77 * self.k7[i]
                + D78 * self.k8[i]
                + D79 * self.k9[i]
                + D710 * self.k10[i]
                + D711 * self.k2[i]
                + D712 * self.k3[i];
        }

        // Three extra stages; results land in k10, k2, k3.
        let mut ys = [0.0; N];
        for i in 0..N {
            ys[i] = y_old[i]
                + h * (A141 * k_old[i]
                    + A147 * self.k7[i]
                    + A148 * self.k8[i]
                    + A149 * self.k9[i]
                    + A1410 * self.k10[i]
                    + A1411 * self.k2[i]
                    + A1412 * self.k3[i]
                    + A1413 * k13[i]);
        }
        let mut st = [0.0; N];
        (self.rhs)(&ys, &mut st);
        self.k10 = st;
        for i in 0..N {
            ys[i] = y_old[i]
                + h * (A151 * k_old[i]
                    + A156 * self.k6[i]
                    + A157 * self.k7[i]
                    + A158 * self.k8[i]
                    + A1511 * self.k2[i]
                    + A1512 * self.k3[i]
                    + A1513 * k13[i]
                    + A1514 * self.k10[i]);
        }
        (self.rhs)(&ys, &mut st);
        self.k2 = st;
        for i in 0..N {
            ys[i] = y_old[i]
                + h * (A161 * k_old[i]
                    + A166 * self.k6[i]
                    + A167 * self.k7[i]
                    + A168 * self.k8[i]
                    + A169 * self.k9[i]
                    + A1613 * k13[i]
                    + A1614 * self.k10[i]
                    + A1615 * self.k2[i]);
        }
        (self.rhs)(&ys, &mut st);
        self.k3 = st;
        self.stats.rhs_evals += 3;

        for i in 0..N {
            self.cont[4][i] = h
                * (self.cont[4][i]
                    + D413 * k13[i]
                    + D414 * self.k10[i]
                    + D415 * self.k2[i]
                    + D416 * self.k3[i]);
            self.cont[5][i] = h
                * (self.cont[5][i]
                    + D513 * k13[i]
                    + D514 * self.k10[i]
                    + D515 * self.k2[i]
                    + D516 * self.k3[i]);
            self.cont[6][i] = h
                * (self.cont[6][i]
                    + D613 * k13[i]
                    + D614 * self.k10[i]
                    + D615 * self.k2[i]
                    + D616 * self.k3[i]);
            self.cont[7][i] = h
                * (self.cont[7][i]
                    + D713 * k13[i]
                    + D714 * self.k10[i]
                    + D715 * self.k2[i]
                    + D716 * self.k3[i]);
        }
        self.cont_ready = true;
    }
}

fn clamp_magnitude(h: f64, h_max: f64, posneg: f64) -> f64 {
    if h.abs() > h_max {
        h_max * posneg
    } else {
        h
    }
}

#[inline]
fn lincomb<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        let mut acc = 0.0;
        for &(c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
    out
}

const BETA: f64 = 0.0;

const A21: f64 = 5.26001519587677318785587544488E-2;
const A31: f64 = 1.97250569845378994544595329183E-2;
const A32: f64 = 5.91751709536136983633785987549E-2;
const A41: f64 = 2.95875854768068491816892993775E-2;
const A43: f64 = 8.87627564304205475450678981324E-2;
const A51: f64 = 2.41365134159266685502369798665E-1;
const A53: f64 = -8.84549479328286085344864962717E-1;
const A54: f64 = 9.24834003261792003115737966543E-1;
const A61: f64 = 3.7037037037037037037037037037E-2;
const A64: f64 = 1.70828608729473871279604482173E-1;
const A65: f64 = 1.25467687566822425016691814123E-1;
const A71: f64 = 3.7109375E-2;
const A74: f64 = 1.70252211019544039314978060272E-1;
const A75: f64 = 6.02165389804559606850219397283E-2;
const A76: f64 = -1.7578125E-2;
const A81: f64 = 3.70920001185047927108779319836E-2;
const A84: f64 = 1.70383925712239993810214054705E-1;
const A85: f64 = 1.07262030446373284651809199168E-1;
const A86: f64 = -1.53194377486244017527936158236E-2;
const A87: f64 = 8.27378916381402288758473766002E-3;
const A91: f64 = 6.24110958716075717114429577812E-1;
const A94: f64 = -3.36089262944694129406857109825E0;
const A95: f64 = -8.68219346841726006818189891453E-1;
const A96: f64 = 2.75920996994467083049415600797E1;
const A97: f64 = 2.01540675504778934086186788979E1;
const A98: f64 = -4.34898841810699588477366255144E1;
const A101: f64 = 4.77662536438264365890433908527E-1;
const A104: f64 = -2.48811461997166764192642586468E0;
const A105: f64 = -5.90290826836842996371446475743E-1;
const A106: f64 = 2.12300514481811942347288949897E1;
const A107: f64 = 1.52792336328824235832596922938E1;
const A108: f64 = -3.32882109689848629194453265587E1;
const A109: f64 = -2.03312017085086261358222928593E-2;
const A111: f64 = -9.3714243008598732571704021658E-1;
const A114: f64 = 5.18637242884406370830023853209E0;
const A115: f64 = 1.09143734899672957818500254654E0;
const A116: f64 = -8.14978701074692612513997267357E0;
const A117: f64 = -1.85200656599969598641566180701E1;
const A118: f64 = 2.27394870993505042818970056734E1;
const A119: f64 = 2.49360555267965238987089396762E0;
const A1110: f64 = -3.0467644718982195003823669022E0;
const A121: f64 = 2.27331014751653820792359768449E0;
const A124: f64 = -1.05344954667372501984066689879E1;
const A125: f64 = -2.00087205822486249909675718444E0;
const A126: f64 = -1.79589318631187989172765950534E1;
const A127: f64 = 2.79488845294199600508499808837E1;
const A128: f64 = -2.85899827713502369474065508674E0;
const A129: f64 = -8.87285693353062954433549289258E0;
const A1210: f64 = 1.23605671757943030647266201528E1;
const A1211: f64 = 6.43392746015763530355970484046E-1;

const A141: f64 = 5.61675022830479523392909219681E-2;
const A147: f64 = 2.53500210216624811088794765333E-1;
const A148: f64 = -2.46239037470802489917441475441E-1;
const A149: f64 = -1.24191423263816360469010140626E-1;
const A1410: f64 = 1.5329179827876569731206322685E-1;
const A1411: f64 = 8.20105229563468988491666602057E-3;
const A1412: f64 = 7.56789766054569976138603589584E-3;
const A1413: f64 = -8.298E-3;
const A151: f64 = 3.18346481635021405060768473261E-2;
const A156: f64 = 2.83009096723667755288322961402E-2;
const A157: f64 = 5.35419883074385676223797384372E-2;
const A158: f64 = -5.49237485713909884646569340306E-2;
const A1511: f64 = -1.08347328697249322858509316994E-4;
const A1512: f64 = 3.82571090835658412954920192323E-4;
const A1513: f64 = -3.40465008687404560802977114492E-4;
const A1514: f64 = 1.41312443674632500278074618366E-1;
const A161: f64 = -4.28896301583791923408573538692E-1;
const A166: f64 = -4.69762141536116384314449447206E0;
const A167: f64 = 7.68342119606259904184240953878E0;
const A168: f64 = 4.06898981839711007970213554331E0;
const A169: f64 = 3.56727187455281109270669543021E-1;
const A1613: f64 = -1.39902416515901462129418009734E-3;
const A1614: f64 = 2.9475147891527723389556272149E0;
const A1615: f64 = -9.15095847217987001081870187138E0;

const B1: f64 = 5.42937341165687622380535766363E-2;
const B6: f64 = 4.45031289275240888144113950566E0;
const B7: f64 = 1.89151789931450038304281599044E0;
const B8: f64 = -5.8012039600105847814672114227E0;
const B9: f64 = 3.1116436695781989440891606237E-1;
const B10: f64 = -1.52160949662516078556178806805E-1;
const B11: f64 = 2.01365400804030348374776537501E-1;
const B12: f64 = 4.47106157277725905176885569043E-2;

const BHH1: f64 = 0.244094488188976377952755905512E+00;
const BHH2: f64 = 0.733846688281611857341361741547E+00;
const BHH3: f64 = 0.220588235294117647058823529412E-01;

const C2: f64 = 0.526001519587677318785587544488E-01;
const C3: f64 = 0.789002279381515978178381316732E-01;
const C4: f64 = 0.118350341907227396726757197510E+00;
const C5: f64 = 0.281649658092772603273242802490E+00;
const C6: f64 = 0.333333333333333333333333333333E+00;
const C7: f64 = 0.25E+00;
const C8: f64 = 0.307692307692307692307692307692E+00;
const C9: f64 = 0.651282051282051282051282051282E+00;
const C10: f64 = 0.6E+00;
const C11: f64 = 0.857142857142857142857142857142E+00;
// Node times are unused by autonomous systems; retained with the tableau.
#[allow(dead_code)]
const C_NODES: [f64; 10] = [C2, C3, C4, C5, C6, C7, C8, C9, C10, C11];

const ER1: f64 = 0.1312004499419488073250102996E-01;
const ER6: f64 = -0.1225156446376204440720569753E+01;
const ER7: f64 = -0.4957589496572501915214079952E+00;
const ER8: f64 = 0.1664377182454986536961530415E+01;
const ER9: f64 = -0.3503288487499736816886487290E+00;
const ER10: f64 = 0.3341791187130174790297318841E+00;
const ER11: f64 = 0.8192320648511571246570742613E-01;
const ER12: f64 = -0.2235530786388629525884427845E-01;

const D41: f64 = -0.84289382761090128651353491142E+01;
const D46: f64 = 0.56671495351937776962531783590E+00;
const D47: f64 = -0.30689499459498916912797304727E+01;
const D48: f64 = 0.23846676565120698287728149680E+01;
const D49: f64 = 0.21170345824450282767155149946E+01;
const D410: f64 = -0.87139158377797299206789907490E+00;
const D411: f64 = 0.22404374302607882758541771650E+01;
const D412: f64 = 0.63157877876946881815570249290E+00;
const D413: f64 = -0.88990336451333310820698117400E-01;
const D414: f64 = 0.18148505520854727256656404962E+02;
const D415: f64 = -0.91946323924783554000451984436E+01;
const D416: f64 = -0.44360363875948939664310572000E+01;
const D51: f64 = 0.10427508642579134603413151009E+02;
const D56: f64 = 0.24228349177525818288430175319E+03;
const D57: f64 = 0.16520045171727028198505394887E+03;
const D58: f64 = -0.37454675472269020279518312152E+03;
const D59: f64 = -0.22113666853125306036270938578E+02;
const D510: f64 = 0.77334326684722638389603898808E+01;
const D511: f64 = -0.30674084731089398182061213626E+02;
const D512: f64 = -0.93321305264302278729567221706E+01;
const D513: f64 = 0.15697238121770843886131091075E+02;
const D514: f64 = -0.31139403219565177677282850411E+02;
const D515: f64 = -0.93529243588444783865713862664E+01;
const D516: f64 = 0.35816841486394083752465898540E+02;
const D61: f64 = 0.19985053242002433820987653617E+02;
const D66: f64 = -0.38703730874935176555105901742E+03;
const D67: f64 = -0.18917813819516756882830838328E+03;
const D68: f64 = 0.52780815920542364900561016686E+03;
const D69: f64 = -0.11573902539959630126141871134E+02;
const D610: f64 = 0.68812326946963000169666922661E+01;
const D611: f64 = -0.10006050966910838403183860980E+01;
const D612: f64 = 0.77771377980534432092869265740E+00;
const D613: f64 = -0.27782057523535084065932004339E+01;
const D614: f64 = -0.60196695231264120758267380846E+02;
const D615: f64 = 0.84320405506677161018159903784E+02;
const D616: f64 = 0.11992291136182789328035130030E+02;
const D71: f64 = -0.25693933462703749003312586129E+02;
const D76: f64 = -0.15418974869023643374053993627E+03;
const D77: f64 = -0.23152937917604549567536039109E+03;
const D78: f64 = 0.35763911791061412378285349910E+03;
const D79: f64 = 0.93405324183624310003907691704E+02;
const D710: f64 = -0.37458323136451633156875139351E+02;
const D711: f64 = 0.10409964950896230045147246184E+03;
const D712: f64 = 0.29840293426660503123344363579E+02;
const D713: f64 = -0.43533456590011143754432175058E+02;
const D714: f64 = 0.96324553959188282948394950600E+02;
const D715: f64 = -0.39177261675615439165231486172E+02;
const D716: f64 = -0.14972683625798562581422125276E+03;

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn harmonic(y: &[f64; 2], dy: &mut [f64; 2]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }

    fn run_to_end<const N: usize, F: FnMut(&[f64; N], &mut [f64; N])>(
        mut solver: Dop853<N, F>,
    ) -> ([f64; N], OdeStats) {
        loop {
            match solver.advance().expect("integration failed") {
                StepOutcome::Advanced => {}
                StepOutcome::Finished => break,
            }
        }
        (*solver.y(), solver.stats())
    }

    #[test]
    fn harmonic_oscillator_full_period() {
        let settings = OdeSettings::default();
        let solver = Dop853::new(harmonic, 0.0, [1.0, 0.0], 2.0 * PI, &settings);
        let (y, stats) = run_to_end(solver);
        assert!((y[0] - 1.0).abs() < 1e-12, "y0 = {}", y[0]);
        assert!(y[1].abs() < 1e-12, "y1 = {}", y[1]);
        assert!(stats.accepted > 10);
    }

    #[test]
    fn backward_integration_recovers_start() {
        let settings = OdeSettings::default();
        let solver = Dop853::new(harmonic, 0.0, [0.3, -0.7], -3.5, &settings);
        let (y, _) = run_to_end(solver);
        // Analytic solution at t = -3.5.
        let (s, c) = (-3.5_f64).sin_cos();
        let expect = [0.3 * c - 0.7 * s, -0.3 * s - 0.7 * c];
        assert!((y[0] - expect[0]).abs() < 1e-12);
        assert!((y[1] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn dense_output_matches_analytic_solution() {
        let settings = OdeSettings::default();
        let mut solver = Dop853::new(harmonic, 0.0, [1.0, 0.0], 4.0, &settings);
        while let StepOutcome::Advanced = solver.advance().unwrap() {
            let tm = 0.5 * (solver.t_prev() + solver.t());
            let ym = solver.interpolate(tm);
            assert!((ym[0] - tm.cos()).abs() < 1e-11, "at t = {tm}");
            assert!((ym[1] + tm.sin()).abs() < 1e-11, "at t = {tm}");
        }
    }

    #[test]
    fn reaches_end_point_exactly() {
        let settings = OdeSettings::default();
        let tf = 1.2345678910111213;
        let mut solver = Dop853::new(harmonic, 0.0, [1.0, 0.0], tf, &settings);
        while let StepOutcome::Advanced = solver.advance().unwrap() {}
        assert_eq!(solver.t(), tf);
        assert!(solver.is_done());
        assert_eq!(solver.advance().unwrap(), StepOutcome::Finished);
    }

    #[test]
    fn blowup_reports_underflow() {
        // y' = y^2 escapes to infinity at t = 1; the controller has to give up.
        let rhs = |y: &[f64; 1], dy: &mut [f64; 1]| dy[0] = y[0] * y[0];
        let settings = OdeSettings {
            max_steps: 1_000_000,
            ..OdeSettings::default()
        };
        let mut solver = Dop853::new(rhs, 0.0, [1.0], 2.0, &settings);
        let err = loop {
            match solver.advance() {
                Ok(StepOutcome::Advanced) => {}
                Ok(StepOutcome::Finished) => panic!("should not reach t = 2"),
                Err(e) => break e,
            }
        };
        match err {
            OdeError::StepSizeUnderflow { t } => assert!((t - 1.0).abs() < 1e-3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn max_steps_enforced() {
        let settings = OdeSettings {
            max_steps: 3,
            ..OdeSettings::default()
        };
        let mut solver = Dop853::new(harmonic, 0.0, [1.0, 0.0], 1000.0, &settings);
        let mut saw_error = false;
        for _ in 0..10 {
            match solver.advance() {
                Err(OdeError::MaxStepsExceeded { .. }) => {
                    saw_error = true;
                    break;
                }
                Ok(_) => {}
                Err(e) => panic!("unexpected {e:?}"),
            }
        }
        assert!(saw_error);
    }
}
