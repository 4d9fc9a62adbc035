//! Dormand–Prince 5(4) adaptive Runge–Kutta for small fixed-size systems.
//!
//! The integrator keeps its step size between calls so a caller can march
//! through a list of output times with [`Integrator::advance_to`] without
//! restarting step control at every sample.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<const D: usize> {
    pub rtol: f64,
    pub atol: [f64; D],
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError<E> {
    #[error("right-hand side failed at t = {t}: {cause}")]
    Rhs { t: f64, cause: E },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
}

// Butcher tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*, the embedded error weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct Integrator<const D: usize> {
    pub tol: Tolerances<D>,
    pub h: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
    pub accepted: usize,
    pub rejected: usize,
}

fn axpy<const D: usize>(y: &[f64; D], terms: &[(f64, &[f64; D])], h: f64) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

impl<const D: usize> Integrator<D> {
    pub fn new(tol: Tolerances<D>, h_initial: f64) -> Self {
        Self {
            tol,
            h: h_initial,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 1_000_000,
            accepted: 0,
            rejected: 0,
        }
    }

    /// One trial step of size `h`. Returns the 5th-order solution and the
    /// scaled error norm.
    fn trial<F, E>(&self, f: &mut F, t: f64, y: &[f64; D], h: f64) -> Result<([f64; D], f64), E>
    where
        F: FnMut(f64, &[f64; D]) -> Result<[f64; D], E>,
    {
        let k1 = f(t, y)?;
        let k2 = f(t + C2 * h, &axpy(y, &[(A21, &k1)], h))?;
        let k3 = f(t + C3 * h, &axpy(y, &[(A31, &k1), (A32, &k2)], h))?;
        let k4 = f(t + C4 * h, &axpy(y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h))?;
        let k5 = f(
            t + C5 * h,
            &axpy(y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h),
        )?;
        let k6 = f(
            t + h,
            &axpy(y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h),
        )?;
        let y_new = axpy(y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
        let k7 = f(t + h, &y_new)?;
        let mut sum = 0.0;
        for i in 0..D {
            let err = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = self.tol.atol[i] + self.tol.rtol * y[i].abs().max(y_new[i].abs());
            sum += (err / scale).powi(2);
        }
        Ok((y_new, (sum / D as f64).sqrt()))
    }

    /// Integrates from `t` to `t_end`, landing exactly on `t_end`. After each
    /// accepted step `project` may modify the state in place (e.g. to enforce
    /// bounds); it returns `true` when it changed something.
    ///
    /// On error `y` and `t` hold the last accepted state.
    pub fn advance_to<F, P, E>(
        &mut self,
        f: &mut F,
        t: &mut f64,
        y: &mut [f64; D],
        t_end: f64,
        project: &mut P,
    ) -> Result<usize, OdeError<E>>
    where
        F: FnMut(f64, &[f64; D]) -> Result<[f64; D], E>,
        P: FnMut(&mut [f64; D]) -> bool,
    {
        let mut projections = 0;
        let mut steps = 0;
        while *t < t_end {
            if steps >= self.max_steps {
                return Err(OdeError::TooManySteps {
                    t: *t,
                    max_steps: self.max_steps,
                });
            }
            steps += 1;
            let remaining = t_end - *t;
            let h = self.h.min(remaining).min(self.h_max);
            let truncated = h < self.h;
            let attempt = self.trial(f, *t, y, h);
            let (y_new, err) = match attempt {
                Ok(v) => v,
                Err(cause) => {
                    // a stage left the model's domain: retry smaller
                    self.rejected += 1;
                    self.h = h * MIN_FACTOR;
                    if self.h < self.h_min {
                        return Err(OdeError::Rhs { t: *t, cause });
                    }
                    continue;
                }
            };
            if err <= 1.0 && err.is_finite() {
                *t = if h == remaining { t_end } else { *t + h };
                *y = y_new;
                if project(y) {
                    projections += 1;
                }
                self.accepted += 1;
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                // a step shortened to land on t_end does not shrink the
                // step size carried into the next call
                let next = h * factor;
                self.h = if truncated { self.h.max(next) } else { next }.min(self.h_max);
            } else {
                self.rejected += 1;
                let factor = if err.is_finite() {
                    (SAFETY * err.powf(-0.25)).clamp(MIN_FACTOR, 1.0)
                } else {
                    MIN_FACTOR
                };
                self.h = h * factor;
                if self.h < self.h_min {
                    return Err(OdeError::StepUnderflow { t: *t, h: self.h });
                }
            }
        }
        Ok(projections)
    }
}
