//! Levenberg–Marquardt least squares for pixel models with a handful of
//! parameters. Normal equations are accumulated pixel by pixel, so the
//! Jacobian is never stored.

use nalgebra::{SMatrix, SVector};

use super::FitError;

/// A model evaluated at pixel coordinates.
pub trait PixelModel<const P: usize> {
    /// Model value and its gradient with respect to the parameters.
    fn value_grad(&self, p: &[f64; P], x: f64, y: f64) -> (f64, [f64; P]);

    fn value(&self, p: &[f64; P], x: f64, y: f64) -> f64 {
        self.value_grad(p, x, y).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when `‖Δp‖ < rel_step · (‖p‖ + rel_step)`.
    pub rel_step: f64,
    /// Converged when an accepted step lowers χ² by less than this fraction.
    pub rel_decrease: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            rel_step: 1e-8,
            rel_decrease: 1e-10,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult<const P: usize> {
    pub params: [f64; P],
    pub chi2: f64,
    pub iterations: usize,
}

/// A pixel sample `(x, y, value)`.
pub type Sample = (f64, f64, f64);

fn chi2<const P: usize, M: PixelModel<P>>(model: &M, p: &[f64; P], data: &[Sample]) -> f64 {
    data.iter().map(|&(x, y, v)| (v - model.value(p, x, y)).powi(2)).sum()
}

pub fn fit<const P: usize, M: PixelModel<P>>(
    model: &M,
    data: &[Sample],
    initial: [f64; P],
    opts: &LmOptions,
) -> Result<LmResult<P>, FitError> {
    if data.len() < P {
        return Err(FitError::TooFewPixels {
            available: data.len(),
            required: P,
        });
    }
    let mut p = initial;
    let mut current = chi2(model, &p, data);
    if !current.is_finite() {
        return Err(FitError::NonFinite);
    }
    let mut lambda = opts.initial_lambda;
    for iter in 1..=opts.max_iterations {
        let mut jtj = SMatrix::<f64, P, P>::zeros();
        let mut jtr = SVector::<f64, P>::zeros();
        for &(x, y, v) in data {
            let (f, g) = model.value_grad(&p, x, y);
            let r = v - f;
            let g = SVector::<f64, P>::from_column_slice(&g);
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for i in 0..P {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&jtr);
            let mut trial = p;
            for i in 0..P {
                trial[i] += delta[i];
            }
            let next = chi2(model, &trial, data);
            if next.is_finite() && next <= current {
                let step = delta.norm();
                let scale = SVector::<f64, P>::from_column_slice(&p).norm();
                let decrease = if current > 0.0 { (current - next) / current } else { 0.0 };
                p = trial;
                current = next;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if step < opts.rel_step * (scale + opts.rel_step) || decrease < opts.rel_decrease {
                    return Ok(LmResult {
                        params: p,
                        chi2: current,
                        iterations: iter,
                    });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: a stationary point
            return Ok(LmResult {
                params: p,
                chi2: current,
                iterations: iter,
            });
        }
    }
    Err(FitError::NoConvergence {
        iterations: opts.max_iterations,
        last: p.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line;

    impl PixelModel<2> for Line {
        fn value_grad(&self, p: &[f64; 2], x: f64, _y: f64) -> (f64, [f64; 2]) {
            (p[0] + p[1] * x, [1.0, x])
        }
    }

    struct Exp;

    impl PixelModel<2> for Exp {
        fn value_grad(&self, p: &[f64; 2], x: f64, _y: f64) -> (f64, [f64; 2]) {
            let e = (-p[1] * x).exp();
            (p[0] * e, [e, -p[0] * x * e])
        }
    }

    #[test]
    fn linear_model_in_one_step() {
        let data: Vec<Sample> = (0..20).map(|i| (i as f64, 0.0, 3.0 - 0.5 * i as f64)).collect();
        let r = fit(&Line, &data, [0.0, 0.0], &LmOptions::default()).unwrap();
        assert!((r.params[0] - 3.0).abs() < 1e-9);
        assert!((r.params[1] + 0.5).abs() < 1e-9);
    }

    #[test]
    fn exponential_from_a_poor_start() {
        let data: Vec<Sample> = (0..40).map(|i| (i as f64 * 0.1, 0.0, 2.5 * (-1.3 * i as f64 * 0.1).exp())).collect();
        let r = fit(&Exp, &data, [1.0, 0.2], &LmOptions::default()).unwrap();
        assert!((r.params[0] - 2.5).abs() < 1e-8);
        assert!((r.params[1] - 1.3).abs() < 1e-8);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            fit(&Line, &[(0.0, 0.0, 1.0)], [0.0, 0.0], &LmOptions::default()),
            Err(FitError::TooFewPixels { .. })
        ));
    }
}
