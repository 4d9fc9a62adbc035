//! Gaussian-process regression with a squared-exponential ARD kernel.
//!
//! Targets are standardized internally (prior mean = sample mean); all
//! public quantities are in the caller's units. Hyperparameters are fitted by
//! projected gradient ascent of the log marginal likelihood in log-space with
//! deterministic multi-start.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("kernel matrix not positive definite even with jitter {jitter:e}")]
    IllConditioned { jitter: f64 },
    #[error("input has {got} dimensions, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite training target {0}")]
    NonFinite(f64),
}

/// Jitter added to the diagonal, tried in order until Cholesky succeeds.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub length_scales: Vec<f64>,
    /// Signal variance in standardized units.
    pub signal_var: f64,
    /// Observation noise variance in standardized units.
    pub noise_var: f64,
}

/// Log-space box for the hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperBounds {
    pub length_scale: (f64, f64),
    pub signal_var: (f64, f64),
    pub noise_var: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            length_scale: (0.01, 10.0),
            signal_var: (0.01, 100.0),
            noise_var: (1e-8, 1.0),
        }
    }
}

impl Hyper {
    pub fn default_for(dims: usize) -> Self {
        Self {
            length_scales: vec![0.3; dims],
            signal_var: 1.0,
            noise_var: 1e-6,
        }
    }

    pub fn dims(&self) -> usize {
        self.length_scales.len()
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.length_scales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_var.ln());
        v.push(self.noise_var.ln());
        v
    }

    fn from_log(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self {
            length_scales: v[..d].iter().map(|x| x.exp()).collect(),
            signal_var: v[d].exp(),
            noise_var: v[d + 1].exp(),
        }
    }

    /// Squared-exponential kernel in standardized units.
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum();
        self.signal_var * (-0.5 * r2).exp()
    }
}

impl HyperBounds {
    fn log_box(&self, dims: usize) -> Vec<(f64, f64)> {
        let ln = |(a, b): (f64, f64)| (a.ln(), b.ln());
        let mut v = vec![ln(self.length_scale); dims];
        v.push(ln(self.signal_var));
        v.push(ln(self.noise_var));
        v
    }
}

fn standardize(y: &[f64]) -> (f64, f64) {
    if y.is_empty() {
        return (0.0, 1.0);
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 })
}

fn gram(x: &[Vec<f64>], hyper: &Hyper) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = hyper.kernel(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn factor(k: &DMatrix<f64>, noise: f64) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let n = k.nrows();
    for &jitter in &JITTER_LADDER {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += noise + jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok((c, jitter));
        }
    }
    Err(GpError::IllConditioned {
        jitter: *JITTER_LADDER.last().unwrap(),
    })
}

#[derive(Debug, Clone)]
pub struct Gp {
    pub hyper: Hyper,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    pub jitter: f64,
}

impl Gp {
    pub fn fit(x: Vec<Vec<f64>>, y: Vec<f64>, hyper: Hyper) -> Result<Self, GpError> {
        let d = hyper.dims();
        if let Some(bad) = x.iter().find(|p| p.len() != d) {
            return Err(GpError::Dimension {
                expected: d,
                got: bad.len(),
            });
        }
        if let Some(&v) = y.iter().find(|v| !v.is_finite()) {
            return Err(GpError::NonFinite(v));
        }
        let (y_mean, y_std) = standardize(&y);
        if x.is_empty() {
            return Ok(Self {
                hyper,
                x,
                y,
                y_mean,
                y_std,
                chol: None,
                alpha: DVector::zeros(0),
                jitter: 0.0,
            });
        }
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_std));
        let (chol, jitter) = factor(&gram(&x, &hyper), hyper.noise_var)?;
        let alpha = chol.solve(&ys);
        Ok(Self {
            hyper,
            x,
            y,
            y_mean,
            y_std,
            chol: Some(chol),
            alpha,
            jitter,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn prior_mean(&self) -> f64 {
        self.y_mean
    }

    /// Posterior mean and latent (noise-free) variance at `p`.
    pub fn posterior(&self, p: &[f64]) -> (f64, f64) {
        let prior = self.hyper.signal_var;
        let Some(chol) = &self.chol else {
            return (self.y_mean, prior * self.y_std * self.y_std);
        };
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| self.hyper.kernel(xi, p)));
        let mean_s = k.dot(&self.alpha);
        let v = chol.l_dirty().solve_lower_triangular(&k).expect("triangular factor");
        let var_s = (prior - v.norm_squared()).max(0.0);
        (self.y_mean + self.y_std * mean_s, var_s * self.y_std * self.y_std)
    }

    /// Same model with one extra observation and unchanged hyperparameters
    /// and standardization (used for constant-liar batches).
    pub fn with_fantasy(&self, p: Vec<f64>, value: f64) -> Result<Self, GpError> {
        let mut x = self.x.clone();
        let mut y = self.y.clone();
        x.push(p);
        y.push(value);
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - self.y_mean) / self.y_std));
        let (chol, jitter) = factor(&gram(&x, &self.hyper), self.hyper.noise_var)?;
        let alpha = chol.solve(&ys);
        Ok(Self {
            hyper: self.hyper.clone(),
            x,
            y,
            y_mean: self.y_mean,
            y_std: self.y_std,
            chol: Some(chol),
            alpha,
            jitter,
        })
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        log_marginal_likelihood(&self.x, &self.y, &self.hyper).map_or(f64::NEG_INFINITY, |(v, _)| v)
    }
}

/// Log marginal likelihood of standardized `y` and its gradient with respect
/// to the log hyperparameters `(ln ℓ₁..ln ℓ_d, ln s², ln σ_n²)`.
pub fn log_marginal_likelihood(x: &[Vec<f64>], y: &[f64], hyper: &Hyper) -> Result<(f64, Vec<f64>), GpError> {
    let n = x.len();
    let d = hyper.dims();
    let (mean, std) = standardize(y);
    let ys = DVector::from_iterator(n, y.iter().map(|v| (v - mean) / std));
    let k = gram(x, hyper);
    let (chol, _) = factor(&k, hyper.noise_var)?;
    let alpha = chol.solve(&ys);
    let log_det: f64 = chol.l_dirty().diagonal().iter().take(n).map(|v| v.ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * ys.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // ½ tr((ααᵀ − K⁻¹) ∂K/∂θ)
    let w = &alpha * alpha.transpose() - chol.inverse();
    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        for j in 0..n {
            let kij = k[(i, j)];
            let wij = w[(i, j)];
            for (dim, l) in hyper.length_scales.iter().enumerate() {
                let diff = x[i][dim] - x[j][dim];
                grad[dim] += 0.5 * wij * kij * diff * diff / (l * l);
            }
            grad[d] += 0.5 * wij * kij;
        }
        grad[d + 1] += 0.5 * w[(i, i)] * hyper.noise_var;
    }
    Ok((lml, grad))
}

/// Projected gradient ascent with backtracking from one starting point.
fn ascend(x: &[Vec<f64>], y: &[f64], start: Vec<f64>, bounds: &[(f64, f64)], iters: usize) -> (f64, Vec<f64>) {
    let project = |v: &mut Vec<f64>| {
        for (vi, (lo, hi)) in v.iter_mut().zip(bounds) {
            *vi = vi.clamp(*lo, *hi);
        }
    };
    let eval = |v: &[f64]| log_marginal_likelihood(x, y, &Hyper::from_log(v)).ok();
    let mut cur = start;
    project(&mut cur);
    let Some((mut f, mut g)) = eval(&cur) else {
        return (f64::NEG_INFINITY, cur);
    };
    let mut step = 0.5;
    for _ in 0..iters {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-8 {
            break;
        }
        let mut improved = false;
        while step > 1e-10 {
            let mut cand: Vec<f64> = cur.iter().zip(&g).map(|(c, gi)| c + step * gi / gnorm.max(1.0)).collect();
            project(&mut cand);
            if let Some((fc, gc)) = eval(&cand) {
                if fc > f {
                    let moved: f64 = cand.iter().zip(&cur).map(|(a, b)| (a - b).abs()).sum();
                    cur = cand;
                    let gain = fc - f;
                    f = fc;
                    g = gc;
                    step = (step * 2.0).min(4.0);
                    improved = moved > 1e-12 && gain > 1e-12;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (f, cur)
}

/// Maximizes the marginal likelihood over `restarts` starts: the first from
/// `initial`, the others drawn uniformly in the log box from `rng`.
pub fn fit_hyper<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    initial: &Hyper,
    bounds: &HyperBounds,
    restarts: usize,
    rng: &mut R,
) -> Hyper {
    if x.len() < 2 {
        return initial.clone();
    }
    let lb = bounds.log_box(initial.dims());
    let mut best = (f64::NEG_INFINITY, initial.to_log());
    for r in 0..restarts.max(1) {
        let start = if r == 0 {
            initial.to_log()
        } else {
            lb.iter().map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect()
        };
        let (f, v) = ascend(x, y, start, &lb, 200);
        if f > best.0 {
            best = (f, v);
        }
    }
    Hyper::from_log(&best.1)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement over `best` for maximization.
pub fn expected_improvement(mean: f64, variance: f64, best: f64, xi: f64) -> f64 {
    let sigma = variance.max(0.0).sqrt();
    let gain = mean - best - xi;
    if sigma < 1e-300 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    (gain * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}
