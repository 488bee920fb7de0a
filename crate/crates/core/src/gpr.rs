//! Gaussian-process regression with a squared-exponential kernel.
//!
//! Inputs are standardized per feature and targets are centered (not
//! rescaled) before fitting. All hyperparameters live in that transformed
//! space: `length_scale` is in units of input standard deviations and the
//! variances are in squared target units.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::response::rmse;

/// First jitter tried when the Gram matrix fails to factorize.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter before giving up.
pub const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(length_scale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let p = KernelParams {
            length_scale,
            signal_variance,
            noise_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.length_scale.is_finite()
            && self.length_scale > 0.0
            && self.signal_variance.is_finite()
            && self.signal_variance > 0.0
            && self.noise_variance.is_finite()
            && self.noise_variance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid kernel parameters {self:?}")))
        }
    }
}

/// `σ_f² · exp(−‖x − z‖² / 2ℓ²)`.
pub fn rbf_kernel(x: &[f64], z: &[f64], params: &KernelParams) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: z.len(),
        });
    }
    Ok(rbf_unchecked(x, z, params))
}

#[inline]
fn rbf_unchecked(x: &[f64], z: &[f64], params: &KernelParams) -> f64 {
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    params.signal_variance * (-d2 / (2.0 * params.length_scale * params.length_scale)).exp()
}

/// Per-feature z-scoring of inputs and centering of targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub target_mean: f64,
}

impl Standardizer {
    /// Population statistics of `x`. A single row is centered with unit scale.
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let n = x.len();
        let dims = x[0].len();
        let target_mean = y.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Ok(Standardizer {
                mean: x[0].clone(),
                std: vec![1.0; dims],
                target_mean,
            });
        }
        let mut mean = vec![0.0; dims];
        let mut std = vec![0.0; dims];
        for d in 0..dims {
            let m = x.iter().map(|r| r[d]).sum::<f64>() / n as f64;
            let var = x.iter().map(|r| (r[d] - m) * (r[d] - m)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            if !(s > 1e-12 * (1.0 + m.abs())) {
                return Err(Error::ConstantFeature { feature: d });
            }
            mean[d] = m;
            std[d] = s;
        }
        Ok(Standardizer {
            mean,
            std,
            target_mean,
        })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// A fitted posterior.
#[derive(Debug, Clone)]
pub struct GprModel {
    pub standardizer: Standardizer,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub params: KernelParams,
    /// Lower Cholesky factor of `K + (σ_n² + jitter) I`.
    pub chol: Matrix,
    pub alpha: Vec<f64>,
    pub jitter_used: f64,
}

fn validate_data(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::validation("gpr needs at least one training point"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let dims = x[0].len();
    if dims == 0 {
        return Err(Error::validation("gpr inputs need at least one feature"));
    }
    for row in x {
        if row.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite gpr input"));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite gpr target"));
    }
    Ok(dims)
}

/// Fits the posterior for fixed hyperparameters.
pub fn fit(x: &[Vec<f64>], y: &[f64], params: KernelParams) -> Result<GprModel> {
    validate_data(x, y)?;
    params.validate()?;
    let standardizer = Standardizer::fit(x, y)?;
    let inputs: Vec<Vec<f64>> = x.iter().map(|r| standardizer.transform(r)).collect();
    let targets: Vec<f64> = y.iter().map(|v| v - standardizer.target_mean).collect();
    fit_standardized(standardizer, inputs, targets, params)
}

fn gram(inputs: &[Vec<f64>], params: &KernelParams) -> Matrix {
    let n = inputs.len();
    let mut k = Matrix::zeros(n);
    for i in 0..n {
        k.set(i, i, params.signal_variance + params.noise_variance);
        for j in 0..i {
            let v = rbf_unchecked(&inputs[i], &inputs[j], params);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

fn fit_standardized(
    standardizer: Standardizer,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    params: KernelParams,
) -> Result<GprModel> {
    let k = gram(&inputs, &params);
    let mut jitter = 0.0;
    let chol = loop {
        let mut attempt = k.clone();
        attempt.add_diagonal(jitter);
        if let Some(l) = linalg::cholesky(&attempt) {
            break l;
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return Err(Error::IllConditioned { jitter: JITTER_MAX });
        }
    };
    let alpha = linalg::cholesky_solve(&chol, &targets);
    Ok(GprModel {
        standardizer,
        inputs,
        targets,
        params,
        chol,
        alpha,
        jitter_used: jitter,
    })
}

impl GprModel {
    pub fn dims(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Posterior mean and latent (noise-free) standard deviation at a raw input.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: x.len(),
            });
        }
        let xs = self.standardizer.transform(x);
        let k_star: Vec<f64> = self
            .inputs
            .iter()
            .map(|xi| rbf_unchecked(&xs, xi, &self.params))
            .collect();
        let mean = linalg::dot(&k_star, &self.alpha) + self.standardizer.target_mean;
        let v = linalg::solve_lower(&self.chol, &k_star);
        let var = (self.params.signal_variance - linalg::dot(&v, &v))
            .clamp(0.0, self.params.signal_variance);
        Ok((mean, var.sqrt()))
    }

    /// `−½ yᵀα − Σ log Lᵢᵢ − (n/2) log 2π` on the centered targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len();
        let log_det_half: f64 = (0..n).map(|i| self.chol.get(i, i).ln()).sum();
        -0.5 * linalg::dot(&self.targets, &self.alpha) - log_det_half - 0.5 * n as f64 * (2.0 * PI).ln()
    }
}

pub fn log_marginal_likelihood(x: &[Vec<f64>], y: &[f64], params: KernelParams) -> Result<f64> {
    Ok(fit(x, y, params)?.log_marginal_likelihood())
}

/// Bounds and budget for [`optimize_hyperparameters`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub length_scale: (f64, f64),
    pub signal_variance: (f64, f64),
    pub noise_variance: (f64, f64),
    pub grid_points: usize,
    pub refine_steps: usize,
    /// Best grid points used as refinement starts.
    pub starts: usize,
    pub cv_folds: usize,
    pub cv_seed: u64,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            length_scale: (1e-1, 1e2),
            signal_variance: (1e-2, 1e2),
            noise_variance: (1e-6, 1e1),
            grid_points: 8,
            refine_steps: 24,
            starts: 3,
            cv_folds: 5,
            cv_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub log_marginal_likelihood: f64,
    /// `None` when a fold could not be fitted.
    pub cv_rmse: Option<f64>,
    pub cv_folds: usize,
    pub jitter_used: f64,
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![(lo.ln() + hi.ln()) / 2.0];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Evaluates the LML at log-space coordinates; ill-conditioned points score `None`.
struct Objective<'a> {
    standardizer: &'a Standardizer,
    inputs: &'a [Vec<f64>],
    targets: &'a [f64],
}

impl Objective<'_> {
    fn eval(&self, theta: [f64; 3]) -> Option<f64> {
        let params = KernelParams {
            length_scale: theta[0].exp(),
            signal_variance: theta[1].exp(),
            noise_variance: theta[2].exp(),
        };
        fit_standardized(
            self.standardizer.clone(),
            self.inputs.to_vec(),
            self.targets.to_vec(),
            params,
        )
        .ok()
        .map(|m| m.log_marginal_likelihood())
        .filter(|v| v.is_finite())
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximization of `f` over `[lo, hi]`; returns the best
/// point seen together with its value.
fn golden_max(lo: f64, hi: f64, steps: usize, mut f: impl FnMut(f64) -> Option<f64>) -> Option<(f64, f64)> {
    let score = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = score(f(c));
    let mut fd = score(f(d));
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for _ in 0..steps {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = score(f(c));
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = score(f(d));
            if fd > best.1 {
                best = (d, fd);
            }
        }
    }
    best.1.is_finite().then_some(best)
}

/// Maximizes the log marginal likelihood: exhaustive log-spaced grid, then
/// coordinate-wise golden-section refinement from the best grid points.
pub fn optimize_hyperparameters(
    x: &[Vec<f64>],
    y: &[f64],
    spec: &SearchSpec,
) -> Result<(KernelParams, FitReport)> {
    validate_data(x, y)?;
    if x.len() < 3 {
        return Err(Error::validation(
            "hyperparameter optimization needs at least 3 points",
        ));
    }
    if spec.grid_points == 0 {
        return Err(Error::validation("grid_points must be >= 1"));
    }
    let standardizer = Standardizer::fit(x, y)?;
    let inputs: Vec<Vec<f64>> = x.iter().map(|r| standardizer.transform(r)).collect();
    let targets: Vec<f64> = y.iter().map(|v| v - standardizer.target_mean).collect();
    let objective = Objective {
        standardizer: &standardizer,
        inputs: &inputs,
        targets: &targets,
    };

    let axes = [
        log_grid(spec.length_scale.0, spec.length_scale.1, spec.grid_points),
        log_grid(spec.signal_variance.0, spec.signal_variance.1, spec.grid_points),
        log_grid(spec.noise_variance.0, spec.noise_variance.1, spec.grid_points),
    ];
    let bounds = [
        (spec.length_scale.0.ln(), spec.length_scale.1.ln()),
        (spec.signal_variance.0.ln(), spec.signal_variance.1.ln()),
        (spec.noise_variance.0.ln(), spec.noise_variance.1.ln()),
    ];
    let steps: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| {
            if spec.grid_points > 1 {
                (hi - lo) / (spec.grid_points - 1) as f64
            } else {
                hi - lo
            }
        })
        .collect();

    let mut scored: Vec<([f64; 3], f64)> = Vec::new();
    for &l in &axes[0] {
        for &s in &axes[1] {
            for &n in &axes[2] {
                let theta = [l, s, n];
                if let Some(v) = objective.eval(theta) {
                    scored.push((theta, v));
                }
            }
        }
    }
    if scored.is_empty() {
        return Err(Error::IllConditioned { jitter: JITTER_MAX });
    }
    // stable: earlier grid points win ties
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut best = scored[0];
    for &(start, start_value) in scored.iter().take(spec.starts.max(1)) {
        let mut theta = start;
        let mut value = start_value;
        for _sweep in 0..2 {
            for axis in 0..3 {
                let lo = (theta[axis] - steps[axis]).max(bounds[axis].0);
                let hi = (theta[axis] + steps[axis]).min(bounds[axis].1);
                if hi <= lo {
                    continue;
                }
                let found = golden_max(lo, hi, spec.refine_steps, |t| {
                    let mut trial = theta;
                    trial[axis] = t;
                    objective.eval(trial)
                });
                if let Some((t, v)) = found {
                    if v > value {
                        theta[axis] = t;
                        value = v;
                    }
                }
            }
        }
        if value > best.1 {
            best = (theta, value);
        }
    }

    let params = KernelParams {
        length_scale: best.0[0].exp(),
        signal_variance: best.0[1].exp(),
        noise_variance: best.0[2].exp(),
    };
    let model = fit_standardized(standardizer, inputs, targets, params)?;
    let folds = spec.cv_folds.min(x.len()).max(2);
    let cv_rmse = cross_validate(x, y, params, folds, spec.cv_seed).ok();
    Ok((
        params,
        FitReport {
            log_marginal_likelihood: model.log_marginal_likelihood(),
            cv_rmse,
            cv_folds: folds,
            jitter_used: model.jitter_used,
        },
    ))
}

/// Index sets of a seeded, contiguous k-fold split.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(order[start..start + size].to_vec());
        start += size;
    }
    out
}

/// Mean held-out RMSE over `folds` refits with fixed hyperparameters.
pub fn cross_validate(
    x: &[Vec<f64>],
    y: &[f64],
    params: KernelParams,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    validate_data(x, y)?;
    if folds < 2 || x.len() < folds {
        return Err(Error::validation(format!(
            "cross-validation needs n >= folds >= 2 (n = {}, folds = {folds})",
            x.len()
        )));
    }
    let mut total = 0.0;
    let splits = fold_indices(x.len(), folds, seed);
    for held in &splits {
        let mut train_x = Vec::with_capacity(x.len() - held.len());
        let mut train_y = Vec::with_capacity(x.len() - held.len());
        for i in 0..x.len() {
            if !held.contains(&i) {
                train_x.push(x[i].clone());
                train_y.push(y[i]);
            }
        }
        let model = fit(&train_x, &train_y, params)?;
        let mut pred = Vec::with_capacity(held.len());
        let mut actual = Vec::with_capacity(held.len());
        for &i in held {
            pred.push(model.predict(&x[i])?.0);
            actual.push(y[i]);
        }
        total += rmse(&pred, &actual)?;
    }
    Ok(total / folds as f64)
}
