//! Lasso point forecaster: coordinate descent on the standardised Gram
//! matrix along a log-spaced penalty path, with the penalty picked by
//! seeded 5-fold cross-validation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_labels, check_matrix, independent_columns, Standardizer};
use crate::error::{Error, Result};

pub const N_LAMBDA: usize = 50;
const LAMBDA_RATIO: f64 = 1e-4;
const N_FOLDS: usize = 5;
const RIDGE: f64 = 1e-8;
const MAX_SWEEPS: usize = 100_000;
const TOLERANCE: f64 = 1e-10;
const ACTIVE_SWEEPS: usize = 50;

/// Sufficient statistics of a standardised problem, `X'X / n` and
/// `X'(y - mean y) / n`, restricted to linearly independent columns.
struct Gram {
    gram: DMatrix<f64>,
    xty: Vec<f64>,
    y_mean: f64,
    /// Positions of the retained columns among all standardised columns.
    cols: Vec<usize>,
    width: usize,
    /// Smallest penalty zeroing every slope, over all columns.
    lambda_max: f64,
}

impl Gram {
    fn new(z: &[f64], n: usize, k: usize, y: &[f64]) -> Self {
        let nf = n as f64;
        let y_mean = y.iter().sum::<f64>() / nf;
        let design = DMatrix::from_row_slice(n, k, z);
        let full = design.tr_mul(&design) / nf;
        let cols = independent_columns(&full);
        let mut gram = full.select_rows(&cols).select_columns(&cols);
        for j in 0..cols.len() {
            gram[(j, j)] += RIDGE;
        }
        let centred = nalgebra::DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let xty_full = design.tr_mul(&centred) / nf;
        let xty = cols.iter().map(|&j| xty_full[j]).collect();
        let lambda_max = xty_full.iter().map(|c| 2.0 * c.abs()).fold(0.0, f64::max);
        Gram { gram, xty, y_mean, lambda_max, cols, width: k }
    }

    /// Expands reduced coefficients to all standardised columns.
    fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut beta = vec![0.0; self.width];
        for (&j, &b) in self.cols.iter().zip(reduced) {
            beta[j] = b;
        }
        beta
    }

    /// Minimises `(1/n)|y - X b|^2 + lambda |b|_1` starting from `beta`.
    /// Full sweeps alternate with sweeps over the non-zero coefficients
    /// until a full sweep changes nothing beyond the tolerance. Returns the
    /// number of sweeps and whether the tolerance was met.
    fn descend(&self, lambda: f64, beta: &mut [f64]) -> (usize, bool) {
        let k = beta.len();
        let mut grad = self.gradient(beta);
        let all: Vec<usize> = (0..k).collect();
        let mut sweeps = 0;
        loop {
            if sweeps >= MAX_SWEEPS {
                return (sweeps, false);
            }
            sweeps += 1;
            if self.sweep(lambda, beta, &mut grad, &all) {
                return (sweeps, true);
            }
            let active: Vec<usize> = (0..k).filter(|&j| beta[j] != 0.0).collect();
            let mut settled = false;
            for _ in 0..ACTIVE_SWEEPS {
                if sweeps >= MAX_SWEEPS {
                    break;
                }
                sweeps += 1;
                if self.sweep(lambda, beta, &mut grad, &active) {
                    settled = true;
                    break;
                }
            }
            // Slow progress on an ill-conditioned active set: solve it
            // directly with the current signs and let the next full sweep
            // confirm the result.
            if !settled && self.solve_active(lambda, beta, &active) {
                grad = self.gradient(beta);
            }
        }
    }

    /// `xty - G beta`.
    fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let k = beta.len();
        (0..k).map(|j| self.xty[j] - (0..k).map(|l| self.gram[(j, l)] * beta[l]).sum::<f64>()).collect()
    }

    /// Moves toward the exact minimiser on `active` with the signs held
    /// fixed, stopping where the first coefficient reaches zero. The
    /// objective cannot increase along the way.
    fn solve_active(&self, lambda: f64, beta: &mut [f64], active: &[usize]) -> bool {
        let a = active.len();
        if a == 0 {
            return false;
        }
        let g = DMatrix::from_fn(a, a, |r, c| self.gram[(active[r], active[c])]);
        let rhs =
            DVector::from_fn(a, |r, _| self.xty[active[r]] - lambda / 2.0 * beta[active[r]].signum());
        let Some(chol) = g.cholesky() else {
            return false;
        };
        let sol = chol.solve(&rhs);
        let mut step = 1.0;
        let mut hit = None;
        for (r, &j) in active.iter().enumerate() {
            if sol[r] * beta[j] <= 0.0 {
                let t = beta[j] / (beta[j] - sol[r]);
                if t < step {
                    step = t;
                    hit = Some(j);
                }
            }
        }
        for (r, &j) in active.iter().enumerate() {
            beta[j] += step * (sol[r] - beta[j]);
        }
        if let Some(j) = hit {
            beta[j] = 0.0;
        }
        true
    }

    /// One pass over `coords`; true when no coefficient moved materially.
    fn sweep(&self, lambda: f64, beta: &mut [f64], grad: &mut [f64], coords: &[usize]) -> bool {
        let half = lambda / 2.0;
        let mut max_step: f64 = 0.0;
        let mut max_beta: f64 = 0.0;
        for &j in coords {
            let gjj = self.gram[(j, j)];
            let new = soft_threshold(grad[j] + gjj * beta[j], half) / gjj;
            let delta = new - beta[j];
            if delta != 0.0 {
                beta[j] = new;
                for (g, gl) in grad.iter_mut().zip(self.gram.column(j).iter()) {
                    *g -= delta * gl;
                }
                max_step = max_step.max(delta.abs() * gjj.sqrt());
            }
            max_beta = max_beta.max(beta[j].abs());
        }
        max_step <= TOLERANCE * max_beta.max(1.0)
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Penalty at which every standardised slope is zero:
/// `max_j |2/n sum_i x_ij y_i|`.
pub fn lambda_max(x: &[f64], n: usize, m: usize, y: &[f64]) -> Result<f64> {
    check_labels(y, n)?;
    let s = Standardizer::fit(x, n, m)?;
    let z = s.transform(x, n)?;
    Ok(Gram::new(&z, n, s.n_kept(), y).lambda_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub lambda: f64,
    /// Coefficients on the standardised kept columns.
    pub beta: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

impl LassoFit {
    pub fn l1_norm(&self) -> f64 {
        self.beta.iter().map(|b| b.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    pub standardizer: Standardizer,
    pub y_mean: f64,
    pub lambda_max: f64,
    pub fits: Vec<LassoFit>,
}

impl LassoPath {
    /// Intercept and slopes on the original columns for fit `i`; dropped
    /// constant columns get slope zero.
    pub fn original_scale(&self, i: usize) -> (f64, Vec<f64>) {
        let s = &self.standardizer;
        let mut slopes = vec![0.0; s.n_cols];
        let mut intercept = self.y_mean;
        for (c, &j) in s.keep.iter().enumerate() {
            let b = self.fits[i].beta[c] / s.sd[c];
            slopes[j] = b;
            intercept -= b * s.mean[c];
        }
        (intercept, slopes)
    }
}

/// Log-spaced penalties from `lambda_max` down to `lambda_max * 1e-4`.
pub fn default_lambdas(lambda_max: f64) -> Vec<f64> {
    if lambda_max <= 0.0 {
        return vec![0.0];
    }
    (0..N_LAMBDA)
        .map(|i| lambda_max * LAMBDA_RATIO.powf(i as f64 / (N_LAMBDA - 1) as f64))
        .collect()
}

/// Warm-started path over `lambdas` (the default grid when `None`).
/// Penalties are visited in the given order.
pub fn fit_lasso_path(x: &[f64], n: usize, m: usize, y: &[f64], lambdas: Option<&[f64]>) -> Result<LassoPath> {
    check_labels(y, n)?;
    if n == 0 {
        return Err(Error::InvalidInput("lasso needs training rows".into()));
    }
    let standardizer = Standardizer::fit(x, n, m)?;
    let z = standardizer.transform(x, n)?;
    let g = Gram::new(&z, n, standardizer.n_kept(), y);
    let lmax = g.lambda_max;
    let grid = lambdas.map_or_else(|| default_lambdas(lmax), <[f64]>::to_vec);
    if grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidInput("penalties must be non-negative".into()));
    }
    let mut beta = vec![0.0; g.cols.len()];
    let fits = grid
        .iter()
        .map(|&lambda| {
            let (sweeps, converged) = g.descend(lambda, &mut beta);
            LassoFit { lambda, beta: g.expand(&beta), sweeps, converged }
        })
        .collect();
    Ok(LassoPath { y_mean: g.y_mean, lambda_max: lmax, standardizer, fits })
}

/// Fitted point forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub standardizer: Standardizer,
    pub y_mean: f64,
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub cv_seed: u64,
    /// Penalty grid and mean held-out squared error at each penalty.
    pub cv_lambdas: Vec<f64>,
    pub cv_mse: Vec<f64>,
}

impl LassoModel {
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        let z = self.standardizer.transform_row(row)?;
        Ok(self.y_mean + self.beta.iter().zip(&z).map(|(b, v)| b * v).sum::<f64>())
    }
}

/// Lasso with the penalty chosen by 5-fold cross-validation over random
/// folds drawn from `cv_seed`. The design should already include the
/// fluid-ratio columns.
pub fn fit_qlasso(x: &[f64], n: usize, m: usize, y: &[f64], cv_seed: u64) -> Result<LassoModel> {
    check_matrix(x, n, m)?;
    check_labels(y, n)?;
    if n < N_FOLDS {
        return Err(Error::InvalidInput(format!("cross-validation needs at least {N_FOLDS} rows")));
    }
    let lambdas = default_lambdas(lambda_max(x, n, m, y)?);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::seed::rng(cv_seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % N_FOLDS;
    }
    let mut sse = vec![0.0; lambdas.len()];
    for fold in 0..N_FOLDS {
        let (train, held): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] != fold);
        let gather = |rows: &[usize]| -> (Vec<f64>, Vec<f64>) {
            let mut xs = Vec::with_capacity(rows.len() * m);
            for &i in rows {
                xs.extend_from_slice(&x[i * m..(i + 1) * m]);
            }
            (xs, rows.iter().map(|&i| y[i]).collect())
        };
        let (xt, yt) = gather(&train);
        let path = fit_lasso_path(&xt, train.len(), m, &yt, Some(&lambdas))?;
        for &i in &held {
            let zrow = path.standardizer.transform_row(&x[i * m..(i + 1) * m])?;
            for (l, fit) in path.fits.iter().enumerate() {
                let pred = path.y_mean + fit.beta.iter().zip(&zrow).map(|(b, v)| b * v).sum::<f64>();
                sse[l] += (pred - y[i]) * (pred - y[i]);
            }
        }
    }
    let cv_mse: Vec<f64> = sse.iter().map(|s| s / n as f64).collect();
    let best = (0..cv_mse.len()).fold(0, |b, l| if cv_mse[l] < cv_mse[b] { l } else { b });
    let path = fit_lasso_path(x, n, m, y, Some(&lambdas[..=best]))?;
    let fit = path.fits.last().expect("non-empty path");
    Ok(LassoModel {
        standardizer: path.standardizer.clone(),
        y_mean: path.y_mean,
        lambda: fit.lambda,
        beta: fit.beta.clone(),
        cv_seed,
        cv_lambdas: lambdas,
        cv_mse,
    })
}
