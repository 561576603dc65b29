//! Linear quantile regression solved as a linear program with a
//! primal-dual interior point method (Frisch-Newton with Mehrotra
//! correction), followed by a vertex polish.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_labels, check_matrix, independent_columns, Standardizer};
use crate::distribution::ForecastDistribution;
use crate::error::{Error, Result};
use crate::scoring::TAU_GRID;

const STEP_DAMPING: f64 = 0.9995;
const MAX_ITERATIONS: usize = 100;
const RIDGE: f64 = 1e-8;

/// Pinball loss summed over observations.
pub fn pinball_objective(residuals: impl IntoIterator<Item = f64>, tau: f64) -> f64 {
    residuals.into_iter().map(|u| if u < 0.0 { (tau - 1.0) * u } else { tau * u }).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QregFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Final duality gap of the interior point iterations.
    pub gap: f64,
}

/// Fits `y ~ intercept + x` at quantile level `tau` on a row-major matrix.
/// With `m = 0` this is the intercept-only model.
pub fn fit_qreg(x: &[f64], n: usize, m: usize, y: &[f64], tau: f64) -> Result<QregFit> {
    check_matrix(x, n, m)?;
    check_labels(y, n)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::QuantileLevel(tau));
    }
    if n == 0 {
        return Err(Error::InvalidInput("quantile regression needs at least one row".into()));
    }
    let full = DMatrix::from_fn(n, m + 1, |i, j| if j == 0 { 1.0 } else { x[i * m + j - 1] });
    let yv = DVector::from_column_slice(y);
    let cols = independent_columns(&full.tr_mul(&full));
    let design = full.select_columns(&cols);
    let (reduced, iterations, gap) = solve(&design, &yv, tau)?;
    let reduced = polish(&design, &yv, tau, reduced);
    let mut beta = DVector::zeros(m + 1);
    for (c, &j) in cols.iter().enumerate() {
        beta[j] = reduced[c];
    }
    let objective = pinball_objective((&yv - &design * &reduced).iter().copied(), tau);
    Ok(QregFit { intercept: beta[0], slopes: beta.iter().skip(1).copied().collect(), objective, iterations, gap })
}

/// Smallest step in (0, inf] keeping `v + step * dv` non-negative.
fn bound(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter().zip(dv.iter()).filter(|(_, &d)| d < 0.0).map(|(&a, &d)| -a / d).fold(f64::INFINITY, f64::min)
}

/// Solves `(X' diag(q) X) d = X' diag(q) v`. A small ridge is added only
/// if the factorisation fails.
fn weighted_normal_solve(design: &DMatrix<f64>, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let root = q.map(f64::sqrt);
    let mut scaled = design.clone();
    for mut col in scaled.column_iter_mut() {
        col.component_mul_assign(&root);
    }
    let normal = scaled.tr_mul(&scaled);
    let rhs = design.tr_mul(&q.component_mul(v));
    let p = normal.nrows();
    if let Some(ch) = normal.clone().cholesky() {
        return Ok(ch.solve(&rhs));
    }
    let mut ridge = RIDGE * (normal.trace() / p as f64).max(1.0);
    for _ in 0..6 {
        let mut a = normal.clone();
        for k in 0..p {
            a[(k, k)] += ridge;
        }
        if let Some(ch) = a.cholesky() {
            return Ok(ch.solve(&rhs));
        }
        ridge *= 100.0;
    }
    Err(Error::InvalidInput("quantile regression normal equations are singular".into()))
}

/// Interior point solution of `min sum rho_tau(y - X b)` via its bounded
/// dual `max y'a  s.t.  X'a = (1 - tau) X'1, 0 <= a <= 1`.
fn solve(design: &DMatrix<f64>, y: &DVector<f64>, tau: f64) -> Result<(DVector<f64>, usize, f64)> {
    let n = design.nrows();
    let nf = n as f64;
    let ones = DVector::from_element(n, 1.0);
    let c = -y;
    let mut x = DVector::from_element(n, 1.0 - tau);
    let b = design.tr_mul(&x);
    let mut s = &ones - &x;
    let mut yd = weighted_normal_solve(design, &ones, &c)?;
    let mut r = &c - design * &yd;
    r.apply(|v| {
        if *v == 0.0 {
            *v = 0.001;
        }
    });
    let mut z = r.map(|v| v.max(0.0));
    let mut w = &z - &r;
    let gap_of = |x: &DVector<f64>, yd: &DVector<f64>, w: &DVector<f64>| c.dot(x) - yd.dot(&b) + w.sum();
    let mut gap = gap_of(&x, &yd, &w);
    let tol = 1e-9 * (1.0 + y.abs().sum());
    let mut it = 0;
    while gap > tol {
        if it == MAX_ITERATIONS {
            return Err(Error::NoConvergence { iterations: it, gap });
        }
        it += 1;
        let q = z.component_div(&x).zip_map(&w.component_div(&s), |a, b| 1.0 / (a + b));
        let r = &z - &w;
        let mut dy = weighted_normal_solve(design, &q, &r)?;
        let mut dx = q.component_mul(&(design * &dy - &r));
        let mut ds = -&dx;
        let mut dz = -z.component_mul(&(dx.component_div(&x).add_scalar(1.0)));
        let mut dw = -w.component_mul(&(ds.component_div(&s).add_scalar(1.0)));
        let steps = |dx: &DVector<f64>, ds: &DVector<f64>, dz: &DVector<f64>, dw: &DVector<f64>| {
            let fp = (STEP_DAMPING * bound(&x, dx).min(bound(&s, ds))).min(1.0);
            let fd = (STEP_DAMPING * bound(&w, dw).min(bound(&z, dz))).min(1.0);
            (fp, fd)
        };
        let (mut fp, mut fd) = steps(&dx, &ds, &dz, &dw);
        if fp.min(fd) < 1.0 {
            let mu0 = z.dot(&x) + w.dot(&s);
            let g = (&z + fd * &dz).dot(&(&x + fp * &dx)) + (&w + fd * &dw).dot(&(&s + fp * &ds));
            let mu = mu0 * (g / mu0).powi(3) / (2.0 * nf);
            let dxdz = dx.component_mul(&dz);
            let dsdw = ds.component_mul(&dw);
            let xinv = x.map(|v| 1.0 / v);
            let sinv = s.map(|v| 1.0 / v);
            let xi = mu * (&xinv - &sinv);
            let v = &r + &dxdz - &dsdw - &xi;
            dy = weighted_normal_solve(design, &q, &v)?;
            dx = q.component_mul(&(design * &dy + &xi - &r - &dxdz + &dsdw));
            ds = -&dx;
            dz = mu * &xinv - &z - xinv.component_mul(&z).component_mul(&dx) - &dxdz;
            dw = mu * &sinv - &w - sinv.component_mul(&w).component_mul(&ds) - &dsdw;
            (fp, fd) = steps(&dx, &ds, &dz, &dw);
        }
        x += fp * &dx;
        s += fp * &ds;
        yd += fd * &dy;
        w += fd * &dw;
        z += fd * &dz;
        gap = gap_of(&x, &yd, &w);
        if !gap.is_finite() {
            return Err(Error::NoConvergence { iterations: it, gap });
        }
    }
    Ok((-yd, it, gap))
}

/// An optimum sits at a vertex interpolating `p` observations. Refit exactly
/// through the `p` smallest residuals and keep whichever fit is better.
fn polish(design: &DMatrix<f64>, y: &DVector<f64>, tau: f64, beta: DVector<f64>) -> DVector<f64> {
    let p = design.ncols();
    let resid = y - design * &beta;
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()).then(a.cmp(&b)));
    if order.len() < p {
        return beta;
    }
    let rows = &order[..p];
    let sub = DMatrix::from_fn(p, p, |i, j| design[(rows[i], j)]);
    let rhs = DVector::from_iterator(p, rows.iter().map(|&i| y[i]));
    let Some(vertex) = sub.lu().solve(&rhs) else { return beta };
    if vertex.iter().any(|v| !v.is_finite()) {
        return beta;
    }
    let obj = |b: &DVector<f64>| pinball_objective((y - design * b).iter().copied(), tau);
    if obj(&vertex) <= obj(&beta) {
        vertex
    } else {
        beta
    }
}

/// One quantile regression per level of the grid on a standardised design,
/// with the in-sample label range as distribution bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QregModel {
    pub taus: Vec<f64>,
    pub standardizer: Standardizer,
    /// Intercept followed by slopes on the standardised kept columns.
    pub coefficients: Vec<Vec<f64>>,
    pub y_min: f64,
    pub y_max: f64,
}

impl QregModel {
    pub fn fit(x: &[f64], n: usize, m: usize, y: &[f64]) -> Result<Self> {
        check_labels(y, n)?;
        if n == 0 {
            return Err(Error::InvalidInput("quantile regression needs training rows".into()));
        }
        let standardizer = Standardizer::fit(x, n, m)?;
        let z = standardizer.transform(x, n)?;
        let k = standardizer.n_kept();
        let coefficients = TAU_GRID
            .iter()
            .map(|&tau| {
                let f = fit_qreg(&z, n, k, y, tau)?;
                let mut c = vec![f.intercept];
                c.extend(f.slopes);
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?;
        let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(QregModel { taus: TAU_GRID.to_vec(), standardizer, coefficients, y_min, y_max })
    }

    /// Raw quantile predictions at each grid level, before rearrangement.
    pub fn predict_quantiles(&self, row: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardizer.transform_row(row)?;
        Ok(self.coefficients.iter().map(|c| c[0] + c[1..].iter().zip(&z).map(|(b, v)| b * v).sum::<f64>()).collect())
    }

    /// Piecewise-linear CDF through the grid quantiles, clamped into the
    /// training label range and at zero, then rearranged.
    pub fn distribution(&self, row: &[f64]) -> Result<ForecastDistribution> {
        let q = self.predict_quantiles(row)?;
        let mut levels = vec![0.0];
        levels.extend(&self.taus);
        levels.push(1.0);
        let mut values = vec![self.y_min];
        values.extend(q);
        values.push(self.y_max);
        values.iter_mut().for_each(|v| *v = v.clamp(self.y_min, self.y_max).max(0.0));
        ForecastDistribution::from_quantile_knots(&levels, &values)
    }
}
