//! k-nearest-neighbour forecaster. Distances are Euclidean within each
//! feature category on standardised columns and summed across categories,
//! so every category carries equal weight whatever its column count.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{check_labels, check_matrix, Standardizer};
use crate::distribution::ForecastDistribution;
use crate::error::{Error, Result};

pub const KNN_GRID: [usize; 9] = [1, 5, 10, 25, 50, 100, 250, 500, 1000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub standardizer: Standardizer,
    /// Standardised kept columns reordered so each category is contiguous.
    perm: Vec<usize>,
    /// Category boundaries in `perm`.
    bounds: Vec<usize>,
    data: Vec<f64>,
    labels: Vec<f64>,
    /// Tie-break keys: registration minute, then patient id.
    tie_keys: Vec<(i64, u64)>,
}

/// Fits on a row-major matrix whose columns belong to `categories`.
pub fn fit_knn(
    x: &[f64],
    n: usize,
    categories: &[u8],
    y: &[f64],
    tie_keys: &[(i64, u64)],
    k: usize,
) -> Result<KnnModel> {
    let m = categories.len();
    check_matrix(x, n, m)?;
    check_labels(y, n)?;
    if tie_keys.len() != n {
        return Err(Error::InvalidInput("one tie-break key per row is required".into()));
    }
    if n == 0 || k == 0 {
        return Err(Error::InvalidInput("k-NN needs k >= 1 and training rows".into()));
    }
    let standardizer = Standardizer::fit(x, n, m)?;
    let mut perm: Vec<usize> = (0..standardizer.n_kept()).collect();
    perm.sort_by_key(|&c| (categories[standardizer.keep[c]], c));
    let mut bounds = vec![0];
    for i in 1..perm.len() {
        if categories[standardizer.keep[perm[i]]] != categories[standardizer.keep[perm[i - 1]]] {
            bounds.push(i);
        }
    }
    bounds.push(perm.len());
    let z = standardizer.transform(x, n)?;
    let kk = standardizer.n_kept();
    let mut data = Vec::with_capacity(n * kk);
    for i in 0..n {
        data.extend(perm.iter().map(|&c| z[i * kk + c]));
    }
    Ok(KnnModel { k, standardizer, perm, bounds, data, labels: y.to_vec(), tie_keys: tie_keys.to_vec() })
}

impl KnnModel {
    pub fn n_train(&self) -> usize {
        self.labels.len()
    }

    /// `k` clamped to the training size, with a warning when clamped.
    pub fn effective_k(&self) -> (usize, Option<String>) {
        let n = self.n_train();
        if self.k > n {
            (n, Some(format!("k={} exceeds {n} training rows, using k={n}", self.k)))
        } else {
            (self.k, None)
        }
    }

    fn query(&self, row: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardizer.transform_row(row)?;
        Ok(self.perm.iter().map(|&c| z[c]).collect())
    }

    /// Sum over categories of the Euclidean distance within each category.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.bounds
            .windows(2)
            .map(|g| {
                a[g[0]..g[1]].iter().zip(&b[g[0]..g[1]]).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
            })
            .sum()
    }

    /// Indices of the `k` nearest training rows in order, ties broken by
    /// earlier registration and then lower patient id. Distances are
    /// compared on a 1e-9 grid so that rounding noise does not split ties
    /// that are exact on the raw features.
    pub fn neighbors(&self, row: &[f64], k: usize) -> Result<Vec<usize>> {
        let q = self.query(row)?;
        let width = q.len();
        let mut cand: Vec<(f64, usize)> = (0..self.n_train())
            .map(|i| ((self.distance(&q, &self.data[i * width..(i + 1) * width]) * 1e9).round(), i))
            .collect();
        let k = k.min(cand.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            a.0.total_cmp(&b.0).then_with(|| self.tie_keys[a.1].cmp(&self.tie_keys[b.1]))
        };
        if k < cand.len() {
            cand.select_nth_unstable_by(k, cmp);
            cand.truncate(k);
        }
        cand.sort_by(cmp);
        Ok(cand.into_iter().map(|c| c.1).collect())
    }

    /// Uniform distribution over the labels of the `k` nearest patients.
    pub fn forecast(&self, row: &[f64]) -> Result<ForecastDistribution> {
        let (k, _) = self.effective_k();
        let labels: Vec<f64> = self.neighbors(row, k)?.into_iter().map(|i| self.labels[i]).collect();
        ForecastDistribution::empirical(&labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnTuning {
    pub k: usize,
    /// Holdout squared error of the neighbour mean for each grid value.
    pub sse: Vec<(usize, f64)>,
    pub warnings: Vec<String>,
}

/// Picks k from the grid by the squared error of the neighbour-mean point
/// forecast on the holdout rows; ties go to the smaller k.
pub fn tune_knn(model: &KnnModel, holdout_x: &[f64], holdout_y: &[f64]) -> Result<KnnTuning> {
    let m = model.standardizer.n_cols;
    let n_hold = holdout_y.len();
    check_matrix(holdout_x, n_hold, m)?;
    let n = model.n_train();
    let mut warnings = Vec::new();
    let grid: Vec<usize> = KNN_GRID.iter().map(|&k| k.min(n)).collect();
    if KNN_GRID.iter().any(|&k| k > n) {
        warnings.push(format!("k grid clamped to {n} training rows"));
    }
    let kmax = *grid.last().expect("non-empty grid");
    let per_row: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..n_hold)
            .into_par_iter()
            .map(|i| {
                let nb = model.neighbors(&holdout_x[i * m..(i + 1) * m], kmax)?;
                let mut acc = 0.0;
                let mut out = Vec::with_capacity(grid.len());
                let mut used = 0;
                for &k in &grid {
                    while used < k {
                        acc += model.labels[nb[used]];
                        used += 1;
                    }
                    let e = acc / k as f64 - holdout_y[i];
                    out.push(e * e);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?
    };
    let sse: Vec<(usize, f64)> =
        grid.iter().enumerate().map(|(g, &k)| (k, per_row.iter().map(|r| r[g]).sum())).collect();
    let k = sse.iter().fold(sse[0], |b, &c| if c.1 < b.1 { c } else { b }).0;
    Ok(KnnTuning { k, sse, warnings })
}
