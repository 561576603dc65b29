//! Benchmark forecasters: rolling empirical windows, linear quantile
//! regression, the Q-Lasso point forecaster and category-weighted k-NN.

mod knn;
mod lasso;
mod qreg;
mod window;

pub use knn::{fit_knn, tune_knn, KnnModel, KnnTuning, KNN_GRID};
pub use lasso::{default_lambdas, fit_lasso_path, fit_qlasso, lambda_max, LassoFit, LassoModel, LassoPath, N_LAMBDA};
pub use qreg::{fit_qreg, pinball_objective, QregFit, QregModel};
pub use window::{
    tune_windows, WaitHistory, WindowForecast, WindowMethod, WindowParams, WindowTuning, DEFAULT_P_HOURS,
    DEFAULT_Q_DAYS, MAX_P_HOURS, MAX_Q_DAYS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column centring and scaling fitted on training rows. Constant columns
/// are dropped from the transformed design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub n_cols: usize,
    /// Kept column indices in the original matrix.
    pub keep: Vec<usize>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Population means and standard deviations of a row-major matrix.
    /// Columns are summed in sorted order so the result does not depend on
    /// the order of the rows.
    pub fn fit(x: &[f64], n: usize, m: usize) -> Result<Self> {
        check_matrix(x, n, m)?;
        let mut keep = Vec::new();
        let mut mean = Vec::new();
        let mut sd = Vec::new();
        let mut col = Vec::with_capacity(n);
        for j in 0..m {
            col.clear();
            col.extend((0..n).map(|i| x[i * m + j]));
            col.sort_by(f64::total_cmp);
            let mu = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            if var > 1e-12 * (1.0 + mu * mu) {
                keep.push(j);
                mean.push(mu);
                sd.push(var.sqrt());
            }
        }
        Ok(Standardizer { n_cols: m, keep, mean, sd })
    }

    pub fn n_kept(&self) -> usize {
        self.keep.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_cols {
            return Err(Error::SchemaMismatch { expected: self.n_cols, got: row.len() });
        }
        Ok(self.keep.iter().zip(self.mean.iter().zip(&self.sd)).map(|(&j, (mu, sd))| (row[j] - mu) / sd).collect())
    }

    /// Row-major transformed matrix with `n_kept` columns.
    pub fn transform(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        check_matrix(x, n, self.n_cols)?;
        let mut out = Vec::with_capacity(n * self.n_kept());
        for i in 0..n {
            out.extend(self.transform_row(&x[i * self.n_cols..(i + 1) * self.n_cols])?);
        }
        Ok(out)
    }
}

/// Columns spanning the column space of a design, chosen greedily left to
/// right from its Gram matrix. Dropped columns get coefficient zero, which
/// leaves the attainable fits unchanged.
pub(crate) fn independent_columns(gram: &nalgebra::DMatrix<f64>) -> Vec<usize> {
    let p = gram.nrows();
    let mut kept: Vec<usize> = Vec::new();
    // Rows of the Cholesky factor of the kept block.
    let mut factor: Vec<Vec<f64>> = Vec::new();
    for j in 0..p {
        let gjj = gram[(j, j)];
        if gjj <= 0.0 {
            continue;
        }
        let mut v = Vec::with_capacity(kept.len());
        for (a, row) in factor.iter().enumerate() {
            let dot: f64 = row[..a].iter().zip(&v).map(|(l, x)| l * x).sum();
            v.push((gram[(kept[a], j)] - dot) / row[a]);
        }
        let d = gjj - v.iter().map(|x| x * x).sum::<f64>();
        if d > 1e-9 * gjj {
            v.push(d.sqrt());
            factor.push(v);
            kept.push(j);
        }
    }
    kept
}

pub(crate) fn check_matrix(x: &[f64], n: usize, m: usize) -> Result<()> {
    if x.len() != n * m {
        return Err(Error::InvalidInput(format!("matrix has {} values, expected {n} x {m}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix contains non-finite values".into()));
    }
    Ok(())
}

pub(crate) fn check_labels(y: &[f64], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::InvalidInput(format!("{} labels for {n} rows", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("labels contain non-finite values".into()));
    }
    Ok(())
}

/// Tuned hyperparameters for exact reruns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub stage: String,
    pub p: Option<u32>,
    pub q: Option<u32>,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    /// Kept as a decimal string on disk: TOML integers stop at `i64::MAX`.
    #[serde(default, with = "seed_text", skip_serializing_if = "Option::is_none")]
    pub cv_seed: Option<u64>,
}

mod seed_text {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &Option<u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match seed {
            Some(v) => s.serialize_str(&v.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u64>, D::Error> {
        Option::<String>::deserialize(d)?.map(|t| t.parse().map_err(D::Error::custom)).transpose()
    }
}
