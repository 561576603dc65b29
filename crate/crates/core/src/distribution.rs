//! Forecast distributions over waiting times.
//!
//! Two shapes occur in practice: weighted empirical distributions (forests,
//! rolling windows, nearest neighbours) and piecewise-linear CDFs built by
//! interpolating a grid of quantile forecasts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when comparing accumulated weights against a level.
const CUM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ForecastDistribution {
    /// Strictly ascending support with positive weights summing to one and
    /// a right-continuous step CDF.
    Discrete { support: Vec<f64>, weights: Vec<f64> },
    /// CDF passing linearly through `(values[k], levels[k])`. Levels run
    /// from 0 to 1 and values are non-decreasing.
    PiecewiseLinear { levels: Vec<f64>, values: Vec<f64> },
}

impl ForecastDistribution {
    pub fn point_mass(c: f64) -> Self {
        ForecastDistribution::Discrete { support: vec![c], weights: vec![1.0] }
    }

    /// Builds a discrete distribution from `(value, weight)` pairs, merging
    /// duplicate values and dropping zero weights.
    pub fn from_weighted<I: IntoIterator<Item = (f64, f64)>>(pairs: I) -> Result<Self> {
        let mut v: Vec<(f64, f64)> = pairs.into_iter().filter(|&(_, w)| w > 0.0).collect();
        if v.iter().any(|&(y, w)| !y.is_finite() || !w.is_finite()) {
            return Err(Error::InvalidInput("non-finite value or weight".into()));
        }
        if v.is_empty() {
            return Err(Error::InvalidInput("distribution has no positive weight".into()));
        }
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::with_capacity(v.len());
        let mut weights: Vec<f64> = Vec::with_capacity(v.len());
        for (y, w) in v {
            match support.last() {
                Some(&last) if last == y => *weights.last_mut().expect("paired") += w,
                _ => {
                    support.push(y);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(ForecastDistribution::Discrete { support, weights })
    }

    /// Equal-weight empirical distribution of `values`.
    pub fn empirical(values: &[f64]) -> Result<Self> {
        Self::from_weighted(values.iter().map(|&y| (y, 1.0)))
    }

    /// Piecewise-linear CDF through the given knots. Values are rearranged
    /// into ascending order, which repairs crossing quantile forecasts.
    pub fn from_quantile_knots(levels: &[f64], values: &[f64]) -> Result<Self> {
        if levels.len() != values.len() || levels.len() < 2 {
            return Err(Error::InvalidInput("need matching level/value knots".into()));
        }
        if levels[0] != 0.0 || *levels.last().expect("non-empty") != 1.0 || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("levels must rise strictly from 0 to 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite quantile value".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted[0] == *sorted.last().expect("non-empty") {
            return Ok(Self::point_mass(sorted[0]));
        }
        Ok(ForecastDistribution::PiecewiseLinear { levels: levels.to_vec(), values: sorted })
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            ForecastDistribution::Discrete { support, weights } => {
                let k = support.partition_point(|&s| s <= y);
                if k == support.len() {
                    1.0
                } else {
                    weights[..k].iter().sum::<f64>().min(1.0)
                }
            }
            ForecastDistribution::PiecewiseLinear { levels, values } => {
                if y < values[0] {
                    return 0.0;
                }
                let last = values.len() - 1;
                if y >= values[last] {
                    return 1.0;
                }
                // Largest k with values[k] <= y; k < last here.
                let k = values.partition_point(|&v| v <= y) - 1;
                let (v0, v1) = (values[k], values[k + 1]);
                levels[k] + (levels[k + 1] - levels[k]) * (y - v0) / (v1 - v0)
            }
        }
    }

    /// Quantile at level `tau` in (0, 1): the smallest `y` with `F(y) >= tau`.
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::QuantileLevel(tau));
        }
        Ok(self.inverse_cdf(tau))
    }

    /// Inverse CDF for any `u` in [0, 1]; used for sampling.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match self {
            ForecastDistribution::Discrete { support, weights } => {
                let mut cum = 0.0;
                for (y, w) in support.iter().zip(weights) {
                    cum += w;
                    if cum >= u - CUM_EPS {
                        return *y;
                    }
                }
                *support.last().expect("non-empty support")
            }
            ForecastDistribution::PiecewiseLinear { levels, values } => {
                let u = u.clamp(0.0, 1.0);
                let k = levels.partition_point(|&l| l < u).clamp(1, levels.len() - 1);
                let (l0, l1) = (levels[k - 1], levels[k]);
                values[k - 1] + (values[k] - values[k - 1]) * (u - l0) / (l1 - l0)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ForecastDistribution::Discrete { support, weights } => {
                support.iter().zip(weights).map(|(y, w)| y * w).sum()
            }
            ForecastDistribution::PiecewiseLinear { levels, values } => levels
                .windows(2)
                .zip(values.windows(2))
                .map(|(l, v)| (l[1] - l[0]) * 0.5 * (v[0] + v[1]))
                .sum(),
        }
    }

    pub fn median(&self) -> f64 {
        self.inverse_cdf(0.5)
    }

    /// `n` inverse-CDF draws at the stratified uniforms `(i - 0.5) / n`, or at
    /// `(i - 1 + U_i) / n` when a jitter seed is given. Output is ascending.
    pub fn stratified_sample(&self, n: usize, jitter_seed: Option<u64>) -> Vec<f64> {
        use rand::Rng as _;
        let nf = n as f64;
        let levels: Vec<f64> = match jitter_seed {
            None => (0..n).map(|i| (i as f64 + 0.5) / nf).collect(),
            Some(seed) => {
                let mut rng = crate::seed::rng(seed);
                (0..n).map(|i| (i as f64 + rng.random::<f64>()) / nf).collect()
            }
        };
        match self {
            // Levels ascend, so one walk over the support suffices.
            ForecastDistribution::Discrete { support, weights } => {
                let mut out = Vec::with_capacity(n);
                let (mut k, mut cum) = (0, weights[0]);
                for u in levels {
                    while cum < u - CUM_EPS && k + 1 < support.len() {
                        k += 1;
                        cum += weights[k];
                    }
                    out.push(support[k]);
                }
                out
            }
            ForecastDistribution::PiecewiseLinear { .. } => levels.into_iter().map(|u| self.inverse_cdf(u)).collect(),
        }
    }

    /// Distribution of `Y + c`.
    pub fn shifted(&self, c: f64) -> Self {
        self.map_values(|y| y + c)
    }

    /// Distribution of `a * Y` for `a > 0`.
    pub fn scaled(&self, a: f64) -> Self {
        assert!(a > 0.0, "scale must be positive");
        self.map_values(|y| a * y)
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        match self {
            ForecastDistribution::Discrete { support, weights } => ForecastDistribution::Discrete {
                support: support.iter().map(|&y| f(y)).collect(),
                weights: weights.clone(),
            },
            ForecastDistribution::PiecewiseLinear { levels, values } => ForecastDistribution::PiecewiseLinear {
                levels: levels.clone(),
                values: values.iter().map(|&y| f(y)).collect(),
            },
        }
    }

    pub fn min_support(&self) -> f64 {
        match self {
            ForecastDistribution::Discrete { support, .. } => support[0],
            ForecastDistribution::PiecewiseLinear { values, .. } => values[0],
        }
    }

    pub fn max_support(&self) -> f64 {
        match self {
            ForecastDistribution::Discrete { support, .. } => *support.last().expect("non-empty"),
            ForecastDistribution::PiecewiseLinear { values, .. } => *values.last().expect("non-empty"),
        }
    }

    pub fn is_point_mass(&self) -> bool {
        matches!(self, ForecastDistribution::Discrete { support, .. } if support.len() == 1)
    }
}
