//! Scoring rules for waiting-time forecasts: CRPS, the ranked probability
//! score over the Green/Amber/Red scheme, quantile coverage and point errors.

use std::io::Write;

use rayon::prelude::*;

use crate::distribution::ForecastDistribution;
use crate::error::{Error, Result};

/// Quantile levels used for coverage and quantile regression.
pub const TAU_GRID: [f64; 11] = [0.05, 0.15, 0.25, 0.35, 0.45, 0.50, 0.55, 0.65, 0.75, 0.85, 0.95];

/// Draws used for reported CRPS values.
pub const CRPS_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WaitClass {
    Green,
    Amber,
    Red,
}

impl WaitClass {
    pub const ALL: [WaitClass; 3] = [WaitClass::Green, WaitClass::Amber, WaitClass::Red];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WaitClass::Green => "green",
            WaitClass::Amber => "amber",
            WaitClass::Red => "red",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorScheme {
    pub low: f64,
    pub high: f64,
}

impl Default for ColorScheme {
    fn default() -> Self {
        ColorScheme { low: 45.0, high: 120.0 }
    }
}

impl ColorScheme {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::Config(format!("color thresholds must satisfy low < high, got {low} and {high}")));
        }
        Ok(ColorScheme { low, high })
    }

    pub fn categorize(&self, wait: f64) -> WaitClass {
        if wait <= self.low {
            WaitClass::Green
        } else if wait <= self.high {
            WaitClass::Amber
        } else {
            WaitClass::Red
        }
    }

    /// Probabilities of Green, Amber and Red implied by `dist`.
    pub fn class_probs(&self, dist: &ForecastDistribution) -> [f64; 3] {
        let f_low = dist.cdf(self.low);
        let f_high = dist.cdf(self.high);
        [f_low, f_high - f_low, 1.0 - f_high]
    }
}

/// Closed-form CRPS of `dist` at the outcome `y`.
pub fn crps_exact(dist: &ForecastDistribution, y: f64) -> f64 {
    match dist {
        ForecastDistribution::Discrete { support, weights } => {
            let mut abs_dev = 0.0;
            let mut pair = 0.0;
            let (mut cum_w, mut cum_wy) = (0.0, 0.0);
            for (&v, &w) in support.iter().zip(weights) {
                abs_dev += w * (v - y).abs();
                // Support is ascending: every earlier point lies below v.
                pair += w * (v * cum_w - cum_wy);
                cum_w += w;
                cum_wy += w * v;
            }
            (abs_dev - pair).max(0.0)
        }
        ForecastDistribution::PiecewiseLinear { levels, values } => {
            // Integral of (F(x) - 1{x >= y})^2 over the real line.
            let first = values[0];
            let last = *values.last().expect("non-empty");
            let mut total = (first - y).max(0.0) + (y - last).max(0.0);
            for k in 0..values.len() - 1 {
                let (a, b) = (values[k], values[k + 1]);
                if b <= a {
                    continue;
                }
                let (fa, fb) = (levels[k], levels[k + 1]);
                let f_at = |x: f64| fa + (fb - fa) * (x - a) / (b - a);
                let square = |lo: f64, hi: f64, step: f64| {
                    let (ga, gb) = (f_at(lo) - step, f_at(hi) - step);
                    (hi - lo) * (ga * ga + ga * gb + gb * gb) / 3.0
                };
                total += if y <= a {
                    square(a, b, 1.0)
                } else if y >= b {
                    square(a, b, 0.0)
                } else {
                    square(a, y, 0.0) + square(y, b, 1.0)
                };
            }
            total
        }
    }
}

/// CRPS estimated from `n` stratified inverse-CDF draws. Without a jitter
/// seed the draws sit at the midpoints `(i - 0.5) / n`.
pub fn crps_sampled(dist: &ForecastDistribution, y: f64, n: usize, jitter_seed: Option<u64>) -> f64 {
    crps_of_sorted_sample(&dist.stratified_sample(n, jitter_seed), y)
}

/// Sample CRPS for an ascending sample.
pub fn crps_of_sorted_sample(x: &[f64], y: f64) -> f64 {
    let n = x.len() as f64;
    let abs_dev = x.iter().map(|v| (v - y).abs()).sum::<f64>() / n;
    let half_pair = x
        .iter()
        .enumerate()
        .map(|(i, v)| v * (2.0 * i as f64 - n + 1.0))
        .sum::<f64>()
        / (n * n);
    (abs_dev - half_pair).max(0.0)
}

/// Ranked probability score for the ordered classes, divided by `K - 1`.
pub fn rps(probs: &[f64], actual: usize) -> Result<f64> {
    let k = probs.len();
    if k < 2 || actual >= k {
        return Err(Error::InvalidInput(format!("class {actual} outside {k} classes")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("class probabilities sum to {total}")));
    }
    let mut cum = 0.0;
    let mut score = 0.0;
    for (j, p) in probs[..k - 1].iter().enumerate() {
        cum += p;
        let observed = if j >= actual { 1.0 } else { 0.0 };
        score += (cum - observed) * (cum - observed);
    }
    Ok(score / (k - 1) as f64)
}

/// Percentage of actuals strictly below their quantile forecast.
pub fn coverage(quantiles: &[f64], actuals: &[f64]) -> Result<f64> {
    if quantiles.is_empty() || quantiles.len() != actuals.len() {
        return Err(Error::InvalidInput(format!(
            "coverage needs aligned non-empty inputs, got {} and {}",
            quantiles.len(),
            actuals.len()
        )));
    }
    let below = quantiles.iter().zip(actuals).filter(|(q, y)| y < q).count();
    Ok(100.0 * below as f64 / actuals.len() as f64)
}

/// RMSE of the forecast means and MAE of the forecast medians.
pub fn point_scores(dists: &[ForecastDistribution], actuals: &[f64]) -> Result<(f64, f64)> {
    let means: Vec<f64> = dists.iter().map(ForecastDistribution::mean).collect();
    let medians: Vec<f64> = dists.iter().map(ForecastDistribution::median).collect();
    point_scores_from(&means, &medians, actuals)
}

/// RMSE of `means` and MAE of `medians` against `actuals`.
pub fn point_scores_from(means: &[f64], medians: &[f64], actuals: &[f64]) -> Result<(f64, f64)> {
    let n = actuals.len();
    if n == 0 || means.len() != n || medians.len() != n {
        return Err(Error::InvalidInput("point scores need aligned non-empty inputs".into()));
    }
    let sse: f64 = means.iter().zip(actuals).map(|(m, y)| (m - y) * (m - y)).sum();
    let sae: f64 = medians.iter().zip(actuals).map(|(m, y)| (m - y).abs()).sum();
    Ok(((sse / n as f64).sqrt(), sae / n as f64))
}

/// Scores of one method on one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodScores {
    pub method: String,
    pub stage: String,
    pub n: usize,
    /// Mean CRPS; absent for point-only methods.
    pub crps: Option<f64>,
    /// Mean RPS times 100.
    pub rps: Option<f64>,
    /// Absent for class-probability forecasters.
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    /// Coverage in percent at each level of [`TAU_GRID`].
    pub coverage: Option<[f64; 11]>,
}

/// Scores a full set of distribution forecasts. CRPS uses midpoint
/// stratified draws unless `jitter_seed` is given, in which case patient `i`
/// uses the stream derived from that seed and `i`.
pub fn score_distributions(
    method: &str,
    stage: &str,
    dists: &[ForecastDistribution],
    actuals: &[f64],
    scheme: &ColorScheme,
    jitter_seed: Option<u64>,
) -> Result<MethodScores> {
    if dists.is_empty() || dists.len() != actuals.len() {
        return Err(Error::InvalidInput("scoring needs aligned non-empty inputs".into()));
    }
    let per: Vec<(f64, f64)> = dists
        .par_iter()
        .zip(actuals.par_iter())
        .enumerate()
        .map(|(i, (d, &y))| {
            let seed = jitter_seed.map(|s| crate::seed::derive(s, i as u64));
            let c = crps_sampled(d, y, CRPS_SAMPLES, seed);
            let r = rps(&scheme.class_probs(d), scheme.categorize(y).index())?;
            Ok((c, r))
        })
        .collect::<Result<_>>()?;
    let n = dists.len() as f64;
    let crps = per.iter().map(|p| p.0).sum::<f64>() / n;
    let rps_mean = per.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = [0.0; 11];
    for (slot, &tau) in cov.iter_mut().zip(TAU_GRID.iter()) {
        let q: Vec<f64> = dists.iter().map(|d| d.quantile(tau)).collect::<Result<_>>()?;
        *slot = coverage(&q, actuals)?;
    }
    let (rmse, mae) = point_scores(dists, actuals)?;
    Ok(MethodScores {
        method: method.into(),
        stage: stage.into(),
        n: dists.len(),
        crps: Some(crps),
        rps: Some(100.0 * rps_mean),
        rmse: Some(rmse),
        mae: Some(mae),
        coverage: Some(cov),
    })
}

/// Scores a point-only forecaster; its single forecast serves as both mean
/// and median.
pub fn score_points(method: &str, stage: &str, forecasts: &[f64], actuals: &[f64]) -> Result<MethodScores> {
    let (rmse, mae) = point_scores_from(forecasts, forecasts, actuals)?;
    Ok(MethodScores {
        method: method.into(),
        stage: stage.into(),
        n: actuals.len(),
        crps: None,
        rps: None,
        rmse: Some(rmse),
        mae: Some(mae),
        coverage: None,
    })
}

/// Scores forecasters that only issue class probabilities.
pub fn score_class_probs(
    method: &str,
    stage: &str,
    probs: &[Vec<f64>],
    actuals: &[f64],
    scheme: &ColorScheme,
) -> Result<MethodScores> {
    if probs.is_empty() || probs.len() != actuals.len() {
        return Err(Error::InvalidInput("scoring needs aligned non-empty inputs".into()));
    }
    let mut total = 0.0;
    for (p, &y) in probs.iter().zip(actuals) {
        total += rps(p, scheme.categorize(y).index())?;
    }
    Ok(MethodScores {
        method: method.into(),
        stage: stage.into(),
        n: actuals.len(),
        crps: None,
        rps: Some(100.0 * total / actuals.len() as f64),
        rmse: None,
        mae: None,
        coverage: None,
    })
}

/// Scores for a set of methods and stages, written as method-by-stage tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreReport {
    pub rows: Vec<MethodScores>,
}

impl ScoreReport {
    pub fn push(&mut self, row: MethodScores) {
        self.rows.push(row);
    }

    pub fn get(&self, method: &str, stage: &str) -> Option<&MethodScores> {
        self.rows.iter().find(|r| r.method == method && r.stage == stage)
    }

    fn methods(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method.as_str()) {
                out.push(&r.method);
            }
        }
        out
    }

    fn stages(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.stage.as_str()) {
                out.push(&r.stage);
            }
        }
        out
    }

    /// One table with a row per method and a column per stage, holding the
    /// values picked by `pick`. Missing entries are left empty.
    pub fn write_table<W: Write>(
        &self,
        out: W,
        header_lines: &[String],
        columns: &[(&str, fn(&MethodScores) -> Option<f64>)],
    ) -> Result<()> {
        let mut out = out;
        for line in header_lines {
            writeln!(out, "# {line}")?;
        }
        let stages = self.stages();
        let mut header = vec!["method".to_string()];
        for (label, _) in columns {
            for s in &stages {
                header.push(if columns.len() == 1 { s.to_string() } else { format!("{label}_{s}") });
            }
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&header)?;
        for m in self.methods() {
            let mut rec = vec![m.to_string()];
            for (_, pick) in columns {
                for s in &stages {
                    rec.push(self.get(m, s).and_then(pick).map(fmt_score).unwrap_or_default());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_crps<W: Write>(&self, out: W, header_lines: &[String]) -> Result<()> {
        self.write_table(out, header_lines, &[("crps", |r| r.crps)])
    }

    pub fn write_rps<W: Write>(&self, out: W, header_lines: &[String]) -> Result<()> {
        self.write_table(out, header_lines, &[("rps", |r| r.rps)])
    }

    pub fn write_point<W: Write>(&self, out: W, header_lines: &[String]) -> Result<()> {
        self.write_table(out, header_lines, &[("rmse", |r| r.rmse), ("mae", |r| r.mae)])
    }

    /// Coverage grid: one row per level, one column per method and stage.
    pub fn write_coverage<W: Write>(&self, out: W, header_lines: &[String]) -> Result<()> {
        let mut out = out;
        for line in header_lines {
            writeln!(out, "# {line}")?;
        }
        let rows: Vec<&MethodScores> = self.rows.iter().filter(|r| r.coverage.is_some()).collect();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["tau".to_string()];
        header.extend(rows.iter().map(|r| format!("{}_{}", r.method, r.stage)));
        w.write_record(&header)?;
        for (k, tau) in TAU_GRID.iter().enumerate() {
            let mut rec = vec![format!("{tau:.2}")];
            rec.extend(rows.iter().map(|r| fmt_score(r.coverage.expect("filtered")[k])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_score(x: f64) -> String {
    format!("{x:.4}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_crps(support: &[f64], weights: &[f64], y: f64) -> f64 {
        let mut a = 0.0;
        let mut b = 0.0;
        for (&vi, &wi) in support.iter().zip(weights) {
            a += wi * (vi - y).abs();
            for (&vj, &wj) in support.iter().zip(weights) {
                b += wi * wj * (vi - vj).abs();
            }
        }
        a - 0.5 * b
    }

    #[test]
    fn crps_hand_examples() {
        assert_eq!(crps_exact(&ForecastDistribution::point_mass(50.0), 80.0), 30.0);
        let u = ForecastDistribution::empirical(&[40.0, 60.0]).unwrap();
        assert!((crps_exact(&u, 50.0) - 5.0).abs() < 1e-12);
        assert_eq!(crps_exact(&ForecastDistribution::point_mass(7.0), 7.0), 0.0);
        assert_eq!(crps_sampled(&ForecastDistribution::point_mass(50.0), 80.0, 1000, None), 30.0);
    }

    #[test]
    fn closed_form_matches_double_sum() {
        let support = [3.0, 10.0, 11.0, 40.0, 95.0];
        let weights = [0.1, 0.3, 0.2, 0.25, 0.15];
        let d = ForecastDistribution::from_weighted(support.iter().copied().zip(weights)).unwrap();
        for y in [0.0, 10.0, 25.0, 100.0] {
            assert!((crps_exact(&d, y) - naive_crps(&support, &weights, y)).abs() < 1e-10);
        }
    }

    #[test]
    fn piecewise_crps_matches_dense_sample() {
        let d = ForecastDistribution::from_quantile_knots(&[0.0, 0.3, 0.5, 1.0], &[0.0, 20.0, 20.0, 90.0]).unwrap();
        for y in [-5.0, 10.0, 20.0, 50.0, 120.0] {
            let exact = crps_exact(&d, y);
            let sampled = crps_sampled(&d, y, 200_000, None);
            assert!((exact - sampled).abs() < 1e-3 * exact.max(1.0), "{y}: {exact} vs {sampled}");
        }
    }

    #[test]
    fn sampled_crps_is_reproducible() {
        let d = ForecastDistribution::empirical(&[5.0, 8.0, 30.0, 31.0]).unwrap();
        assert_eq!(crps_sampled(&d, 12.0, 1000, Some(4)), crps_sampled(&d, 12.0, 1000, Some(4)));
    }

    #[test]
    fn color_boundaries() {
        let s = ColorScheme::default();
        assert_eq!(s.categorize(45.0), WaitClass::Green);
        assert_eq!(s.categorize(120.0), WaitClass::Amber);
        assert_eq!(s.categorize(121.0), WaitClass::Red);
        assert!(ColorScheme::new(120.0, 45.0).is_err());
    }

    #[test]
    fn class_probabilities() {
        let s = ColorScheme::default();
        assert_eq!(s.class_probs(&ForecastDistribution::point_mass(50.0)), [0.0, 1.0, 0.0]);
        let p = s.class_probs(&ForecastDistribution::empirical(&[30.0, 90.0, 150.0]).unwrap());
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rps_examples() {
        assert_eq!(rps(&[0.0, 1.0, 0.0], 1).unwrap(), 0.0);
        assert!((rps(&[0.2, 0.4, 0.4], 1).unwrap() - 0.10).abs() < 1e-12);
        let forward = rps(&[0.1, 0.3, 0.6], 0).unwrap();
        let reversed = rps(&[0.6, 0.3, 0.1], 2).unwrap();
        assert!((forward - reversed).abs() < 1e-12);
        assert!(rps(&[0.5, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn rps_is_scaled_crps_on_class_indices() {
        let probs = [0.2, 0.5, 0.3];
        let d = ForecastDistribution::from_weighted([(0.0, 0.2), (1.0, 0.5), (2.0, 0.3)]).unwrap();
        for actual in 0..3 {
            let r = rps(&probs, actual).unwrap();
            assert!((r - crps_exact(&d, actual as f64) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coverage_examples() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(coverage(&[f64::INFINITY; 3], &y).unwrap(), 100.0);
        assert_eq!(coverage(&[0.0; 3], &y).unwrap(), 0.0);
        assert_eq!(coverage(&[2.0; 3], &y).unwrap(), 100.0 / 3.0);
        assert!(coverage(&[], &[]).is_err());
    }

    #[test]
    fn point_score_examples() {
        let perfect: Vec<ForecastDistribution> = [3.0, 9.0].iter().map(|&y| ForecastDistribution::point_mass(y)).collect();
        assert_eq!(point_scores(&perfect, &[3.0, 9.0]).unwrap(), (0.0, 0.0));
        let c: Vec<ForecastDistribution> = vec![ForecastDistribution::point_mass(10.0); 2];
        assert_eq!(point_scores(&c, &[9.0, 11.0]).unwrap(), (1.0, 1.0));
        let skew = ForecastDistribution::from_weighted([(10.0, 0.9), (200.0, 0.1)]).unwrap();
        let (rmse, mae) = point_scores(&[skew], &[10.0]).unwrap();
        assert!((rmse - 19.0).abs() < 1e-9);
        assert_eq!(mae, 0.0);
    }

    #[test]
    fn report_tables() {
        let mut rep = ScoreReport::default();
        let d = vec![ForecastDistribution::empirical(&[10.0, 50.0]).unwrap(); 3];
        let s = ColorScheme::default();
        rep.push(score_distributions("qrf", "t1", &d, &[10.0, 20.0, 60.0], &s, None).unwrap());
        rep.push(score_points("qlasso", "t1", &[30.0; 3], &[10.0, 20.0, 60.0]).unwrap());
        let mut buf = Vec::new();
        rep.write_crps(&mut buf, &["seed=1".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# seed=1\nmethod,t1\nqrf,"));
        assert!(text.contains("\nqlasso,\n"));
        let mut buf = Vec::new();
        rep.write_coverage(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 12);
    }
}
