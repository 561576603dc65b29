//! Rolling-window empirical forecasters.
//!
//! The four-hour and p-hour windows collect waits that finished (treatment
//! started) inside the window, so every wait they use is known at forecast
//! time. The q-period method collects waits whose clock started in the same
//! clock hour on each of the previous q days; those are complete by then
//! because no wait reaches 14 hours.

use serde::{Deserialize, Serialize};

use crate::calendar::{Minute, MINUTES_PER_DAY, MINUTES_PER_HOUR};
use crate::distribution::ForecastDistribution;
use crate::error::{Error, Result};
use crate::eventlog::PatientRecord;
use crate::features::Stage;

pub const MAX_P_HOURS: u32 = 48;
pub const MAX_Q_DAYS: u32 = 28;
pub const DEFAULT_P_HOURS: u32 = 4;
pub const DEFAULT_Q_DAYS: u32 = 7;

/// Windows are widened at most this many hours before giving up.
const MAX_WIDEN_HOURS: u32 = 24 * 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindowMethod {
    FourHour,
    PHour,
    QPeriod,
}

impl WindowMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowMethod::FourHour => "empirical_4h",
            WindowMethod::PHour => "empirical_p",
            WindowMethod::QPeriod => "empirical_q",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowParams {
    pub p: u32,
    pub q: u32,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams { p: DEFAULT_P_HOURS, q: DEFAULT_Q_DAYS }
    }
}

impl WindowParams {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 {
            return Err(Error::Config(format!("window sizes must be positive, got p={} q={}", self.p, self.q)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowForecast {
    pub dist: ForecastDistribution,
    /// Hours the window had to be extended backwards to find any wait.
    pub widened_hours: u32,
}

/// Waits sorted by a key time, with prefix sums for window means.
#[derive(Debug, Clone, Default)]
struct Series {
    keys: Vec<i64>,
    waits: Vec<f64>,
    prefix: Vec<f64>,
}

impl Series {
    fn new(mut pairs: Vec<(i64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut prefix = Vec::with_capacity(pairs.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for p in &pairs {
            acc += p.1;
            prefix.push(acc);
        }
        Series { keys: pairs.iter().map(|p| p.0).collect(), waits: pairs.iter().map(|p| p.1).collect(), prefix }
    }

    /// Index range of keys in `[lo, hi)`.
    fn range(&self, lo: i64, hi: i64) -> (usize, usize) {
        (self.keys.partition_point(|&k| k < lo), self.keys.partition_point(|&k| k < hi))
    }

    fn sum(&self, (a, b): (usize, usize)) -> f64 {
        self.prefix[b] - self.prefix[a]
    }
}

/// Low-acuity waiting-time history for one stage.
#[derive(Debug, Clone)]
pub struct WaitHistory {
    pub stage: Stage,
    by_completion: Series,
    by_start: Series,
}

impl WaitHistory {
    pub fn new(records: &[PatientRecord], stage: Stage) -> Self {
        let mut done = Vec::new();
        let mut started = Vec::new();
        for r in records.iter().filter(|r| r.is_low_acuity()) {
            if let (Some(t), Some(w)) = (stage.eval_time(r), stage.target(r)) {
                done.push((r.t_treat.0, w));
                started.push((t.0, w));
            }
        }
        WaitHistory { stage, by_completion: Series::new(done), by_start: Series::new(started) }
    }

    pub fn len(&self) -> usize {
        self.by_start.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index ranges making up the window at `t`, after widening.
    fn ranges(&self, method: WindowMethod, t: Minute, params: &WindowParams) -> Result<(Vec<(usize, usize)>, u32)> {
        let (series, p) = match method {
            WindowMethod::FourHour => (&self.by_completion, 4),
            WindowMethod::PHour => (&self.by_completion, params.p),
            WindowMethod::QPeriod => (&self.by_start, 0),
        };
        for extra in 0..=MAX_WIDEN_HOURS {
            let ranges: Vec<(usize, usize)> = if method == WindowMethod::QPeriod {
                let h = t.hour_floor().0;
                (1..=i64::from(params.q))
                    .map(|d| {
                        let start = h - d * MINUTES_PER_DAY;
                        series.range(start - i64::from(extra) * MINUTES_PER_HOUR, start + MINUTES_PER_HOUR)
                    })
                    .collect()
            } else {
                // Window (t - p hours, t] on integer minutes.
                let lo = t.0 - i64::from(p + extra) * MINUTES_PER_HOUR + 1;
                vec![series.range(lo, t.0 + 1)]
            };
            if ranges.iter().any(|(a, b)| b > a) {
                return Ok((ranges, extra));
            }
        }
        Err(Error::InvalidInput(format!("no {} waits recorded within {MAX_WIDEN_HOURS} hours before {t}", self.stage.as_str())))
    }

    fn series(&self, method: WindowMethod) -> &Series {
        match method {
            WindowMethod::QPeriod => &self.by_start,
            _ => &self.by_completion,
        }
    }

    pub fn forecast(&self, method: WindowMethod, t: Minute, params: &WindowParams) -> Result<WindowForecast> {
        let (ranges, widened_hours) = self.ranges(method, t, params)?;
        let s = self.series(method);
        let values: Vec<f64> = ranges.iter().flat_map(|&(a, b)| s.waits[a..b].iter().copied()).collect();
        Ok(WindowForecast { dist: ForecastDistribution::empirical(&values)?, widened_hours })
    }

    /// Mean of the window at `t`; the point forecast used for tuning.
    pub fn window_mean(&self, method: WindowMethod, t: Minute, params: &WindowParams) -> Result<f64> {
        let (ranges, _) = self.ranges(method, t, params)?;
        let s = self.series(method);
        let n: usize = ranges.iter().map(|(a, b)| b - a).sum();
        Ok(ranges.iter().map(|&r| s.sum(r)).sum::<f64>() / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowTuning {
    pub params: WindowParams,
    pub sse_p: f64,
    pub sse_q: f64,
    pub warnings: Vec<String>,
}

/// Grid search over p in 1..=48 and q in 1..=28 minimising the squared
/// error of the window mean on `holdout` (evaluation time, actual wait).
/// Ties go to the smaller window.
pub fn tune_windows(history: &WaitHistory, holdout: &[(Minute, f64)]) -> Result<WindowTuning> {
    if holdout.is_empty() {
        return Ok(WindowTuning {
            params: WindowParams::default(),
            sse_p: f64::NAN,
            sse_q: f64::NAN,
            warnings: vec![format!(
                "empty holdout, using p={DEFAULT_P_HOURS} and q={DEFAULT_Q_DAYS}"
            )],
        });
    }
    let sse = |method: WindowMethod, params: WindowParams| -> Result<f64> {
        holdout.iter().try_fold(0.0, |acc, &(t, y)| {
            let m = history.window_mean(method, t, &params)?;
            Ok(acc + (m - y) * (m - y))
        })
    };
    let mut best_p = (f64::INFINITY, 0);
    for p in 1..=MAX_P_HOURS {
        let s = sse(WindowMethod::PHour, WindowParams { p, q: 1 })?;
        if s < best_p.0 {
            best_p = (s, p);
        }
    }
    let mut best_q = (f64::INFINITY, 0);
    for q in 1..=MAX_Q_DAYS {
        let s = sse(WindowMethod::QPeriod, WindowParams { p: 1, q })?;
        if s < best_q.0 {
            best_q = (s, q);
        }
    }
    Ok(WindowTuning {
        params: WindowParams { p: best_p.1, q: best_q.1 },
        sse_p: best_p.0,
        sse_q: best_q.0,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::{ArrivalMode, Sex};

    /// A midnight.
    const BASE: i64 = 6944 * MINUTES_PER_DAY;

    fn rec(id: u64, start: i64, wait: i64) -> PatientRecord {
        let t_reg = Minute(BASE + start);
        PatientRecord {
            patient_id: id,
            t_reg,
            t_assess: None,
            t_treat: t_reg.plus_minutes(wait),
            t_depart: t_reg.plus_minutes(wait + 30),
            age: 40,
            sex: Sex::Female,
            arrival_mode: ArrivalMode::Other,
            triage: None,
            patient_group: None,
            hrg_code: None,
            staff_code: "S1".into(),
        }
    }

    fn at(m: i64) -> Minute {
        Minute(BASE + m)
    }

    #[test]
    fn four_hour_window_is_a_multiset() {
        // Completions at 100, 150, 200 minutes.
        let log = vec![rec(1, 70, 30), rec(2, 120, 30), rec(3, 110, 90)];
        let h = WaitHistory::new(&log, Stage::AtRegistration);
        let f = h.forecast(WindowMethod::FourHour, at(230), &WindowParams::default()).unwrap();
        assert_eq!(f.dist, ForecastDistribution::from_weighted([(30.0, 2.0), (90.0, 1.0)]).unwrap());
        assert_eq!(f.widened_hours, 0);
    }

    #[test]
    fn window_excludes_its_left_edge() {
        let log = vec![rec(1, 0, 60), rec(2, 0, 120)];
        let h = WaitHistory::new(&log, Stage::AtRegistration);
        // (60, 300]: completion at 60 is out, 120 is in.
        let f = h.forecast(WindowMethod::FourHour, at(300), &WindowParams::default()).unwrap();
        assert_eq!(f.dist, ForecastDistribution::point_mass(120.0));
    }

    #[test]
    fn q_period_uses_same_hour_on_previous_days() {
        let day = MINUTES_PER_DAY;
        let t = 3 * day + 10 * 60 + 20;
        let log = vec![
            rec(1, t - day - 15, 40),
            rec(2, t - 2 * day + 30, 60),
            rec(3, t - 3 * day, 999),
            rec(4, t - day - 25, 7),
        ];
        let h = WaitHistory::new(&log, Stage::AtRegistration);
        let params = WindowParams { p: 4, q: 2 };
        let f = h.forecast(WindowMethod::QPeriod, at(t), &params).unwrap();
        // Bucket is 10:00-10:59 on each day; record 4 started at 09:55.
        assert_eq!(f.dist, ForecastDistribution::empirical(&[40.0, 60.0]).unwrap());
    }

    #[test]
    fn p_hour_with_four_hours_matches_four_hour() {
        let log: Vec<PatientRecord> = (0..200).map(|i| rec(i, i as i64 * 13, (i as i64 * 37) % 180)).collect();
        let h = WaitHistory::new(&log, Stage::AtRegistration);
        let params = WindowParams { p: 4, q: 3 };
        for m in (300..2600).step_by(97) {
            let a = h.forecast(WindowMethod::FourHour, at(m), &params).unwrap();
            let b = h.forecast(WindowMethod::PHour, at(m), &params).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_window_widens_backwards() {
        let log = vec![rec(1, 0, 30)];
        let h = WaitHistory::new(&log, Stage::AtRegistration);
        let f = h.forecast(WindowMethod::FourHour, at(30 + 6 * 60 + 10), &WindowParams::default()).unwrap();
        assert_eq!(f.dist, ForecastDistribution::point_mass(30.0));
        assert_eq!(f.widened_hours, 3);
        assert!(h.forecast(WindowMethod::FourHour, at(0), &WindowParams::default()).is_err());
    }

    #[test]
    fn stationary_log_tunes_to_smallest_windows() {
        let log: Vec<PatientRecord> = (0..24 * 60).map(|i| rec(i, i as i64 * 20, 50)).collect();
        let h = WaitHistory::new(&log, Stage::AtRegistration);
        let holdout: Vec<(Minute, f64)> = (0..50).map(|i| (at(20 * 24 * 60 + i * 37), 50.0)).collect();
        let tuned = tune_windows(&h, &holdout).unwrap();
        assert_eq!(tuned.params, WindowParams { p: 1, q: 1 });
        assert_eq!(tuned.sse_p, 0.0);
    }

    #[test]
    fn diurnal_log_prefers_longer_q() {
        use rand::Rng;
        let mut rng = crate::seed::rng(5);
        let log: Vec<PatientRecord> = (0..30 * 24 * 4)
            .map(|i| {
                let start = i as i64 * 15;
                let hour = (start / 60) % 24;
                let base = if (8..20).contains(&hour) { 120.0 } else { 30.0 };
                let wait = (base * (0.2 + 1.6 * rng.random::<f64>())) as i64;
                rec(i, start, wait)
            })
            .collect();
        let h = WaitHistory::new(&log, Stage::AtRegistration);
        let holdout: Vec<(Minute, f64)> = log[log.len() - 700..].iter().map(|r| (r.t_reg, r.waits().t1 as f64)).collect();
        let tuned = tune_windows(&h, &holdout).unwrap();
        let q1 = holdout.iter().map(|&(t, y)| {
            let m = h.window_mean(WindowMethod::QPeriod, t, &WindowParams { p: 1, q: 1 }).unwrap();
            (m - y).powi(2)
        });
        assert!(tuned.sse_q < q1.sum::<f64>());
        assert!(tuned.params.p <= MAX_P_HOURS && tuned.params.q <= MAX_Q_DAYS);
    }

    #[test]
    fn empty_holdout_falls_back_to_defaults() {
        let h = WaitHistory::new(&[], Stage::AtRegistration);
        let tuned = tune_windows(&h, &[]).unwrap();
        assert_eq!(tuned.params, WindowParams { p: 4, q: 7 });
        assert_eq!(tuned.warnings.len(), 1);
    }
}
