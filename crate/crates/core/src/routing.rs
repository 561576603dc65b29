//! Choosing an emergency department from travel time plus forecast wait.
//!
//! Travel times are shifted exponentials fitted to a minimum and a maximum
//! drive time (the maximum is read as the 99% quantile). For each hospital a
//! combined travel-plus-wait distribution is built by sampling travel times,
//! moving the registration time accordingly and drawing one wait from that
//! hospital's forest. A day of patients is then routed one at a time, each
//! choice being added to the chosen hospital's log so later patients see the
//! extra load.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::calendar::Minute;
use crate::distribution::ForecastDistribution;
use crate::error::{Error, Result};
use crate::eventlog::{ArrivalMode, PatientRecord, Sex};
use crate::features::{featurize, FeatureSchema, LogIndex};
use crate::qrf::ForestModel;
use crate::seed;

/// Quantile level the maximum drive time is taken to be.
pub const MAX_DRIVE_LEVEL: f64 = 0.99;
pub const DEFAULT_SAMPLES: usize = 500;
/// Largest share of failed feature extractions tolerated per distribution.
const MAX_FAILURE_SHARE: f64 = 0.01;
pub const LOW_BAND_MAX: i64 = 45;
pub const MEDIUM_BAND_MAX: i64 = 120;
/// Staff code written on routed arrivals; it never counts as a staff member.
pub const ROUTED_STAFF_CODE: &str = "routed";

pub const TRAVEL_HEADER: [&str; 5] = ["home_code", "hospital_id", "distance_miles", "min_drive_min", "max_drive_min"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelEstimate {
    pub home_code: String,
    pub hospital_id: u32,
    pub distance_miles: f64,
    pub min_drive_min: f64,
    pub max_drive_min: f64,
}

/// Travel table keyed by home code and hospital id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TravelTable {
    rows: BTreeMap<(String, u32), TravelEstimate>,
}

impl TravelTable {
    pub fn new(rows: Vec<TravelEstimate>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in rows {
            if !(r.min_drive_min > 0.0 && r.min_drive_min <= r.max_drive_min && r.max_drive_min.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "travel row {}/{} needs 0 < min_drive <= max_drive",
                    r.home_code, r.hospital_id
                )));
            }
            if !(r.distance_miles >= 0.0 && r.distance_miles.is_finite()) {
                return Err(Error::InvalidInput(format!("travel row {}/{} has a bad distance", r.home_code, r.hospital_id)));
            }
            let key = (r.home_code.clone(), r.hospital_id);
            if map.insert(key, r).is_some() {
                return Err(Error::InvalidInput("duplicate travel row".into()));
            }
        }
        Ok(TravelTable { rows: map })
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        for col in TRAVEL_HEADER {
            if !header.iter().any(|h| h == col) {
                return Err(Error::MissingColumn(col.into()));
            }
        }
        let rows = rd.deserialize().collect::<std::result::Result<Vec<TravelEstimate>, _>>()?;
        Self::new(rows)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in self.rows.values() {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn get(&self, home_code: &str, hospital_id: u32) -> Option<&TravelEstimate> {
        self.rows.get(&(home_code.to_string(), hospital_id))
    }

    /// Distinct home codes in ascending order.
    pub fn home_codes(&self) -> Vec<String> {
        let mut v: Vec<String> = self.rows.keys().map(|k| k.0.clone()).collect();
        v.dedup();
        v
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Shifted exponential travel time in minutes. `rate` is `None` for the
/// degenerate case of equal minimum and maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TravelModel {
    pub shift: f64,
    pub rate: Option<f64>,
}

pub fn fit_travel(min_drive: f64, max_drive: f64) -> Result<TravelModel> {
    if !(min_drive.is_finite() && max_drive.is_finite()) || min_drive > max_drive {
        return Err(Error::InvalidInput(format!("travel bounds {min_drive} > {max_drive}")));
    }
    let rate = (max_drive > min_drive).then(|| -(1.0 - MAX_DRIVE_LEVEL).ln() / (max_drive - min_drive));
    Ok(TravelModel { shift: min_drive, rate })
}

impl TravelModel {
    pub fn from_estimate(e: &TravelEstimate) -> Result<Self> {
        fit_travel(e.min_drive_min, e.max_drive_min)
    }

    /// `shift - ln(1 - u) / rate`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self.rate {
            Some(rate) => self.shift - (1.0 - u).ln() / rate,
            None => self.shift,
        }
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.rate.map_or(0.0, |r| 1.0 / r)
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        // u in [0, 1) keeps 1 - u away from zero.
        self.quantile(rng.random::<f64>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionCriterion {
    ShortestDistance,
    MinMeanTravel,
    MinMeanCombined,
    MinQ75Combined,
    MinQ95Combined,
    Fosd,
}

impl DecisionCriterion {
    /// The five criteria reported side by side.
    pub const REPORTED: [DecisionCriterion; 5] = [
        DecisionCriterion::ShortestDistance,
        DecisionCriterion::MinMeanTravel,
        DecisionCriterion::MinMeanCombined,
        DecisionCriterion::MinQ75Combined,
        DecisionCriterion::MinQ95Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DecisionCriterion::ShortestDistance => "shortest_distance",
            DecisionCriterion::MinMeanTravel => "min_mean_travel",
            DecisionCriterion::MinMeanCombined => "min_mean_combined",
            DecisionCriterion::MinQ75Combined => "min_q75_combined",
            DecisionCriterion::MinQ95Combined => "min_q95_combined",
            DecisionCriterion::Fosd => "fosd",
        }
    }

    pub fn uses_combined(self) -> bool {
        matches!(
            self,
            DecisionCriterion::MinMeanCombined
                | DecisionCriterion::MinQ75Combined
                | DecisionCriterion::MinQ95Combined
                | DecisionCriterion::Fosd
        )
    }
}

impl FromStr for DecisionCriterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            DecisionCriterion::ShortestDistance,
            DecisionCriterion::MinMeanTravel,
            DecisionCriterion::MinMeanCombined,
            DecisionCriterion::MinQ75Combined,
            DecisionCriterion::MinQ95Combined,
            DecisionCriterion::Fosd,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| Error::Parse(format!("unknown decision criterion {s:?}")))
    }
}

/// What a patient knows about one hospital when choosing.
#[derive(Debug, Clone)]
pub struct HospitalOption {
    pub distance_miles: f64,
    pub travel: TravelModel,
    /// Travel-plus-wait distribution; needed by the combined criteria only.
    pub combined: Option<ForecastDistribution>,
}

fn breakpoints(d: &ForecastDistribution) -> &[f64] {
    match d {
        ForecastDistribution::Discrete { support, .. } => support,
        ForecastDistribution::PiecewiseLinear { values, .. } => values,
    }
}

/// True when the CDF of `a` is at least that of `b` everywhere. Both CDFs
/// are step or piecewise linear between their breakpoints, so checking the
/// breakpoints of both suffices.
pub fn dominates(a: &ForecastDistribution, b: &ForecastDistribution) -> bool {
    const SLACK: f64 = 1e-12;
    breakpoints(a).iter().chain(breakpoints(b)).all(|&y| a.cdf(y) + SLACK >= b.cdf(y))
}

fn argmin(stats: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in stats.iter().enumerate() {
        if v < stats[best] {
            best = i;
        }
    }
    best
}

/// Index of the chosen hospital; ties go to the lower index. Under `Fosd`
/// the first hospital dominating all others is taken, falling back to the
/// lowest combined mean when none does.
pub fn choose(criterion: DecisionCriterion, options: &[HospitalOption]) -> Result<usize> {
    if options.is_empty() {
        return Err(Error::InvalidInput("no hospital to choose from".into()));
    }
    let combined = |i: usize| -> Result<&ForecastDistribution> {
        options[i].combined.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!("{} needs combined distributions", criterion.as_str()))
        })
    };
    let quantile_stat = |tau: f64| -> Result<Vec<f64>> {
        (0..options.len()).map(|i| combined(i)?.quantile(tau)).collect()
    };
    let stats: Vec<f64> = match criterion {
        DecisionCriterion::ShortestDistance => options.iter().map(|o| o.distance_miles).collect(),
        DecisionCriterion::MinMeanTravel => options.iter().map(|o| o.travel.mean()).collect(),
        DecisionCriterion::MinMeanCombined => (0..options.len()).map(|i| Ok(combined(i)?.mean())).collect::<Result<_>>()?,
        DecisionCriterion::MinQ75Combined => quantile_stat(0.75)?,
        DecisionCriterion::MinQ95Combined => quantile_stat(0.95)?,
        DecisionCriterion::Fosd => {
            let dists: Vec<&ForecastDistribution> = (0..options.len()).map(combined).collect::<Result<_>>()?;
            for (i, a) in dists.iter().enumerate() {
                if dists.iter().enumerate().all(|(j, b)| i == j || dominates(a, b)) {
                    return Ok(i);
                }
            }
            dists.iter().map(|d| d.mean()).collect()
        }
    };
    Ok(argmin(&stats))
}

/// One hospital in a routing run: its t1 forest, the schema the forest was
/// trained on, and the log whose state feeds the features.
#[derive(Debug, Clone)]
pub struct Hospital {
    pub id: u32,
    pub name: String,
    pub model: ForestModel,
    pub schema: FeatureSchema,
    pub index: LogIndex,
    /// Minutes from start of treatment to departure for routed arrivals.
    pub service_minutes: i64,
}

/// A patient about to leave home.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutedPatient {
    pub patient_id: u64,
    pub home_code: String,
    pub home_time: Minute,
    pub age: u32,
    pub sex: Sex,
}

impl RoutedPatient {
    /// Record of the patient registering at `t_reg` and waiting `wait`
    /// minutes. Routed patients arrive by car and skip triage.
    pub fn record(&self, t_reg: Minute, wait: i64, service: i64) -> PatientRecord {
        let t_treat = t_reg.plus_minutes(wait.max(0));
        PatientRecord {
            patient_id: self.patient_id,
            t_reg,
            t_assess: None,
            t_treat,
            t_depart: t_treat.plus_minutes(service.max(0)),
            age: self.age,
            sex: self.sex,
            arrival_mode: ArrivalMode::Other,
            triage: None,
            patient_group: None,
            hrg_code: None,
            staff_code: ROUTED_STAFF_CODE.into(),
        }
    }
}

/// Empirical distribution of `s` travel-plus-wait sums. Each travel draw
/// fixes a registration time; the wait is one draw from the forest at the
/// features observed then.
pub fn combined_distribution(
    travel: &TravelModel,
    hospital: &Hospital,
    patient: &RoutedPatient,
    s: usize,
    seed_value: u64,
) -> Result<ForecastDistribution> {
    if s == 0 {
        return Err(Error::InvalidInput("combined distribution needs at least one sample".into()));
    }
    let mut rng = seed::rng(seed_value);
    let travels: Vec<f64> = (0..s).map(|_| travel.sample(&mut rng)).collect();
    let mut features: BTreeMap<i64, Option<Vec<f64>>> = BTreeMap::new();
    let mut sums = Vec::with_capacity(s);
    let mut failed = 0usize;
    let mut last_error = None;
    for &tt in &travels {
        let t_reg = patient.home_time.plus_minutes(tt.round() as i64);
        let x = features.entry(t_reg.0).or_insert_with(|| {
            match featurize(&patient.record(t_reg, 0, 0), &hospital.index, &hospital.schema) {
                Ok(v) => Some(v.values),
                Err(e) => {
                    last_error = Some(e.to_string());
                    None
                }
            }
        });
        match x {
            Some(x) => sums.push(tt + hospital.model.sample(x, &mut rng)?),
            None => failed += 1,
        }
    }
    if failed as f64 > MAX_FAILURE_SHARE * s as f64 {
        return Err(Error::InvalidInput(format!(
            "feature extraction failed for {failed} of {s} samples at hospital {}: {}",
            hospital.id,
            last_error.unwrap_or_default()
        )));
    }
    ForecastDistribution::empirical(&sums)
}

/// Attendance and realised waits at one hospital.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadRow {
    pub hospital_id: u32,
    pub hospital: String,
    pub n: usize,
    pub low: usize,
    pub medium: usize,
    pub high: usize,
    pub mean_t1: Option<f64>,
    pub sd_t1: Option<f64>,
}

impl LoadRow {
    fn from_waits(hospital_id: u32, name: &str, waits: &[i64]) -> Self {
        let n = waits.len();
        let low = waits.iter().filter(|&&w| w <= LOW_BAND_MAX).count();
        let high = waits.iter().filter(|&&w| w > MEDIUM_BAND_MAX).count();
        let mean = (n > 0).then(|| waits.iter().sum::<i64>() as f64 / n as f64);
        let sd = mean.filter(|_| n > 1).map(|m| {
            (waits.iter().map(|&w| (w as f64 - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        LoadRow {
            hospital_id,
            hospital: name.to_string(),
            n,
            low,
            medium: n - low - high,
            high,
            mean_t1: mean,
            sd_t1: sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub patient_id: u64,
    pub hospital_id: u32,
    pub t_reg: Minute,
    pub wait: i64,
}

/// Outcome of routing one day under one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub criterion: DecisionCriterion,
    pub rows: Vec<LoadRow>,
    pub assignments: Vec<Assignment>,
    pub skipped: usize,
    pub diagnostics: Vec<String>,
}

impl LoadReport {
    pub fn attendance(&self) -> usize {
        self.rows.iter().map(|r| r.n).sum()
    }

    pub fn row(&self, hospital_id: u32) -> Option<&LoadRow> {
        self.rows.iter().find(|r| r.hospital_id == hospital_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayParams {
    pub samples: usize,
    pub seed: u64,
}

impl Default for DayParams {
    fn default() -> Self {
        DayParams { samples: DEFAULT_SAMPLES, seed: 1 }
    }
}

/// Routes `patients` in home-time order. After each choice the patient's
/// realised episode joins the chosen hospital's log. The realised wait is
/// the forest's mean forecast at the realised registration time. The
/// hospitals' logs are modified in place.
pub fn simulate_day(
    patients: &[RoutedPatient],
    hospitals: &mut [Hospital],
    travel: &TravelTable,
    criterion: DecisionCriterion,
    params: DayParams,
) -> Result<LoadReport> {
    if hospitals.is_empty() {
        return Err(Error::InvalidInput("routing needs at least one hospital".into()));
    }
    let mut order: Vec<&RoutedPatient> = patients.iter().collect();
    order.sort_by_key(|p| (p.home_time, p.patient_id));
    let mut waits: Vec<Vec<i64>> = vec![Vec::new(); hospitals.len()];
    let mut assignments = Vec::new();
    let mut diagnostics = Vec::new();
    let mut skipped = 0;
    for p in order {
        let rows: Option<Vec<&TravelEstimate>> = hospitals.iter().map(|h| travel.get(&p.home_code, h.id)).collect();
        let Some(rows) = rows else {
            skipped += 1;
            diagnostics.push(format!("patient {}: no travel row for home {}", p.patient_id, p.home_code));
            continue;
        };
        let patient_seed = seed::derive(params.seed, p.patient_id);
        let mut options = Vec::with_capacity(hospitals.len());
        for (k, (h, row)) in hospitals.iter().zip(&rows).enumerate() {
            let travel = TravelModel::from_estimate(row)?;
            let combined = if criterion.uses_combined() {
                Some(combined_distribution(&travel, h, p, params.samples, seed::derive(patient_seed, k as u64))?)
            } else {
                None
            };
            options.push(HospitalOption { distance_miles: row.distance_miles, travel, combined });
        }
        let k = choose(criterion, &options)?;
        // The realised drive does not depend on the criterion.
        let mut rng = seed::rng(seed::derive_label(patient_seed, "drive"));
        let u: f64 = rng.random();
        let t_reg = p.home_time.plus_minutes(options[k].travel.quantile(u).round() as i64);
        let h = &mut hospitals[k];
        let x = featurize(&p.record(t_reg, 0, 0), &h.index, &h.schema)?;
        let wait = h.model.predict_mean(&x.values)?.round() as i64;
        h.index.insert(&p.record(t_reg, wait, h.service_minutes), false);
        waits[k].push(wait);
        assignments.push(Assignment { patient_id: p.patient_id, hospital_id: h.id, t_reg, wait });
    }
    let rows = hospitals.iter().zip(&waits).map(|(h, w)| LoadRow::from_waits(h.id, &h.name, w)).collect();
    Ok(LoadReport { criterion, rows, assignments, skipped, diagnostics })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.2}"))
}

/// One row per criterion and hospital with band counts and realised wait
/// summaries.
pub fn write_load_reports<W: Write>(mut w: W, comments: &[String], reports: &[LoadReport]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "criterion",
        "hospital_id",
        "hospital",
        "n",
        "low_le45",
        "medium_46_120",
        "high_gt120",
        "mean_t1",
        "sd_t1",
        "skipped",
    ])?;
    for rep in reports {
        for r in &rep.rows {
            wr.write_record([
                rep.criterion.as_str().to_string(),
                r.hospital_id.to_string(),
                r.hospital.clone(),
                r.n.to_string(),
                r.low.to_string(),
                r.medium.to_string(),
                r.high.to_string(),
                fmt_opt(r.mean_t1),
                fmt_opt(r.sd_t1),
                rep.skipped.to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn option(distance: f64, travel: (f64, f64), combined: Option<ForecastDistribution>) -> HospitalOption {
        HospitalOption { distance_miles: distance, travel: fit_travel(travel.0, travel.1).unwrap(), combined }
    }

    #[test]
    fn travel_rate_puts_the_maximum_at_the_99th_percentile() {
        let m = fit_travel(10.0, 40.0).unwrap();
        assert!((m.rate.unwrap() - 0.153_506).abs() < 1e-5);
        assert!((m.quantile(0.99) - 40.0).abs() < 1e-9);
        assert!((m.median() - (10.0 + 2f64.ln() / m.rate.unwrap())).abs() < 1e-12);
        assert_eq!(m.quantile(0.0), 10.0);
    }

    #[test]
    fn equal_bounds_give_a_point_mass_and_reversed_bounds_fail() {
        let m = fit_travel(15.0, 15.0).unwrap();
        assert_eq!(m.rate, None);
        assert_eq!(m.quantile(0.7), 15.0);
        assert_eq!(m.mean(), 15.0);
        assert!(fit_travel(20.0, 10.0).is_err());
    }

    #[test]
    fn sampled_travel_matches_the_exponential_mean() {
        let m = fit_travel(10.0, 40.0).unwrap();
        let mut rng = seed::rng(3);
        let n = 200_000;
        let mean = (0..n).map(|_| m.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - m.mean()).abs() < 0.1, "{mean} vs {}", m.mean());
        assert!((0..1000).all(|_| m.sample(&mut rng) >= 10.0));
    }

    #[test]
    fn shortest_distance_picks_the_nearer_hospital() {
        let opts = [option(14.0, (20.0, 50.0), None), option(16.0, (15.0, 30.0), None)];
        assert_eq!(choose(DecisionCriterion::ShortestDistance, &opts).unwrap(), 0);
        assert_eq!(choose(DecisionCriterion::MinMeanTravel, &opts).unwrap(), 1);
    }

    #[test]
    fn ties_go_to_the_lower_index() {
        let d = ForecastDistribution::empirical(&[30.0, 60.0]).unwrap();
        let opts = [option(10.0, (10.0, 20.0), Some(d.clone())), option(10.0, (10.0, 20.0), Some(d))];
        for c in DecisionCriterion::REPORTED.into_iter().chain([DecisionCriterion::Fosd]) {
            assert_eq!(choose(c, &opts).unwrap(), 0, "{}", c.as_str());
        }
    }

    #[test]
    fn dominating_cdf_is_chosen_under_fosd() {
        let a = ForecastDistribution::empirical(&[20.0, 40.0, 60.0]).unwrap();
        let b = ForecastDistribution::empirical(&[25.0, 40.0, 90.0]).unwrap();
        assert!(dominates(&a, &b));
        assert!(!dominates(&b, &a));
        let opts = [option(1.0, (1.0, 2.0), Some(b)), option(1.0, (1.0, 2.0), Some(a))];
        assert_eq!(choose(DecisionCriterion::Fosd, &opts).unwrap(), 1);
    }

    #[test]
    fn crossing_cdfs_fall_back_and_the_upper_quartile_separates_them() {
        // Equal means of 50; A has the smaller upper quartile, B the
        // smaller lower tail.
        let a = ForecastDistribution::from_weighted([(40.0, 0.5), (60.0, 0.5)]).unwrap();
        let b = ForecastDistribution::from_weighted([(10.0, 0.5), (90.0, 0.5)]).unwrap();
        assert!(!dominates(&a, &b) && !dominates(&b, &a));
        let opts = [option(1.0, (1.0, 2.0), Some(b.clone())), option(1.0, (1.0, 2.0), Some(a.clone()))];
        // Fallback is the lowest mean; the means tie so the lower index wins.
        assert_eq!(choose(DecisionCriterion::Fosd, &opts).unwrap(), 0);
        assert_eq!(choose(DecisionCriterion::MinMeanCombined, &opts).unwrap(), 0);
        assert_eq!(choose(DecisionCriterion::MinQ75Combined, &opts).unwrap(), 1);
    }

    #[test]
    fn combined_criteria_require_distributions() {
        let opts = [option(1.0, (1.0, 2.0), None), option(2.0, (1.0, 2.0), None)];
        assert!(choose(DecisionCriterion::MinQ95Combined, &opts).is_err());
        assert!(choose(DecisionCriterion::ShortestDistance, &[]).is_err());
    }

    #[test]
    fn criterion_names_round_trip() {
        for c in DecisionCriterion::REPORTED.into_iter().chain([DecisionCriterion::Fosd]) {
            assert_eq!(c.as_str().parse::<DecisionCriterion>().unwrap(), c);
        }
        assert!("nearest".parse::<DecisionCriterion>().is_err());
    }

    #[test]
    fn bands_partition_the_waits() {
        let row = LoadRow::from_waits(1, "H1", &[0, 45, 46, 120, 121, 300]);
        assert_eq!((row.n, row.low, row.medium, row.high), (6, 2, 2, 2));
        assert!((row.mean_t1.unwrap() - 632.0 / 6.0).abs() < 1e-12);
        let empty = LoadRow::from_waits(2, "H2", &[]);
        assert_eq!((empty.n, empty.mean_t1, empty.sd_t1), (0, None, None));
        assert_eq!(LoadRow::from_waits(2, "H2", &[7]).sd_t1, None);
    }

    #[test]
    fn travel_table_round_trips_and_rejects_bad_rows() {
        let text = "home_code,hospital_id,distance_miles,min_drive_min,max_drive_min\n\
                    A,1,3.5,8,20\nA,2,9.0,15,40\nB,1,12,20,45\n";
        let t = TravelTable::read_csv(text.as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.home_codes(), vec!["A".to_string(), "B".to_string()]);
        assert_eq!(t.get("A", 2).unwrap().min_drive_min, 15.0);
        assert!(t.get("B", 2).is_none());
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert_eq!(TravelTable::read_csv(out.as_slice()).unwrap(), t);
        assert!(TravelTable::read_csv("home_code,hospital_id,distance_miles,min_drive_min,max_drive_min\nA,1,1,30,20\n".as_bytes()).is_err());
        assert!(TravelTable::read_csv("home_code,hospital_id\nA,1\n".as_bytes()).is_err());
    }
}
