//! Discrete-event simulator of an emergency department.
//!
//! Arrivals follow a piecewise-constant Poisson process by hour of week.
//! Patients register, optionally wait for an initial assessment (a separate
//! nurse pool) and then queue for treatment by the on-duty staff. Urgent and
//! resuscitation patients always go first; among low-acuity patients the
//! queue is ordered by registration time minus a priority credit for
//! children and for major injuries.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::calendar::{parse_date, HolidayCalendar, HolidayCode, Minute, HOURS_PER_WEEK, MINUTES_PER_HOUR};
use crate::error::{Error, Result};
use crate::eventlog::{ArrivalMode, PatientRecord, RawRecord, Sex, Triage, MAX_WAIT_MINUTES};
use crate::seed;

pub const PATIENT_GROUPS: [u8; 8] = [10, 20, 30, 40, 50, 60, 70, 80];
pub const HRG_CODES: [&str; 12] = [
    "VB01Z", "VB02Z", "VB03Z", "VB04Z", "VB05Z", "VB06Z", "VB07Z", "VB08Z", "VB09Z", "VB10Z", "VB11Z", "VB99Z",
];

/// Median and log-scale sigma of a lognormal duration in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalMinutes {
    pub median: f64,
    pub sigma: f64,
}

impl LogNormalMinutes {
    fn dist(self) -> Result<LogNormal<f64>> {
        if !(self.median > 0.0) || !(self.sigma >= 0.0) {
            return Err(Error::Config(format!("invalid lognormal {self:?}")));
        }
        LogNormal::new(self.median.ln(), self.sigma).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub start_date: String,
    pub horizon_days: u32,
    /// 168 hourly base arrival rates (patients/hour), Monday 00:00 first.
    pub arrival_rate_profile: Vec<f64>,
    /// Recurring holidays as `MM-DD`.
    pub holidays: Vec<String>,
    pub around_christmas: Vec<String>,
    pub holiday_multiplier: f64,
    pub around_christmas_multiplier: f64,
    /// 168 hourly counts of treating staff.
    pub staff_roster: Vec<u32>,
    pub treatment_capacity_per_staff: u32,
    /// Size of the assessment nurse pool as a fraction of treating staff
    /// (at least one nurse is always on duty).
    pub assess_staff_fraction: f64,
    pub assess_duration: LogNormalMinutes,
    /// Diagnostic work-up (tests, imaging) that must finish before a patient
    /// is eligible for treatment; starts at assessment end, or at
    /// registration for patients who skip assessment.
    pub workup_duration: LogNormalMinutes,
    /// Treatment durations for minor, major, urgent and resus patients.
    pub treat_duration: [LogNormalMinutes; 4],
    /// Probabilities of minor, major, urgent and resus.
    pub triage_mix: [f64; 4],
    /// Probability that a low-acuity patient goes straight to treatment.
    pub p_skip_assess: f64,
    pub child_share: f64,
    pub senior_share: f64,
    pub p_female: f64,
    pub p_ambulance_low_acuity: f64,
    pub p_ambulance_high_acuity: f64,
    /// Queue credit in minutes for patients aged 16 or under.
    pub minor_age_priority_boost: f64,
    /// Work-up scale for patients aged 16 or under, who are seen on the
    /// children's ward.
    pub child_workup_factor: f64,
    /// Queue credit in minutes for major injuries over minor ones.
    pub major_priority_credit: f64,
    pub staff_prefix: String,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            start_date: "2014-01-01".into(),
            horizon_days: 1826,
            arrival_rate_profile: default_arrival_profile(),
            holidays: vec!["01-01".into(), "12-25".into(), "12-26".into()],
            around_christmas: ["12-20", "12-21", "12-22", "12-23", "12-24", "12-27", "12-28", "12-29", "12-30", "12-31"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            holiday_multiplier: 1.3,
            around_christmas_multiplier: 1.15,
            staff_roster: default_staff_roster(),
            treatment_capacity_per_staff: 1,
            assess_staff_fraction: 0.1,
            assess_duration: LogNormalMinutes { median: 18.0, sigma: 0.5 },
            workup_duration: LogNormalMinutes { median: 40.0, sigma: 0.6 },
            treat_duration: [
                LogNormalMinutes { median: 100.0, sigma: 0.6 },
                LogNormalMinutes { median: 140.0, sigma: 0.6 },
                LogNormalMinutes { median: 180.0, sigma: 0.5 },
                LogNormalMinutes { median: 220.0, sigma: 0.5 },
            ],
            triage_mix: [0.436, 0.514, 0.04, 0.01],
            p_skip_assess: 0.16,
            child_share: 0.24,
            senior_share: 0.257,
            p_female: 0.522,
            p_ambulance_low_acuity: 0.33,
            p_ambulance_high_acuity: 0.8,
            minor_age_priority_boost: 180.0,
            child_workup_factor: 0.3,
            major_priority_credit: 20.0,
            staff_prefix: "S".into(),
            seed: 1,
        }
    }
}

/// Low overnight, peaks around mid-morning and early evening, busier on
/// Mondays and weekends.
pub fn default_arrival_profile() -> Vec<f64> {
    const DAY: [f64; 24] = [
        0.55, 0.45, 0.35, 0.3, 0.28, 0.3, 0.45, 0.8, 1.3, 1.65, 1.8, 1.75, 1.6, 1.5, 1.45, 1.45, 1.5, 1.6, 1.7, 1.6,
        1.35, 1.1, 0.85, 0.7,
    ];
    const WEEKDAY_FACTOR: [f64; 7] = [1.12, 1.0, 0.97, 0.95, 0.97, 1.02, 1.08];
    let mut v = Vec::with_capacity(HOURS_PER_WEEK);
    for f in WEEKDAY_FACTOR {
        v.extend(DAY.iter().map(|r| r * f));
    }
    v
}

pub fn default_staff_roster() -> Vec<u32> {
    const DAY: [u32; 24] = [3, 2, 2, 1, 1, 1, 1, 2, 3, 5, 6, 7, 7, 6, 6, 6, 6, 6, 6, 7, 6, 5, 4, 3];
    (0..7).flat_map(|_| DAY).collect()
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        parse_date(&self.start_date)?;
        if self.horizon_days < 1 {
            return bad("horizon_days must be at least 1".into());
        }
        if self.arrival_rate_profile.len() != HOURS_PER_WEEK || self.staff_roster.len() != HOURS_PER_WEEK {
            return bad("arrival_rate_profile and staff_roster need 168 hourly entries".into());
        }
        if self.arrival_rate_profile.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("arrival rates must be finite and non-negative".into());
        }
        if !(self.holiday_multiplier >= 0.0 && self.around_christmas_multiplier >= 0.0) {
            return bad("holiday multipliers must be non-negative".into());
        }
        let probs = [
            self.p_skip_assess,
            self.child_share,
            self.senior_share,
            self.p_female,
            self.p_ambulance_low_acuity,
            self.p_ambulance_high_acuity,
        ];
        if probs.iter().chain(self.triage_mix.iter()).any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        if self.child_share + self.senior_share > 1.0 {
            return bad("child_share + senior_share exceeds 1".into());
        }
        if (self.triage_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("triage_mix must sum to 1".into());
        }
        if self.treatment_capacity_per_staff == 0 {
            return bad("treatment_capacity_per_staff must be positive".into());
        }
        if !(self.assess_staff_fraction >= 0.0) || self.minor_age_priority_boost < 0.0
            || !(self.child_workup_factor >= 0.0)
            || self.major_priority_credit < 0.0 {
            return bad("fractions and priority credits must be non-negative".into());
        }
        self.assess_duration.dist()?;
        self.workup_duration.dist()?;
        for d in self.treat_duration {
            d.dist()?;
        }
        Ok(())
    }

    pub fn holiday_calendar(&self) -> Result<HolidayCalendar> {
        HolidayCalendar::from_month_days(&self.holidays, &self.around_christmas)
    }

    pub fn start(&self) -> Result<Minute> {
        Ok(Minute::from_date(parse_date(&self.start_date)?))
    }

    pub fn end(&self) -> Result<Minute> {
        Ok(self.start()?.plus_minutes(i64::from(self.horizon_days) * 24 * 60))
    }
}

/// Arrival rate multiplier applied on holiday-calendar dates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolidayMultipliers {
    pub holiday: f64,
    pub around_christmas: f64,
}

/// Base rate for the hour of week times the holiday multiplier for the date.
pub fn diurnal_rate(profile: &[f64], calendar: &HolidayCalendar, mult: HolidayMultipliers, t: Minute) -> f64 {
    let base = profile[t.hour_of_week0()];
    match calendar.code(t.date()) {
        HolidayCode::Normal => base,
        HolidayCode::Holiday => base * mult.holiday,
        HolidayCode::AroundChristmas => base * mult.around_christmas,
    }
}

#[derive(Debug, Clone)]
struct SimPatient {
    arrival: i64,
    age: u32,
    sex: Sex,
    mode: ArrivalMode,
    triage: Triage,
    skip_assess: bool,
    group: u8,
    hrg: usize,
    assess_minutes: f64,
    workup_minutes: f64,
    treat_minutes: f64,
    t_assess: Option<i64>,
    t_treat: Option<i64>,
    t_depart: Option<i64>,
    staff: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    AssessDone(usize),
    Ready(usize),
    TreatDone { patient: usize, slot: usize },
}

/// Mutable simulation state; times are in seconds from the start.
struct SimState {
    /// Completion events keyed by (time, insertion sequence).
    events: BinaryHeap<Reverse<(i64, u64, EventKind)>>,
    seq: u64,
    /// Registered, waiting for assessment: (acuity class, key, id).
    assess_queue: BinaryHeap<Reverse<(u8, i64, usize)>>,
    assess_busy: usize,
    /// Waiting for treatment: (acuity class, priority key, id).
    treat_queue: BinaryHeap<Reverse<(u8, i64, usize)>>,
    slots: Vec<Option<usize>>,
}

impl SimState {
    fn push(&mut self, t: i64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Reverse((t, self.seq, kind)));
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimOutput {
    pub records: Vec<PatientRecord>,
    /// Episodes dropped because a wait or the stay reached 14 hours.
    pub censored: usize,
}

pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let calendar = config.holiday_calendar()?;
    let start = config.start()?;
    let mult = HolidayMultipliers {
        holiday: config.holiday_multiplier,
        around_christmas: config.around_christmas_multiplier,
    };
    let mut patients = generate_arrivals(config, &calendar, mult, start)?;
    if patients.is_empty() {
        return Ok(SimOutput::default());
    }
    if config.staff_roster.iter().all(|&s| s == 0) {
        return Err(Error::Config("staff roster is zero for every hour; queue would grow without bound".into()));
    }

    let cap = config.treatment_capacity_per_staff as usize;
    let max_staff = *config.staff_roster.iter().max().expect("168 entries") as usize;
    let mut state = SimState {
        events: BinaryHeap::new(),
        seq: 0,
        assess_queue: BinaryHeap::new(),
        assess_busy: 0,
        treat_queue: BinaryHeap::new(),
        slots: vec![None; max_staff * cap],
    };
    let how0 = start.hour_of_week0() as i64;
    let staff_at = |t: i64| -> usize {
        let h = (how0 + t.div_euclid(3600)).rem_euclid(HOURS_PER_WEEK as i64) as usize;
        config.staff_roster[h] as usize
    };
    let assessors_at = |t: i64| -> usize {
        ((config.assess_staff_fraction * staff_at(t) as f64).round() as usize).max(1)
    };
    let boost = (config.minor_age_priority_boost * 60.0) as i64;
    let credit = (config.major_priority_credit * 60.0) as i64;
    let treat_key = |p: &SimPatient| -> (u8, i64) {
        if !p.triage.is_low_acuity() {
            return (0, p.arrival);
        }
        let mut key = p.arrival;
        if p.age <= 16 {
            key -= boost;
        }
        if p.triage == Triage::Major {
            key -= credit;
        }
        (1, key)
    };

    let mut next_arrival = 0usize;
    let mut next_tick = 3600i64;
    let mut remaining = patients.len();
    while remaining > 0 {
        let t_event = state.events.peek().map(|Reverse((t, _, _))| *t);
        let t_arr = patients.get(next_arrival).map(|p| p.arrival);
        let t = [t_event, t_arr, Some(next_tick)].into_iter().flatten().min().expect("tick always present");

        if Some(t) == t_event {
            let Reverse((_, _, kind)) = state.events.pop().expect("peeked");
            match kind {
                EventKind::AssessDone(id) => {
                    state.assess_busy -= 1;
                    let ready = t + (patients[id].workup_minutes * 60.0).round() as i64;
                    state.push(ready, EventKind::Ready(id));
                }
                EventKind::Ready(id) => {
                    let (class, key) = treat_key(&patients[id]);
                    state.treat_queue.push(Reverse((class, key, id)));
                }
                EventKind::TreatDone { patient, slot } => {
                    state.slots[slot] = None;
                    patients[patient].t_depart = Some(t);
                    remaining -= 1;
                }
            }
        } else if Some(t) == t_arr {
            let id = next_arrival;
            next_arrival += 1;
            let p = &patients[id];
            if p.skip_assess {
                let ready = t + (p.workup_minutes * 60.0).round() as i64;
                state.push(ready, EventKind::Ready(id));
            } else {
                let class = u8::from(p.triage.is_low_acuity());
                state.assess_queue.push(Reverse((class, p.arrival, id)));
            }
        } else {
            next_tick += 3600;
        }

        // Dispatch assessments.
        let assessors = assessors_at(t);
        while state.assess_busy < assessors {
            let Some(Reverse((_, _, id))) = state.assess_queue.pop() else { break };
            state.assess_busy += 1;
            patients[id].t_assess = Some(t);
            let done = t + (patients[id].assess_minutes * 60.0).round() as i64;
            state.push(done, EventKind::AssessDone(id));
        }
        // Dispatch treatments to free on-duty slots, lowest slot first.
        let usable = staff_at(t) * cap;
        for slot in 0..usable {
            if state.slots[slot].is_some() {
                continue;
            }
            let Some(Reverse((_, _, id))) = state.treat_queue.pop() else { break };
            state.slots[slot] = Some(id);
            let p = &mut patients[id];
            p.t_treat = Some(t);
            p.staff = Some(slot / cap);
            let done = t + (p.treat_minutes * 60.0).round() as i64;
            state.push(done, EventKind::TreatDone { patient: id, slot });
        }
    }

    let mut out = SimOutput::default();
    for (i, p) in patients.iter().enumerate() {
        let to_min = |s: i64| start.plus_minutes(s.div_euclid(60));
        let t_reg = to_min(p.arrival);
        let t_treat = to_min(p.t_treat.expect("every patient is treated"));
        let t_depart = to_min(p.t_depart.expect("every patient departs"));
        if t_treat.minutes_since(t_reg) >= MAX_WAIT_MINUTES || t_depart.minutes_since(t_reg) >= MAX_WAIT_MINUTES {
            out.censored += 1;
            continue;
        }
        let assessed = !p.skip_assess;
        out.records.push(PatientRecord {
            patient_id: i as u64 + 1,
            t_reg,
            // The assessment starts when the nurse calls the patient.
            t_assess: assessed.then(|| to_min(p.t_assess.expect("assessed"))),
            t_treat,
            t_depart,
            age: p.age,
            sex: p.sex,
            arrival_mode: p.mode,
            triage: assessed.then_some(p.triage),
            patient_group: assessed.then_some(p.group),
            hrg_code: assessed.then(|| HRG_CODES[p.hrg].to_string()),
            staff_code: format!("{}{:02}", config.staff_prefix, p.staff.expect("treated") + 1),
        });
    }
    Ok(out)
}

fn generate_arrivals(
    config: &SimConfig,
    calendar: &HolidayCalendar,
    mult: HolidayMultipliers,
    start: Minute,
) -> Result<Vec<SimPatient>> {
    let mut rng = seed::rng(seed::derive_label(config.seed, "edsim/arrivals"));
    let assess = config.assess_duration.dist()?;
    let workup = config.workup_duration.dist()?;
    let treat: Vec<LogNormal<f64>> = config.treat_duration.iter().map(|d| d.dist()).collect::<Result<_>>()?;
    let hours = i64::from(config.horizon_days) * 24;
    let mut out = Vec::new();
    for h in 0..hours {
        let t = start.plus_minutes(h * MINUTES_PER_HOUR);
        let rate = diurnal_rate(&config.arrival_rate_profile, calendar, mult, t);
        if rate <= 0.0 {
            continue;
        }
        let n = Poisson::new(rate).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng) as usize;
        let mut offsets: Vec<i64> = (0..n).map(|_| rng.random_range(0..3600)).collect();
        offsets.sort_unstable();
        for off in offsets {
            out.push(sample_patient(config, &mut rng, h * 3600 + off, &assess, &workup, &treat));
        }
    }
    Ok(out)
}

fn pick<R: rand::Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn sample_patient<R: rand::Rng>(
    config: &SimConfig,
    rng: &mut R,
    arrival: i64,
    assess: &LogNormal<f64>,
    workup: &LogNormal<f64>,
    treat: &[LogNormal<f64>],
) -> SimPatient {
    let triage = Triage::ALL[pick(rng, &config.triage_mix)];
    let u: f64 = rng.random();
    let age = if u < config.child_share {
        rng.random_range(0..=16)
    } else if u < config.child_share + config.senior_share {
        rng.random_range(60..=99)
    } else {
        rng.random_range(17..=59)
    };
    let sex = if rng.random::<f64>() < config.p_female { Sex::Female } else { Sex::Male };
    let p_amb = if triage.is_low_acuity() {
        config.p_ambulance_low_acuity * if age >= 60 { 1.6 } else { 1.0 }
    } else {
        config.p_ambulance_high_acuity
    };
    let mode = if rng.random::<f64>() < p_amb.min(1.0) { ArrivalMode::Ambulance } else { ArrivalMode::Other };
    let skip_assess = triage.is_low_acuity() && rng.random::<f64>() < config.p_skip_assess;
    let group_probs = [0.06, 0.05, 0.03, 0.07, 0.005, 0.35, 0.005, 0.43];
    let group = PATIENT_GROUPS[pick(rng, &group_probs)];
    // Resource-use codes track acuity: VB01Z heaviest, VB11Z lightest.
    let hrg = match triage {
        Triage::Resus => rng.random_range(0..2),
        Triage::Urgent => rng.random_range(1..4),
        Triage::Major => rng.random_range(3..8),
        Triage::Minor => rng.random_range(7..12),
    };
    let hrg_factor = 1.0 + 0.06 * (6.0 - hrg as f64);
    SimPatient {
        arrival,
        age,
        sex,
        mode,
        triage,
        skip_assess,
        group,
        hrg,
        assess_minutes: assess.sample(rng).max(1.0),
        // Urgent and resus patients are worked up by the treating doctor.
        workup_minutes: workup.sample(rng)
            * match (triage.is_low_acuity(), age <= 16) {
                (false, _) => 0.0,
                (true, true) => config.child_workup_factor,
                (true, false) => 1.0,
            },
        treat_minutes: (treat[triage.index()].sample(rng) * hrg_factor).max(2.0),
        t_assess: None,
        t_treat: None,
        t_depart: None,
        staff: None,
    }
}

/// Replaces a random share `p` of rows with a missing staff code or a
/// treatment time before registration, for exercising the cleaning rules.
pub fn corrupt(records: &[PatientRecord], p: f64, seed_value: u64) -> Vec<RawRecord> {
    let mut rng = seed::rng(seed::derive_label(seed_value, "edsim/corrupt"));
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut raw = RawRecord::from(r);
            raw.row = i + 1;
            if rng.random::<f64>() < p {
                if rng.random::<bool>() {
                    raw.staff_code = None;
                } else {
                    raw.t_treat = Some(r.t_reg.plus_minutes(-rng.random_range(1..120)));
                }
            }
            raw
        })
        .collect()
}
