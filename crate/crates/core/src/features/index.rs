//! Time-indexed view of an event log for point-in-time ED state queries.
//!
//! Every query only looks at events at or before the query time, so the
//! index can hold the whole log (including the future) without leaking it.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::calendar::{HolidayCalendar, Minute, MINUTES_PER_DAY, MINUTES_PER_HOUR};
use crate::eventlog::{ArrivalMode, PatientRecord, Triage};
use crate::error::{Error, Result};

use super::Stage;

/// Number of category-4 occupancy counts.
pub const N_WORKLOAD: usize = 28;

pub const WORKLOAD_NAMES: [&str; N_WORKLOAD] = [
    "ed_total",
    "ed_ambulance",
    "ed_other",
    "reg_total",
    "reg_ambulance",
    "reg_other",
    "assessed_total",
    "assessed_ambulance",
    "assessed_other",
    "assessed_minor",
    "assessed_major",
    "assessed_urgent",
    "assessed_resus",
    "assessed_ambulance_minor",
    "assessed_ambulance_major",
    "assessed_ambulance_urgent",
    "assessed_ambulance_resus",
    "treating_total",
    "treating_ambulance",
    "treating_other",
    "treating_minor",
    "treating_major",
    "treating_urgent",
    "treating_resus",
    "treating_ambulance_minor",
    "treating_ambulance_major",
    "treating_ambulance_urgent",
    "treating_ambulance_resus",
];

const ED: usize = 0;
const REG: usize = 3;
const ASSESSED: usize = 6;
const TREATING: usize = 17;

/// Span of the staff inference window.
pub const STAFF_WINDOW_MINUTES: i64 = 4 * MINUTES_PER_HOUR;
pub const BREACH_4H: i64 = 240;
pub const BREACH_12H: i64 = 720;
pub const LAG_DAYS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WorkloadCounts {
    pub counts: [u32; N_WORKLOAD],
    /// Query time precedes the first registration in the log.
    pub cold_start: bool,
}

impl WorkloadCounts {
    pub fn get(&self, name: &str) -> Option<u32> {
        WORKLOAD_NAMES.iter().position(|n| *n == name).map(|i| self.counts[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StaffCount {
    pub value: u32,
    /// The window had no departures and an earlier window's value was used.
    pub carried: bool,
    pub cold_start: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaggedWaits {
    pub values: [f64; LAG_DAYS],
    pub fallback: [bool; LAG_DAYS],
}

impl LaggedWaits {
    pub fn n_fallback(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }
}

/// Mean wait by hour of day of the clock start, used when a lag bucket is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyMeans {
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
}

impl Default for HourlyMeans {
    fn default() -> Self {
        HourlyMeans { t1: vec![0.0; 24], t2: vec![0.0; 24] }
    }
}

impl HourlyMeans {
    /// Means over low-acuity records; hours with no data take the overall mean.
    pub fn from_records(records: &[PatientRecord]) -> Self {
        fn fill(items: impl Iterator<Item = (Minute, f64)>) -> Vec<f64> {
            let mut sum = [0.0; 24];
            let mut n = [0usize; 24];
            for (start, w) in items {
                let h = start.hour_of_day() as usize;
                sum[h] += w;
                n[h] += 1;
            }
            let total: usize = n.iter().sum();
            let overall = if total == 0 { 0.0 } else { sum.iter().sum::<f64>() / total as f64 };
            (0..24).map(|h| if n[h] == 0 { overall } else { sum[h] / n[h] as f64 }).collect()
        }
        let low = || records.iter().filter(|r| r.is_low_acuity());
        HourlyMeans {
            t1: fill(low().map(|r| (r.t_reg, r.t_treat.minutes_since(r.t_reg) as f64))),
            t2: fill(low().filter_map(|r| r.t_assess.map(|a| (a, r.t_treat.minutes_since(a) as f64)))),
        }
    }

    pub fn get(&self, stage: Stage, hour_of_day: u32) -> f64 {
        match stage {
            Stage::AtRegistration => self.t1[hour_of_day as usize],
            Stage::AtAssessment => self.t2[hour_of_day as usize],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Episode {
    id: u64,
    t_reg: Minute,
    t_assess: Option<Minute>,
    t_treat: Minute,
    t_depart: Minute,
    ambulance: bool,
    triage: Option<Triage>,
}

impl Episode {
    fn from_record(r: &PatientRecord) -> Self {
        Episode {
            id: r.patient_id,
            t_reg: r.t_reg,
            t_assess: r.t_assess,
            t_treat: r.t_treat,
            t_depart: r.t_depart,
            ambulance: r.arrival_mode == ArrivalMode::Ambulance,
            triage: r.triage,
        }
    }

    /// The four occupancy intervals `[entry, exit)` with their slot group.
    fn intervals(&self) -> [(Minute, Minute, Group); 4] {
        let reg_exit = self.t_assess.unwrap_or(self.t_treat);
        let assessed = match self.t_assess {
            Some(a) => (a, self.t_treat),
            None => (self.t_treat, self.t_treat),
        };
        [
            (self.t_reg, self.t_depart, Group::Ed),
            (self.t_reg, reg_exit, Group::Reg),
            (assessed.0, assessed.1, Group::Assessed),
            (self.t_treat, self.t_depart, Group::Treating),
        ]
    }

    fn apply(&self, group: Group, counts: &mut [i64; N_WORKLOAD], delta: i64) {
        let (base, triaged) = match group {
            Group::Ed => (ED, false),
            Group::Reg => (REG, false),
            Group::Assessed => (ASSESSED, true),
            Group::Treating => (TREATING, true),
        };
        counts[base] += delta;
        counts[base + if self.ambulance { 1 } else { 2 }] += delta;
        if triaged {
            if let Some(tr) = self.triage {
                counts[base + 3 + tr.index()] += delta;
                if self.ambulance {
                    counts[base + 7 + tr.index()] += delta;
                }
            }
        }
    }

    fn add_state_at(&self, t: Minute, counts: &mut [i64; N_WORKLOAD], delta: i64) {
        for (entry, exit, g) in self.intervals() {
            if entry <= t && t < exit {
                self.apply(g, counts, delta);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Ed,
    Reg,
    Assessed,
    Treating,
}

fn to_counts(raw: [i64; N_WORKLOAD], cold_start: bool) -> WorkloadCounts {
    let mut counts = [0u32; N_WORKLOAD];
    for (c, r) in counts.iter_mut().zip(raw) {
        *c = r.max(0) as u32;
    }
    WorkloadCounts { counts, cold_start }
}

/// Read-only after construction except for explicit [`LogIndex::insert`].
#[derive(Debug, Clone)]
pub struct LogIndex {
    episodes: Vec<Episode>,
    ids: HashSet<u64>,
    max_span: i64,
    /// `(t_depart, registration-to-departure span)` ascending.
    departures: Vec<(Minute, i64)>,
    /// `(t_depart, staff id)` ascending.
    staff_departures: Vec<(Minute, u32)>,
    staff_ids: HashMap<String, u32>,
    /// Low-acuity `(clock start, wait)` for each stage, ascending.
    lag_t1: Vec<(Minute, f64)>,
    lag_t2: Vec<(Minute, f64)>,
    calendar: HolidayCalendar,
    fallback: HourlyMeans,
}

fn sorted_insert<T: Copy + PartialOrd>(v: &mut Vec<(Minute, T)>, item: (Minute, T)) {
    let pos = v.partition_point(|x| x.0 <= item.0);
    v.insert(pos, item);
}

impl LogIndex {
    pub fn new(records: &[PatientRecord], calendar: HolidayCalendar, fallback: HourlyMeans) -> Self {
        let mut idx = LogIndex {
            episodes: Vec::with_capacity(records.len()),
            ids: HashSet::with_capacity(records.len()),
            max_span: 0,
            departures: Vec::with_capacity(records.len()),
            staff_departures: Vec::with_capacity(records.len()),
            staff_ids: HashMap::new(),
            lag_t1: Vec::new(),
            lag_t2: Vec::new(),
            calendar,
            fallback,
        };
        for r in records {
            idx.push_unsorted(r, true);
        }
        idx.episodes.sort_by_key(|e| (e.t_reg, e.id));
        idx.departures.sort_by_key(|d| d.0);
        idx.staff_departures.sort_by_key(|d| d.0);
        idx.lag_t1.sort_by_key(|e| e.0);
        idx.lag_t2.sort_by_key(|e| e.0);
        idx
    }

    fn staff_id(&mut self, code: &str) -> u32 {
        let next = self.staff_ids.len() as u32;
        *self.staff_ids.entry(code.to_string()).or_insert(next)
    }

    fn push_unsorted(&mut self, r: &PatientRecord, count_staff: bool) {
        let ep = Episode::from_record(r);
        self.max_span = self.max_span.max(r.t_depart.minutes_since(r.t_reg));
        self.episodes.push(ep);
        self.ids.insert(r.patient_id);
        self.departures.push((r.t_depart, r.t_depart.minutes_since(r.t_reg)));
        if count_staff {
            let id = self.staff_id(&r.staff_code);
            self.staff_departures.push((r.t_depart, id));
        }
        if r.is_low_acuity() {
            self.lag_t1.push((r.t_reg, r.t_treat.minutes_since(r.t_reg) as f64));
            if let Some(a) = r.t_assess {
                self.lag_t2.push((a, r.t_treat.minutes_since(a) as f64));
            }
        }
    }

    /// Adds one episode, keeping all orderings. With `count_staff` false the
    /// episode's staff code is ignored for staff inference.
    pub fn insert(&mut self, r: &PatientRecord, count_staff: bool) {
        let ep = Episode::from_record(r);
        let pos = self.episodes.partition_point(|e| (e.t_reg, e.id) <= (ep.t_reg, ep.id));
        self.episodes.insert(pos, ep);
        self.ids.insert(r.patient_id);
        self.max_span = self.max_span.max(r.t_depart.minutes_since(r.t_reg));
        sorted_insert(&mut self.departures, (r.t_depart, r.t_depart.minutes_since(r.t_reg)));
        if count_staff {
            let id = self.staff_id(&r.staff_code);
            sorted_insert(&mut self.staff_departures, (r.t_depart, id));
        }
        if r.is_low_acuity() {
            sorted_insert(&mut self.lag_t1, (r.t_reg, r.t_treat.minutes_since(r.t_reg) as f64));
            if let Some(a) = r.t_assess {
                sorted_insert(&mut self.lag_t2, (a, r.t_treat.minutes_since(a) as f64));
            }
        }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn contains(&self, patient_id: u64) -> bool {
        self.ids.contains(&patient_id)
    }

    pub fn start(&self) -> Option<Minute> {
        self.episodes.first().map(|e| e.t_reg)
    }

    pub fn calendar(&self) -> &HolidayCalendar {
        &self.calendar
    }

    pub fn fallback(&self) -> &HourlyMeans {
        &self.fallback
    }

    fn is_cold(&self, t: Minute) -> bool {
        self.start().is_none_or(|s| t < s)
    }

    /// Occupancy counts at `t` over all triage classes.
    pub fn workload_snapshot(&self, t: Minute) -> WorkloadCounts {
        self.workload_snapshot_excluding(t, None)
    }

    /// As [`LogIndex::workload_snapshot`], ignoring one patient (the one
    /// being featurized).
    pub fn workload_snapshot_excluding(&self, t: Minute, exclude: Option<u64>) -> WorkloadCounts {
        if self.is_cold(t) {
            return WorkloadCounts { cold_start: true, ..Default::default() };
        }
        let lo = self.episodes.partition_point(|e| e.t_reg.0 < t.0 - self.max_span);
        let hi = self.episodes.partition_point(|e| e.t_reg <= t);
        let mut raw = [0i64; N_WORKLOAD];
        for e in &self.episodes[lo..hi] {
            if Some(e.id) == exclude {
                continue;
            }
            e.add_state_at(t, &mut raw, 1);
        }
        to_counts(raw, false)
    }

    /// Counts at each of `times` (ascending) from a single event sweep.
    pub fn workload_sweep(&self, times: &[Minute]) -> Result<Vec<WorkloadCounts>> {
        if times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput("sweep times must be ascending".into()));
        }
        let mut events: Vec<(Minute, i64, usize, Group)> = Vec::with_capacity(self.episodes.len() * 8);
        for (k, e) in self.episodes.iter().enumerate() {
            for (entry, exit, g) in e.intervals() {
                if entry < exit {
                    events.push((entry, 1, k, g));
                    events.push((exit, -1, k, g));
                }
            }
        }
        events.sort_by_key(|ev| ev.0);
        let mut raw = [0i64; N_WORKLOAD];
        let mut next = 0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            while next < events.len() && events[next].0 <= t {
                let (_, d, k, g) = events[next];
                self.episodes[k].apply(g, &mut raw, d);
                next += 1;
            }
            if self.is_cold(t) {
                out.push(WorkloadCounts { cold_start: true, ..Default::default() });
            } else {
                out.push(to_counts(raw, false));
            }
        }
        Ok(out)
    }

    /// Removes `r`'s own contribution from a snapshot taken at `t`.
    pub(crate) fn subtract_own(counts: &mut WorkloadCounts, r: &PatientRecord, t: Minute) {
        let mut raw = [0i64; N_WORKLOAD];
        for (c, r) in raw.iter_mut().zip(counts.counts) {
            *c = i64::from(r);
        }
        Episode::from_record(r).add_state_at(t, &mut raw, -1);
        *counts = to_counts(raw, counts.cold_start);
    }

    fn distinct_staff(&self, lo_exclusive: Minute, hi_inclusive: Minute) -> usize {
        let a = self.staff_departures.partition_point(|d| d.0 <= lo_exclusive);
        let b = self.staff_departures.partition_point(|d| d.0 <= hi_inclusive);
        let mut ids: Vec<u32> = self.staff_departures[a..b].iter().map(|d| d.1).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Distinct staff codes on departures in `(t - 4h, t]`, stepping back an
    /// hour at a time while the window is empty.
    pub fn staff_at(&self, t: Minute) -> StaffCount {
        let Some(first) = self.staff_departures.first().map(|d| d.0) else {
            return StaffCount { value: 0, carried: false, cold_start: true };
        };
        let mut hi = t;
        let mut carried = false;
        while hi >= first {
            let n = self.distinct_staff(hi.plus_minutes(-STAFF_WINDOW_MINUTES), hi);
            if n > 0 {
                return StaffCount { value: n as u32, carried, cold_start: false };
            }
            hi = hi.plus_minutes(-MINUTES_PER_HOUR);
            carried = true;
        }
        StaffCount { value: 0, carried, cold_start: true }
    }

    /// Staff count for the clock hour starting at `hour`: the window covers
    /// that hour and the three before it.
    pub fn staff_count(&self, hour: Minute) -> StaffCount {
        self.staff_at(hour.hour_floor().plus_minutes(MINUTES_PER_HOUR - 1))
    }

    /// Departures in `(t - 24h, t]` whose stay exceeded 4 and 12 hours.
    pub fn breach_counts(&self, t: Minute) -> (u32, u32) {
        let a = self.departures.partition_point(|d| d.0 <= t.plus_minutes(-MINUTES_PER_DAY));
        let b = self.departures.partition_point(|d| d.0 <= t);
        let window = &self.departures[a..b];
        let n4 = window.iter().filter(|d| d.1 > BREACH_4H).count() as u32;
        let n12 = window.iter().filter(|d| d.1 > BREACH_12H).count() as u32;
        (n4, n12)
    }

    /// Mean low-acuity wait of the stage for clocks started in the same clock
    /// hour on each of the previous seven days.
    pub fn lagged_waits(&self, t: Minute, stage: Stage) -> LaggedWaits {
        let list = match stage {
            Stage::AtRegistration => &self.lag_t1,
            Stage::AtAssessment => &self.lag_t2,
        };
        let h = t.hour_floor();
        let fallback = self.fallback.get(stage, t.hour_of_day());
        let mut out = LaggedWaits { values: [0.0; LAG_DAYS], fallback: [false; LAG_DAYS] };
        for d in 0..LAG_DAYS {
            let lo = h.plus_minutes(-MINUTES_PER_DAY * (d as i64 + 1));
            let hi = lo.plus_minutes(MINUTES_PER_HOUR);
            let a = list.partition_point(|x| x.0 < lo);
            let b = list.partition_point(|x| x.0 < hi);
            if a == b {
                out.values[d] = fallback;
                out.fallback[d] = true;
            } else {
                out.values[d] = list[a..b].iter().map(|x| x.1).sum::<f64>() / (b - a) as f64;
            }
        }
        out
    }
}
