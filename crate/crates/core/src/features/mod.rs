//! Feature vectors for the two forecasting stages.
//!
//! Categories: 1 calendar, 2 staffing, 3 demographics, 4 ED workload,
//! 5 clinical information known after assessment. Categorical variables are
//! one-hot encoded against levels seen in training plus an `unseen` column.

mod index;

use std::collections::BTreeSet;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{calendar_values, CalendarValues, HolidayCalendar, Minute};
use crate::error::{Error, Result};
use crate::eventlog::PatientRecord;

pub use index::{
    HourlyMeans, LaggedWaits, LogIndex, StaffCount, WorkloadCounts, BREACH_12H, BREACH_4H, LAG_DAYS, N_WORKLOAD,
    STAFF_WINDOW_MINUTES, WORKLOAD_NAMES,
};

pub const UNSEEN: &str = "unseen";
const NONE_LEVEL: &str = "none";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    /// Forecasting `t1` at registration.
    AtRegistration,
    /// Forecasting `t2` after initial assessment.
    AtAssessment,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::AtRegistration => "at_registration",
            Stage::AtAssessment => "at_assessment",
        }
    }

    /// Evaluation time of `r` for this stage.
    pub fn eval_time(self, r: &PatientRecord) -> Option<Minute> {
        match self {
            Stage::AtRegistration => Some(r.t_reg),
            Stage::AtAssessment => r.t_assess,
        }
    }

    /// Wait being forecast: `t1` or `t2` in minutes.
    pub fn target(self, r: &PatientRecord) -> Option<f64> {
        self.eval_time(r).map(|t| r.t_treat.minutes_since(t) as f64)
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "at_registration" | "t1" => Ok(Stage::AtRegistration),
            "at_assessment" | "t2" => Ok(Stage::AtAssessment),
            other => Err(Error::Parse(format!("unknown stage {other:?}"))),
        }
    }
}

pub fn calendar_features(t: Minute, calendar: &HolidayCalendar) -> CalendarValues {
    calendar_values(t, calendar)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    /// One column of a one-hot encoded categorical variable.
    Indicator { variable: String, level: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub category: u8,
    pub kind: FeatureKind,
}

/// Categorical variables and their training levels, in schema order.
const CATEGORICALS: [(&str, u8); 5] =
    [("holiday", 1), ("sex", 3), ("triage", 5), ("patient_group", 5), ("hrg", 5)];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub stage: Stage,
    pub descriptors: Vec<FeatureDescriptor>,
}

fn categorical_level(var: &str, r: &PatientRecord, t: Minute, cal: &HolidayCalendar) -> String {
    match var {
        "holiday" => cal.code(t.date()).code().to_string(),
        "sex" => r.sex.code().to_string(),
        "triage" => r.triage.map_or(NONE_LEVEL.to_string(), |x| x.as_str().to_string()),
        "patient_group" => r.patient_group.map_or(NONE_LEVEL.to_string(), |g| g.to_string()),
        "hrg" => r.hrg_code.clone().unwrap_or_else(|| NONE_LEVEL.to_string()),
        _ => unreachable!("unknown categorical"),
    }
}

fn numeric(name: &str, category: u8) -> FeatureDescriptor {
    FeatureDescriptor { name: name.to_string(), category, kind: FeatureKind::Numeric }
}

fn indicators(var: &str, category: u8, levels: &BTreeSet<String>) -> Vec<FeatureDescriptor> {
    levels
        .iter()
        .map(|l| l.as_str())
        .chain(std::iter::once(UNSEEN))
        .map(|l| FeatureDescriptor {
            name: format!("{var}={l}"),
            category,
            kind: FeatureKind::Indicator { variable: var.to_string(), level: l.to_string() },
        })
        .collect()
}

impl FeatureSchema {
    /// Builds the schema for `stage`, fixing categorical levels from `train`.
    pub fn fit(stage: Stage, train: &[PatientRecord], calendar: &HolidayCalendar) -> Self {
        let mut levels: Vec<BTreeSet<String>> = vec![BTreeSet::new(); CATEGORICALS.len()];
        for r in train {
            let Some(t) = stage.eval_time(r) else { continue };
            for (k, (var, _)) in CATEGORICALS.iter().enumerate() {
                levels[k].insert(categorical_level(var, r, t, calendar));
            }
        }
        Self::from_levels(stage, &levels)
    }

    fn from_levels(stage: Stage, levels: &[BTreeSet<String>]) -> Self {
        let mut d = vec![
            numeric("hour_of_day", 1),
            numeric("hour_of_week", 1),
            numeric("day_of_week", 1),
            numeric("month", 1),
        ];
        d.extend(indicators("holiday", 1, &levels[0]));
        d.push(numeric("staff_count", 2));
        d.push(numeric("staff_carried", 2));
        d.push(numeric("age", 3));
        d.extend(indicators("sex", 3, &levels[1]));
        d.extend(WORKLOAD_NAMES.iter().map(|n| numeric(n, 4)));
        d.push(numeric("breach_4h", 4));
        d.push(numeric("breach_12h", 4));
        d.extend((1..=LAG_DAYS).map(|k| numeric(&format!("lag_wait_d{k}"), 4)));
        d.push(numeric("lag_fallback", 4));
        if stage == Stage::AtAssessment {
            d.push(numeric("elapsed_reg_to_assess", 5));
            d.extend(indicators("triage", 5, &levels[2]));
            d.extend(indicators("patient_group", 5, &levels[3]));
            d.extend(indicators("hrg", 5, &levels[4]));
        }
        FeatureSchema { stage, descriptors: d }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.descriptors.iter().map(|d| d.name.clone()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.descriptors.iter().position(|d| d.name == name)
    }

    /// Writes `name,category,kind,variable,level` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["name", "category", "kind", "variable", "level"])?;
        for d in &self.descriptors {
            let cat = d.category.to_string();
            match &d.kind {
                FeatureKind::Numeric => wr.write_record([d.name.as_str(), &cat, "numeric", "", ""])?,
                FeatureKind::Indicator { variable, level } => {
                    wr.write_record([d.name.as_str(), &cat, "indicator", variable, level])?
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let mut descriptors = Vec::new();
        for row in rd.records() {
            let row = row?;
            if row.len() != 5 {
                return Err(Error::Parse("schema rows need 5 fields".into()));
            }
            let category: u8 = row[1].parse().map_err(|_| Error::Parse(format!("bad category {:?}", &row[1])))?;
            let kind = match &row[2] {
                "numeric" => FeatureKind::Numeric,
                "indicator" => FeatureKind::Indicator { variable: row[3].to_string(), level: row[4].to_string() },
                other => return Err(Error::Parse(format!("unknown feature kind {other:?}"))),
            };
            descriptors.push(FeatureDescriptor { name: row[0].to_string(), category, kind });
        }
        let stage = if descriptors.iter().any(|d| d.category == 5) {
            Stage::AtAssessment
        } else {
            Stage::AtRegistration
        };
        Ok(FeatureSchema { stage, descriptors })
    }

    fn level_sets(&self) -> Vec<Vec<String>> {
        CATEGORICALS
            .iter()
            .map(|(var, _)| {
                self.descriptors
                    .iter()
                    .filter_map(|d| match &d.kind {
                        FeatureKind::Indicator { variable, level } if variable == var && level != UNSEEN => {
                            Some(level.clone())
                        }
                        _ => None,
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VectorFlags {
    pub cold_start: bool,
    pub staff_carried: bool,
    pub lag_fallbacks: u8,
    /// Number of categorical values that fell in the `unseen` column.
    pub unseen: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub t_eval: Minute,
    pub stage: Stage,
    pub flags: VectorFlags,
}

/// Precomputed encoder for one schema.
struct Encoder<'a> {
    schema: &'a FeatureSchema,
    levels: Vec<Vec<String>>,
}

impl<'a> Encoder<'a> {
    fn new(schema: &'a FeatureSchema) -> Self {
        Encoder { schema, levels: schema.level_sets() }
    }

    fn push_indicator(&self, out: &mut Vec<f64>, var_idx: usize, value: &str, flags: &mut VectorFlags) {
        let lv = &self.levels[var_idx];
        let hit = lv.iter().position(|l| l == value);
        for k in 0..lv.len() {
            out.push(if hit == Some(k) { 1.0 } else { 0.0 });
        }
        out.push(if hit.is_none() { 1.0 } else { 0.0 });
        if hit.is_none() {
            flags.unseen += 1;
        }
    }

    fn encode(&self, r: &PatientRecord, index: &LogIndex, workload: WorkloadCounts) -> Result<FeatureVector> {
        let stage = self.schema.stage;
        let t = stage
            .eval_time(r)
            .ok_or_else(|| Error::InvalidInput(format!("patient {} has no assessment time", r.patient_id)))?;
        let cal = index.calendar();
        let mut flags = VectorFlags { cold_start: workload.cold_start, ..Default::default() };
        let mut v = Vec::with_capacity(self.schema.len());

        let c = calendar_values(t, cal);
        v.extend([c.hour_of_day, c.hour_of_week, c.day_of_week, c.month].map(f64::from));
        self.push_indicator(&mut v, 0, &categorical_level("holiday", r, t, cal), &mut flags);

        let staff = index.staff_at(t);
        flags.staff_carried = staff.carried;
        v.push(f64::from(staff.value));
        v.push(if staff.carried { 1.0 } else { 0.0 });

        v.push(f64::from(r.age));
        self.push_indicator(&mut v, 1, &categorical_level("sex", r, t, cal), &mut flags);

        v.extend(workload.counts.iter().map(|&x| f64::from(x)));
        let (b4, b12) = index.breach_counts(t);
        v.push(f64::from(b4));
        v.push(f64::from(b12));
        let lags = index.lagged_waits(t, stage);
        v.extend(lags.values);
        flags.lag_fallbacks = lags.n_fallback() as u8;
        v.push(lags.n_fallback() as f64);

        if stage == Stage::AtAssessment {
            v.push(t.minutes_since(r.t_reg) as f64);
            for (k, var) in ["triage", "patient_group", "hrg"].iter().enumerate() {
                self.push_indicator(&mut v, 2 + k, &categorical_level(var, r, t, cal), &mut flags);
            }
        }
        debug_assert_eq!(v.len(), self.schema.len());
        Ok(FeatureVector { values: v, t_eval: t, stage, flags })
    }
}

fn own_snapshot(r: &PatientRecord, index: &LogIndex, t: Minute) -> WorkloadCounts {
    index.workload_snapshot_excluding(t, Some(r.patient_id))
}

/// Feature vector for `r` at the schema's stage. The patient's own episode
/// is left out of the occupancy counts.
pub fn featurize(r: &PatientRecord, index: &LogIndex, schema: &FeatureSchema) -> Result<FeatureVector> {
    let t = schema
        .stage
        .eval_time(r)
        .ok_or_else(|| Error::InvalidInput(format!("patient {} has no assessment time", r.patient_id)))?;
    Encoder::new(schema).encode(r, index, own_snapshot(r, index, t))
}

/// Row-major numeric matrix with its schema, targets and row keys.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub stage: Stage,
    pub n_rows: usize,
    pub data: Vec<f64>,
    pub patient_ids: Vec<u64>,
    pub t_eval: Vec<Minute>,
    pub targets: Vec<f64>,
}

impl FeatureMatrix {
    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_cols();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.data[i * self.n_cols() + j]).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Rows selected by `keep`, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> FeatureMatrix {
        let m = self.n_cols();
        let mut data = Vec::with_capacity(keep.len() * m);
        for &i in keep {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            names: self.names.clone(),
            stage: self.stage,
            n_rows: keep.len(),
            data,
            patient_ids: keep.iter().map(|&i| self.patient_ids[i]).collect(),
            t_eval: keep.iter().map(|&i| self.t_eval[i]).collect(),
            targets: keep.iter().map(|&i| self.targets[i]).collect(),
        }
    }

    /// Appends `c / max(staff, 1)` for every workload count column.
    pub fn with_fluid_ratios(&self) -> Result<FeatureMatrix> {
        let staff_col = self
            .position("staff_count")
            .ok_or_else(|| Error::MissingColumn("staff_count".into()))?;
        let cols: Vec<usize> = WORKLOAD_NAMES
            .iter()
            .map(|n| {
                self.position(n).ok_or_else(|| Error::MissingColumn(n.to_string()))
            })
            .collect::<Result<_>>()?;
        let m = self.n_cols();
        let mut names = self.names.clone();
        names.extend(WORKLOAD_NAMES.iter().map(|n| format!("ratio_{n}")));
        let mut data = Vec::with_capacity(self.n_rows * (m + cols.len()));
        for i in 0..self.n_rows {
            let row = self.row(i);
            data.extend_from_slice(row);
            let workloads: Vec<f64> = cols.iter().map(|&j| row[j]).collect();
            data.extend(fluid_ratios(&workloads, row[staff_col]));
        }
        Ok(FeatureMatrix { names, data, ..self.clone() })
    }

    /// CSV with header `patient_id,t_eval,target,<features>` after optional
    /// `#` comment lines.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["patient_id".to_string(), "t_eval".into(), "target".into()];
        header.extend(self.names.iter().cloned());
        wr.write_record(&header)?;
        for i in 0..self.n_rows {
            let mut rec = vec![self.patient_ids[i].to_string(), self.t_eval[i].to_string(), self.targets[i].to_string()];
            rec.extend(self.row(i).iter().map(|x| x.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, stage: Stage) -> Result<FeatureMatrix> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header = rd.headers()?.clone();
        if header.len() < 3 || &header[0] != "patient_id" || &header[1] != "t_eval" || &header[2] != "target" {
            return Err(Error::Parse("feature matrix header must start with patient_id,t_eval,target".into()));
        }
        let names: Vec<String> = header.iter().skip(3).map(String::from).collect();
        let mut out = FeatureMatrix {
            names,
            stage,
            n_rows: 0,
            data: Vec::new(),
            patient_ids: Vec::new(),
            t_eval: Vec::new(),
            targets: Vec::new(),
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}")));
        for row in rd.records() {
            let row = row?;
            if row.len() != header.len() {
                return Err(Error::Parse(format!("row has {} fields, expected {}", row.len(), header.len())));
            }
            out.patient_ids.push(row[0].parse().map_err(|_| Error::Parse(format!("bad id {:?}", &row[0])))?);
            out.t_eval.push(row[1].parse()?);
            out.targets.push(num(&row[2])?);
            for f in row.iter().skip(3) {
                out.data.push(num(f)?);
            }
            out.n_rows += 1;
        }
        Ok(out)
    }
}

/// Feature matrix for many records at once. Occupancy counts come from one
/// event sweep; everything else uses point queries.
pub fn featurize_all(records: &[PatientRecord], index: &LogIndex, schema: &FeatureSchema) -> Result<FeatureMatrix> {
    let stage = schema.stage;
    let mut order: Vec<(Minute, usize)> = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let t = stage
            .eval_time(r)
            .ok_or_else(|| Error::InvalidInput(format!("patient {} has no assessment time", r.patient_id)))?;
        order.push((t, i));
    }
    order.sort();
    let times: Vec<Minute> = order.iter().map(|o| o.0).collect();
    let swept = index.workload_sweep(&times)?;
    let mut workload = vec![WorkloadCounts::default(); records.len()];
    for ((t, i), mut w) in order.into_iter().zip(swept) {
        if !w.cold_start && index.contains(records[i].patient_id) {
            LogIndex::subtract_own(&mut w, &records[i], t);
        }
        workload[i] = w;
    }
    let enc = Encoder::new(schema);
    let rows: Vec<FeatureVector> = records
        .par_iter()
        .zip(workload.par_iter())
        .map(|(r, w)| enc.encode(r, index, *w))
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(records.len() * schema.len());
    for fv in &rows {
        data.extend_from_slice(&fv.values);
    }
    Ok(FeatureMatrix {
        names: schema.names(),
        stage,
        n_rows: records.len(),
        data,
        patient_ids: records.iter().map(|r| r.patient_id).collect(),
        t_eval: rows.iter().map(|fv| fv.t_eval).collect(),
        targets: records.iter().map(|r| stage.target(r).expect("eval time checked")).collect(),
    })
}

/// `c / max(staff, 1)` for each workload count.
pub fn fluid_ratios(workloads: &[f64], staff_count: f64) -> Vec<f64> {
    let d = staff_count.max(1.0);
    workloads.iter().map(|c| c / d).collect()
}
