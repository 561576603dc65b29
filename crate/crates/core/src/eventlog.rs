//! Patient-level event logs: record types, CSV parsing and writing, the
//! cleaning rules, waiting-time computation and the train/holdout/test split.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::Minute;
use crate::error::{Error, Result};

pub const LOG_HEADER: [&str; 12] = [
    "patient_id",
    "t_reg",
    "t_assess",
    "t_treat",
    "t_depart",
    "age",
    "sex",
    "arrival_mode",
    "triage",
    "patient_group",
    "hrg_code",
    "staff_code",
];

/// Waits (and registration-to-departure spans) at or above this many
/// minutes are treated as implausible and removed.
pub const MAX_WAIT_MINUTES: i64 = 14 * 60;
pub const MAX_AGE: u32 = 110;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    Male = 0,
    Female = 1,
}

impl Sex {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArrivalMode {
    Ambulance,
    Other,
}

/// Nurse-assigned triage class, in increasing order of acuity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Triage {
    Minor = 0,
    Major = 1,
    Urgent = 2,
    Resus = 3,
}

impl Triage {
    pub const ALL: [Triage; 4] = [Triage::Minor, Triage::Major, Triage::Urgent, Triage::Resus];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_low_acuity(self) -> bool {
        matches!(self, Triage::Minor | Triage::Major)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Triage::Minor => "minor",
            Triage::Major => "major",
            Triage::Urgent => "urgent",
            Triage::Resus => "resus",
        }
    }
}

impl FromStr for Triage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minor" => Ok(Triage::Minor),
            "major" => Ok(Triage::Major),
            "urgent" => Ok(Triage::Urgent),
            "resus" => Ok(Triage::Resus),
            other => Err(Error::Parse(format!("unknown triage {other:?}"))),
        }
    }
}

impl ArrivalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ArrivalMode::Ambulance => "ambulance",
            ArrivalMode::Other => "other",
        }
    }
}

impl FromStr for ArrivalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ambulance" => Ok(ArrivalMode::Ambulance),
            "other" => Ok(ArrivalMode::Other),
            other => Err(Error::Parse(format!("unknown arrival mode {other:?}"))),
        }
    }
}

/// One ED episode after cleaning. All required fields are present and the
/// stage timestamps are ordered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: u64,
    pub t_reg: Minute,
    pub t_assess: Option<Minute>,
    pub t_treat: Minute,
    pub t_depart: Minute,
    pub age: u32,
    pub sex: Sex,
    pub arrival_mode: ArrivalMode,
    pub triage: Option<Triage>,
    pub patient_group: Option<u8>,
    pub hrg_code: Option<String>,
    pub staff_code: String,
}

impl PatientRecord {
    /// Patients without a recorded triage started treatment without an
    /// initial assessment; they belong to the low-acuity stream.
    pub fn is_low_acuity(&self) -> bool {
        self.triage.is_none_or(Triage::is_low_acuity)
    }

    pub fn waits(&self) -> WaitPair {
        waits(self)
    }
}

/// A parsed row before cleaning. Required fields may still be missing and
/// timestamps may be out of order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub row: usize,
    pub patient_id: u64,
    pub t_reg: Option<Minute>,
    pub t_assess: Option<Minute>,
    pub t_treat: Option<Minute>,
    pub t_depart: Option<Minute>,
    pub age: Option<u32>,
    pub sex: Option<Sex>,
    pub arrival_mode: Option<ArrivalMode>,
    pub triage: Option<Triage>,
    pub patient_group: Option<u8>,
    pub hrg_code: Option<String>,
    pub staff_code: Option<String>,
}

impl From<&PatientRecord> for RawRecord {
    fn from(r: &PatientRecord) -> Self {
        RawRecord {
            row: 0,
            patient_id: r.patient_id,
            t_reg: Some(r.t_reg),
            t_assess: r.t_assess,
            t_treat: Some(r.t_treat),
            t_depart: Some(r.t_depart),
            age: Some(r.age),
            sex: Some(r.sex),
            arrival_mode: Some(r.arrival_mode),
            triage: r.triage,
            patient_group: r.patient_group,
            hrg_code: r.hrg_code.clone(),
            staff_code: Some(r.staff_code.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based data row number (header excluded, comment lines excluded).
    pub row: usize,
    pub reason: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.reason)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedLog {
    pub records: Vec<RawRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn parse_log(path: &Path) -> Result<ParsedLog> {
    let file = std::fs::File::open(path)?;
    parse_log_reader(file)
}

pub fn parse_log_reader<R: Read>(reader: R) -> Result<ParsedLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() != LOG_HEADER.len() || header.iter().zip(LOG_HEADER).any(|(a, b)| a.trim() != b) {
        return Err(Error::Parse(format!(
            "malformed header: expected {}",
            LOG_HEADER.join(",")
        )));
    }
    let mut out = ParsedLog::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.diagnostics.push(Diagnostic { row, reason: e.to_string() });
                continue;
            }
        };
        match parse_row(row, &rec) {
            Ok(r) => out.records.push(r),
            Err(reason) => out.diagnostics.push(Diagnostic { row, reason }),
        }
    }
    Ok(out)
}

fn parse_row(row: usize, rec: &csv::StringRecord) -> std::result::Result<RawRecord, String> {
    if rec.len() != LOG_HEADER.len() {
        return Err(format!("expected {} fields, found {}", LOG_HEADER.len(), rec.len()));
    }
    fn opt<T: FromStr>(field: &str, name: &str) -> std::result::Result<Option<T>, String> {
        let f = field.trim();
        if f.is_empty() {
            Ok(None)
        } else {
            f.parse().map(Some).map_err(|_| format!("unparseable {name} {f:?}"))
        }
    }
    let patient_id: u64 = rec[0]
        .trim()
        .parse()
        .map_err(|_| format!("unparseable patient_id {:?}", &rec[0]))?;
    let sex = match rec[6].trim() {
        "" => None,
        "0" => Some(Sex::Male),
        "1" => Some(Sex::Female),
        other => return Err(format!("unparseable sex {other:?}")),
    };
    let raw = RawRecord {
        row,
        patient_id,
        t_reg: opt(&rec[1], "t_reg")?,
        t_assess: opt(&rec[2], "t_assess")?,
        t_treat: opt(&rec[3], "t_treat")?,
        t_depart: opt(&rec[4], "t_depart")?,
        age: opt(&rec[5], "age")?,
        sex,
        arrival_mode: opt(&rec[7], "arrival_mode")?,
        triage: opt(&rec[8], "triage")?,
        patient_group: opt(&rec[9], "patient_group")?,
        hrg_code: opt(&rec[10], "hrg_code")?,
        staff_code: opt(&rec[11], "staff_code")?,
    };
    let assessed = raw.t_assess.is_some();
    let fields = [raw.triage.is_some(), raw.patient_group.is_some(), raw.hrg_code.is_some()];
    if fields.iter().any(|&present| present != assessed) {
        return Err("assessment fields inconsistent".to_string());
    }
    Ok(raw)
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn raw_row(r: &RawRecord) -> [String; 12] {
    [
        r.patient_id.to_string(),
        fmt_opt(&r.t_reg),
        fmt_opt(&r.t_assess),
        fmt_opt(&r.t_treat),
        fmt_opt(&r.t_depart),
        fmt_opt(&r.age),
        r.sex.map(|s| s.code().to_string()).unwrap_or_default(),
        r.arrival_mode.map(|m| m.as_str().to_string()).unwrap_or_default(),
        r.triage.map(|t| t.as_str().to_string()).unwrap_or_default(),
        fmt_opt(&r.patient_group),
        fmt_opt(&r.hrg_code),
        fmt_opt(&r.staff_code),
    ]
}

/// Writes raw rows with an optional block of `# ` comment lines first.
pub fn write_raw_log<W: Write>(mut w: W, comments: &[String], records: &[RawRecord]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(LOG_HEADER)?;
    for r in records {
        wtr.write_record(raw_row(r))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_log<W: Write>(w: W, comments: &[String], records: &[PatientRecord]) -> Result<()> {
    let raw: Vec<RawRecord> = records.iter().map(RawRecord::from).collect();
    write_raw_log(w, comments, &raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    Null,
    Negative,
    Wait14h,
    Age,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Null => "null",
            RejectReason::Negative => "negative",
            RejectReason::Wait14h => "wait_14h",
            RejectReason::Age => "age",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionTally(pub BTreeMap<RejectReason, usize>);

impl RejectionTally {
    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn get(&self, reason: RejectReason) -> usize {
        self.0.get(&reason).copied().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["reason", "count"])?;
        for reason in [RejectReason::Null, RejectReason::Negative, RejectReason::Wait14h, RejectReason::Age] {
            wtr.write_record([reason.as_str().to_string(), self.get(reason).to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Applies the cleaning rules to one raw row. The first failing rule, in
/// the order null, negative span, 14-hour wait, age, names the rejection.
pub fn clean_one(r: &RawRecord) -> std::result::Result<PatientRecord, RejectReason> {
    let (Some(t_reg), Some(t_treat), Some(t_depart), Some(age), Some(sex), Some(arrival_mode), Some(staff)) = (
        r.t_reg,
        r.t_treat,
        r.t_depart,
        r.age,
        r.sex,
        r.arrival_mode,
        r.staff_code.as_ref(),
    ) else {
        return Err(RejectReason::Null);
    };
    let assessed = r.t_assess.is_some();
    if [r.triage.is_some(), r.patient_group.is_some(), r.hrg_code.is_some()]
        .iter()
        .any(|&p| p != assessed)
    {
        return Err(RejectReason::Null);
    }
    let before_treat = r.t_assess.unwrap_or(t_reg);
    if before_treat < t_reg || t_treat < before_treat || t_depart < t_treat {
        return Err(RejectReason::Negative);
    }
    let t1 = t_treat.minutes_since(t_reg);
    let los = t_depart.minutes_since(t_reg);
    // t2 <= t1, so the t1 bound already covers t2.
    if t1 >= MAX_WAIT_MINUTES || los >= MAX_WAIT_MINUTES {
        return Err(RejectReason::Wait14h);
    }
    if age >= MAX_AGE {
        return Err(RejectReason::Age);
    }
    Ok(PatientRecord {
        patient_id: r.patient_id,
        t_reg,
        t_assess: r.t_assess,
        t_treat,
        t_depart,
        age,
        sex,
        arrival_mode,
        triage: r.triage,
        patient_group: r.patient_group,
        hrg_code: r.hrg_code.clone(),
        staff_code: staff.clone(),
    })
}

/// Removes invalid rows and returns the survivors sorted by
/// (`t_reg`, `patient_id`).
pub fn clean(records: &[RawRecord]) -> (Vec<PatientRecord>, RejectionTally) {
    let mut kept = Vec::with_capacity(records.len());
    let mut tally = RejectionTally::default();
    for r in records {
        match clean_one(r) {
            Ok(p) => kept.push(p),
            Err(reason) => *tally.0.entry(reason).or_insert(0) += 1,
        }
    }
    sort_records(&mut kept);
    (kept, tally)
}

pub fn sort_records(records: &mut [PatientRecord]) {
    records.sort_by_key(|r| (r.t_reg, r.patient_id));
}

/// Waiting times in minutes: `t1` from registration and `t2` from initial
/// assessment to the start of treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaitPair {
    pub t1: i64,
    pub t2: Option<i64>,
}

pub fn waits(r: &PatientRecord) -> WaitPair {
    WaitPair {
        t1: r.t_treat.minutes_since(r.t_reg),
        t2: r.t_assess.map(|a| r.t_treat.minutes_since(a)),
    }
}

/// Half-open period boundaries: train `[train_start, test_start)`, holdout
/// `[holdout_start, test_start)`, test `[test_start, test_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBoundaries {
    pub train_start: Minute,
    pub holdout_start: Minute,
    pub test_start: Minute,
    pub test_end: Minute,
}

impl SplitBoundaries {
    /// Five consecutive calendar years starting at `first_year`: years 1-4
    /// train, year 4 holdout, year 5 test.
    pub fn five_years(first_year: i32) -> Self {
        let jan1 = |y: i32| Minute::from_date(chrono::NaiveDate::from_ymd_opt(y, 1, 1).expect("valid year"));
        SplitBoundaries {
            train_start: jan1(first_year),
            holdout_start: jan1(first_year + 3),
            test_start: jan1(first_year + 4),
            test_end: jan1(first_year + 5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_start <= self.holdout_start
            && self.holdout_start <= self.test_start
            && self.test_start <= self.test_end)
        {
            return Err(Error::Config("split boundaries must be non-decreasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct CohortSplit {
    pub train: Vec<PatientRecord>,
    /// The tail of `train` used for hyperparameter tuning.
    pub holdout: Vec<PatientRecord>,
    pub test: Vec<PatientRecord>,
    /// Records outside `[train_start, test_end)`.
    pub excluded: usize,
    pub warnings: Vec<String>,
}

pub fn split(records: &[PatientRecord], b: &SplitBoundaries) -> CohortSplit {
    let mut out = CohortSplit::default();
    for r in records {
        let t = r.t_reg;
        if t >= b.train_start && t < b.test_start {
            if t >= b.holdout_start {
                out.holdout.push(r.clone());
            }
            out.train.push(r.clone());
        } else if t >= b.test_start && t < b.test_end {
            out.test.push(r.clone());
        } else {
            out.excluded += 1;
        }
    }
    for (name, part) in [("train", &out.train), ("holdout", &out.holdout), ("test", &out.test)] {
        if part.is_empty() {
            out.warnings.push(format!("{name} partition is empty"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "patient_id,t_reg,t_assess,t_treat,t_depart,age,sex,arrival_mode,triage,patient_group,hrg_code,staff_code\n";

    fn ts(s: &str) -> Minute {
        s.parse().unwrap()
    }

    pub(crate) fn record(id: u64, reg: &str, assess: Option<&str>, treat: &str, depart: &str) -> PatientRecord {
        let assessed = assess.is_some();
        PatientRecord {
            patient_id: id,
            t_reg: ts(reg),
            t_assess: assess.map(ts),
            t_treat: ts(treat),
            t_depart: ts(depart),
            age: 40,
            sex: Sex::Female,
            arrival_mode: ArrivalMode::Other,
            triage: assessed.then_some(Triage::Major),
            patient_group: assessed.then_some(80),
            hrg_code: assessed.then(|| "VB04Z".to_string()),
            staff_code: "S1".into(),
        }
    }

    #[test]
    fn well_formed_file_parses_every_row() {
        let text = format!(
            "{HEADER}1,2018-04-09T19:39,2018-04-09T19:57,2018-04-09T21:23,2018-04-09T22:10,90,0,other,major,80,VB04Z,S3\n\
             2,2018-04-09T19:45,,2018-04-09T20:00,2018-04-09T20:30,12,1,ambulance,,,,S1\n\
             3,2018-04-09T19:50,2018-04-09T19:55,2018-04-09T20:40,2018-04-09T21:00,33,1,other,minor,60,VB09Z,S2\n"
        );
        let parsed = parse_log_reader(text.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 3);
        assert!(parsed.diagnostics.is_empty());
    }

    #[test]
    fn missing_triage_with_assessment_is_a_diagnostic() {
        let text = format!("{HEADER}1,2018-04-09T19:39,2018-04-09T19:57,2018-04-09T21:23,2018-04-09T22:10,90,0,other,,80,VB04Z,S3\n");
        let parsed = parse_log_reader(text.as_bytes()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.diagnostics.len(), 1);
        assert_eq!(parsed.diagnostics[0].row, 1);
        assert_eq!(parsed.diagnostics[0].reason, "assessment fields inconsistent");
    }

    #[test]
    fn parsing_does_not_judge_negative_spans() {
        let text = format!("{HEADER}1,2018-04-09T19:39,,2018-04-09T19:00,2018-04-09T22:10,90,0,other,,,,S3\n");
        let parsed = parse_log_reader(text.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        let (kept, tally) = clean(&parsed.records);
        assert!(kept.is_empty());
        assert_eq!(tally.get(RejectReason::Negative), 1);
    }

    #[test]
    fn bad_timestamp_is_a_row_diagnostic_not_an_abort() {
        let text = format!(
            "{HEADER}1,not-a-time,,2018-04-09T19:00,2018-04-09T22:10,90,0,other,,,,S3\n\
             2,2018-04-09T19:45,,2018-04-09T20:00,2018-04-09T20:30,12,1,ambulance,,,,S1\n"
        );
        let parsed = parse_log_reader(text.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.diagnostics[0].row, 1);
    }

    #[test]
    fn malformed_header_is_an_error() {
        let text = "id,t_reg\n1,2018-04-09T19:39\n";
        assert!(matches!(parse_log_reader(text.as_bytes()), Err(Error::Parse(_))));
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(matches!(parse_log(Path::new("/nonexistent/log.csv")), Err(Error::Io(_))));
    }

    #[test]
    fn fourteen_hour_boundary_is_inclusive() {
        let mut r = RawRecord::from(&record(1, "2018-01-01T00:00", None, "2018-01-01T14:00", "2018-01-01T14:30"));
        assert_eq!(clean_one(&r), Err(RejectReason::Wait14h));
        r.t_treat = Some(ts("2018-01-01T13:59"));
        r.t_depart = Some(ts("2018-01-01T13:59"));
        r.age = Some(109);
        assert!(clean_one(&r).is_ok());
    }

    #[test]
    fn departure_span_of_fourteen_hours_is_rejected() {
        let r = RawRecord::from(&record(1, "2018-01-01T00:00", None, "2018-01-01T02:00", "2018-01-01T14:00"));
        assert_eq!(clean_one(&r), Err(RejectReason::Wait14h));
    }

    #[test]
    fn ten_records_three_violations() {
        let mut raws: Vec<RawRecord> = (0..10)
            .map(|i| RawRecord::from(&record(i, "2018-01-01T10:00", Some("2018-01-01T10:10"), "2018-01-01T11:00", "2018-01-01T12:00")))
            .collect();
        raws[2].staff_code = None;
        raws[5].t_treat = Some(ts("2018-01-01T10:05"));
        raws[8].age = Some(110);
        let (kept, tally) = clean(&raws);
        assert_eq!(kept.len(), 7);
        assert_eq!(tally.get(RejectReason::Null), 1);
        assert_eq!(tally.get(RejectReason::Negative), 1);
        assert_eq!(tally.get(RejectReason::Age), 1);
        assert_eq!(tally.total(), 3);
    }

    #[test]
    fn clean_is_idempotent() {
        let raws = vec![
            RawRecord::from(&record(2, "2018-01-01T10:00", None, "2018-01-01T11:00", "2018-01-01T12:00")),
            RawRecord::from(&record(1, "2018-01-01T09:00", None, "2018-01-01T08:00", "2018-01-01T12:00")),
            RawRecord::from(&record(3, "2018-01-01T09:00", Some("2018-01-01T09:30"), "2018-01-01T11:00", "2018-01-01T12:00")),
        ];
        let (once, _) = clean(&raws);
        let again: Vec<RawRecord> = once.iter().map(RawRecord::from).collect();
        let (twice, tally) = clean(&again);
        assert_eq!(once, twice);
        assert_eq!(tally.total(), 0);
    }

    #[test]
    fn waits_from_walkthrough_timestamps() {
        let r = record(1, "2018-04-09T19:39", Some("2018-04-09T19:57"), "2018-04-09T21:23", "2018-04-09T22:00");
        assert_eq!(waits(&r), WaitPair { t1: 104, t2: Some(86) });
        let r = record(2, "2018-04-09T19:39", None, "2018-04-09T21:23", "2018-04-09T22:00");
        assert_eq!(waits(&r).t2, None);
        let r = record(3, "2018-04-09T19:39", Some("2018-04-09T21:23"), "2018-04-09T21:23", "2018-04-09T22:00");
        assert_eq!(waits(&r).t2, Some(0));
    }

    #[test]
    fn split_five_years() {
        let b = SplitBoundaries::five_years(2014);
        let recs: Vec<PatientRecord> = (2014..2019)
            .enumerate()
            .map(|(i, y)| {
                let reg = format!("{y}-06-01T10:00");
                record(i as u64, &reg, None, &format!("{y}-06-01T11:00"), &format!("{y}-06-01T12:00"))
            })
            .collect();
        let s = split(&recs, &b);
        assert_eq!(s.train.len(), 4);
        assert_eq!(s.holdout.len(), 1);
        assert_eq!(s.holdout[0].t_reg.date().to_string(), "2017-06-01");
        assert_eq!(s.test.len(), 1);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn split_boundary_instant_goes_to_test() {
        let b = SplitBoundaries::five_years(2014);
        let r = record(1, "2018-01-01T00:00", None, "2018-01-01T01:00", "2018-01-01T02:00");
        let s = split(&[r], &b);
        assert_eq!(s.test.len(), 1);
        assert!(s.train.is_empty());
    }

    #[test]
    fn split_single_year_warns() {
        let b = SplitBoundaries::five_years(2014);
        let r = record(1, "2015-03-01T00:00", None, "2015-03-01T01:00", "2015-03-01T02:00");
        let s = split(&[r], &b);
        assert_eq!(s.train.len(), 1);
        assert_eq!(s.warnings.len(), 2);
    }

    #[test]
    fn write_then_parse_round_trips() {
        let recs = vec![
            record(1, "2018-04-09T19:39", Some("2018-04-09T19:57"), "2018-04-09T21:23", "2018-04-09T22:00"),
            record(2, "2018-04-09T19:40", None, "2018-04-09T21:00", "2018-04-09T22:00"),
        ];
        let mut buf = Vec::new();
        write_log(&mut buf, &["seed=1".into()], &recs).unwrap();
        let parsed = parse_log_reader(buf.as_slice()).unwrap();
        let (back, tally) = clean(&parsed.records);
        assert_eq!(tally.total(), 0);
        assert_eq!(back, recs);
        let mut buf2 = Vec::new();
        write_log(&mut buf2, &["seed=1".into()], &back).unwrap();
        assert_eq!(buf, buf2);
    }
}
