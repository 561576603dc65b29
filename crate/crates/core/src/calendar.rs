//! Minute-resolution timestamps and the holiday calendar shared by the
//! simulator and the calendar features.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_HOUR: i64 = 60;
pub const MINUTES_PER_DAY: i64 = 24 * 60;
pub const HOURS_PER_WEEK: usize = 168;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

/// Minutes since 1970-01-01T00:00 (naive local clock).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Minute(pub i64);

impl Minute {
    pub fn from_datetime(dt: NaiveDateTime) -> Self {
        Minute(dt.and_utc().timestamp().div_euclid(60))
    }

    pub fn from_date(date: NaiveDate) -> Self {
        Self::from_datetime(date.and_hms_opt(0, 0, 0).expect("midnight is valid"))
    }

    pub fn to_datetime(self) -> NaiveDateTime {
        chrono::DateTime::from_timestamp(self.0 * 60, 0)
            .expect("timestamp within chrono range")
            .naive_utc()
    }

    pub fn date(self) -> NaiveDate {
        self.to_datetime().date()
    }

    /// Start of the clock hour containing this minute.
    pub fn hour_floor(self) -> Minute {
        Minute(self.0.div_euclid(MINUTES_PER_HOUR) * MINUTES_PER_HOUR)
    }

    /// Absolute hour index (hours since the epoch).
    pub fn hour_index(self) -> i64 {
        self.0.div_euclid(MINUTES_PER_HOUR)
    }

    pub fn hour_of_day(self) -> u32 {
        self.0.rem_euclid(MINUTES_PER_DAY) as u32 / 60
    }

    /// Zero-based hour of the week with Monday 00:00-00:59 as 0.
    pub fn hour_of_week0(self) -> usize {
        let dow0 = self.date().weekday().num_days_from_monday() as usize;
        dow0 * 24 + self.hour_of_day() as usize
    }

    pub fn plus_minutes(self, m: i64) -> Minute {
        Minute(self.0 + m)
    }

    pub fn minutes_since(self, earlier: Minute) -> i64 {
        self.0 - earlier.0
    }
}

impl fmt::Display for Minute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_datetime().format(TIMESTAMP_FORMAT))
    }
}

impl FromStr for Minute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
            .map(Minute::from_datetime)
            .map_err(|e| Error::Parse(format!("bad timestamp {s:?}: {e}")))
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Parse(format!("bad date {s:?}: {e}")))
}

/// Three-level holiday code: 0 normal day, 1 holiday, 2 a day around Christmas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HolidayCode {
    Normal = 0,
    Holiday = 1,
    AroundChristmas = 2,
}

impl HolidayCode {
    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Recurring (month, day) holidays plus the window of days around Christmas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolidayCalendar {
    pub holidays: Vec<(u32, u32)>,
    pub around_christmas: Vec<(u32, u32)>,
}

impl Default for HolidayCalendar {
    fn default() -> Self {
        let mut around = vec![(12, 20), (12, 21), (12, 22), (12, 23), (12, 24)];
        around.extend((27..=31).map(|d| (12, d)));
        HolidayCalendar {
            holidays: vec![(1, 1), (12, 25), (12, 26)],
            around_christmas: around,
        }
    }
}

impl HolidayCalendar {
    /// Parses `MM-DD` strings for both day lists.
    pub fn from_month_days(holidays: &[String], around_christmas: &[String]) -> Result<Self> {
        fn parse(list: &[String]) -> Result<Vec<(u32, u32)>> {
            list.iter()
                .map(|s| {
                    let (m, d) = s
                        .split_once('-')
                        .ok_or_else(|| Error::Config(format!("expected MM-DD, got {s:?}")))?;
                    let m: u32 = m.parse().map_err(|_| Error::Config(format!("bad month in {s:?}")))?;
                    let d: u32 = d.parse().map_err(|_| Error::Config(format!("bad day in {s:?}")))?;
                    if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
                        return Err(Error::Config(format!("out of range month-day {s:?}")));
                    }
                    Ok((m, d))
                })
                .collect()
        }
        Ok(HolidayCalendar {
            holidays: parse(holidays)?,
            around_christmas: parse(around_christmas)?,
        })
    }

    pub fn code(&self, date: NaiveDate) -> HolidayCode {
        let md = (date.month(), date.day());
        if self.holidays.contains(&md) {
            HolidayCode::Holiday
        } else if self.around_christmas.contains(&md) {
            HolidayCode::AroundChristmas
        } else {
            HolidayCode::Normal
        }
    }
}

/// Category-1 calendar values for one timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalendarValues {
    /// 1..=24
    pub hour_of_day: u32,
    /// 1..=168, Monday 00:00 is 1
    pub hour_of_week: u32,
    /// 1..=7, Monday is 1
    pub day_of_week: u32,
    /// 1..=12
    pub month: u32,
    pub holiday: HolidayCode,
}

pub fn calendar_values(t: Minute, calendar: &HolidayCalendar) -> CalendarValues {
    let dt = t.to_datetime();
    let day_of_week = dt.weekday().number_from_monday();
    let hour_of_day = dt.hour() + 1;
    CalendarValues {
        hour_of_day,
        hour_of_week: (day_of_week - 1) * 24 + hour_of_day,
        day_of_week,
        month: dt.month(),
        holiday: calendar.code(dt.date()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> Minute {
        s.parse().unwrap()
    }

    #[test]
    fn timestamp_round_trip() {
        let t = ts("2018-04-09T19:39");
        assert_eq!(t.to_string(), "2018-04-09T19:39");
        assert_eq!(ts("2018-04-09T21:23").minutes_since(t), 104);
    }

    #[test]
    fn monday_half_past_midnight() {
        // 2018-04-09 was a Monday.
        let v = calendar_values(ts("2018-04-09T00:30"), &HolidayCalendar::default());
        assert_eq!((v.day_of_week, v.hour_of_day, v.hour_of_week), (1, 1, 1));
    }

    #[test]
    fn sunday_last_hour_is_168() {
        let t = ts("2018-04-15T23:59");
        let v = calendar_values(t, &HolidayCalendar::default());
        assert_eq!((v.day_of_week, v.hour_of_day, v.hour_of_week), (7, 24, 168));
        assert_eq!(t.hour_of_week0(), 167);
        assert_eq!(t.plus_minutes(1).hour_of_week0(), 0);
    }

    #[test]
    fn christmas_codes() {
        let cal = HolidayCalendar::default();
        let d = |s: &str| parse_date(s).unwrap();
        assert_eq!(cal.code(d("2016-12-25")), HolidayCode::Holiday);
        assert_eq!(cal.code(d("2016-12-24")), HolidayCode::AroundChristmas);
        assert_eq!(cal.code(d("2016-07-14")), HolidayCode::Normal);
    }

    #[test]
    fn month_always_in_range() {
        let cal = HolidayCalendar::default();
        let start = ts("2014-01-01T00:00");
        for k in 0..2000 {
            let v = calendar_values(start.plus_minutes(k * 1009), &cal);
            assert!((1..=12).contains(&v.month));
            assert!((1..=168).contains(&v.hour_of_week));
        }
    }
}
