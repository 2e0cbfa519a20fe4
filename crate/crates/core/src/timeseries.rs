//! Hourly timestamp helpers shared by the CSV readers.

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};

pub type Timestamp = NaiveDateTime;

/// Parses an ISO-8601 timestamp. Offsets are converted to UTC; naive
/// timestamps are taken as UTC.
pub fn parse_timestamp(text: &str) -> Result<Timestamp, String> {
    let text = text.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Ok(t.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(text, fmt) {
            return Ok(t);
        }
    }
    Err(format!("unrecognised timestamp {text:?}"))
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

pub fn hours_between(a: &Timestamp, b: &Timestamp) -> i64 {
    (*b - *a).num_hours()
}

pub fn add_hours(t: &Timestamp, hours: i64) -> Timestamp {
    *t + Duration::hours(hours)
}

/// `(year, month)` of a timestamp.
pub fn month_of(t: &Timestamp) -> (i32, u32) {
    (t.year(), t.month())
}

pub fn hour_of_day(t: &Timestamp) -> u32 {
    t.hour()
}

/// Midnight of 1 January of `year`.
pub fn year_start(year: i32) -> Timestamp {
    NaiveDate::from_ymd_opt(year, 1, 1)
        .expect("valid year")
        .and_hms_opt(0, 0, 0)
        .expect("valid time")
}

/// True when `t` sits exactly on an hour boundary.
pub fn is_on_hour(t: &Timestamp) -> bool {
    t.minute() == 0 && t.second() == 0 && t.nanosecond() == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_forms() {
        let a = parse_timestamp("2024-03-01T05:00:00").unwrap();
        let b = parse_timestamp("2024-03-01T00:00:00-05:00").unwrap();
        let c = parse_timestamp("2024-03-01 05:00").unwrap();
        let d = parse_timestamp("2024-03-01T05:00:00Z").unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a, d);
        assert!(parse_timestamp("yesterday").is_err());
        assert_eq!(format_timestamp(&a), "2024-03-01T05:00:00");
    }

    #[test]
    fn hour_arithmetic() {
        let t = year_start(2024);
        let u = add_hours(&t, 24 * 31);
        assert_eq!(month_of(&u), (2024, 2));
        assert_eq!(hours_between(&t, &u), 744);
        assert!(is_on_hour(&u));
    }
}
