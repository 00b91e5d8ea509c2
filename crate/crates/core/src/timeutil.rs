//! Calendar constants and timestamp helpers shared across the pipeline.

use chrono::{DateTime, Duration, NaiveDate, SecondsFormat, Utc};

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const DAYS_PER_YEAR: f64 = 365.25;
/// Half of [`DAYS_PER_YEAR`].
pub const SIX_MONTHS_DAYS: f64 = 182.625;

/// Midnight UTC at the start of `date`.
pub fn start_of_day(date: NaiveDate) -> DateTime<Utc> {
    date.and_hms_opt(0, 0, 0).unwrap().and_utc()
}

/// Fractional days between two instants (`to - from`).
pub fn days_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    (to - from).num_milliseconds() as f64 / 1000.0 / SECONDS_PER_DAY
}

pub fn years_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    days_between(from, to) / DAYS_PER_YEAR
}

/// Converts fractional days into a millisecond-resolution duration.
pub fn duration_from_days(days: f64) -> Duration {
    Duration::milliseconds((days * SECONDS_PER_DAY * 1000.0).round() as i64)
}

/// Canonical text form used in every persisted file.
pub fn format_ts(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn parse_ts(s: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
    DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc))
}

/// Truncates to whole milliseconds so that persisted values round-trip.
pub fn truncate_millis(ts: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(ts.timestamp_millis()).unwrap()
}

/// Serde adapter writing timestamps with fixed millisecond precision.
pub mod ts_millis {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_ts(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        parse_ts(&raw).map_err(serde::de::Error::custom)
    }
}
