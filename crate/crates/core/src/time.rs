//! Timestamps and the server clock.
//!
//! Every timestamp the system stores is UTC with millisecond precision and is
//! rendered as RFC 3339 with exactly three fractional digits and a `Z` suffix.

use std::sync::Mutex;

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};

pub type Timestamp = DateTime<Utc>;

/// Drops everything below the millisecond.
pub fn truncate_ms(ts: Timestamp) -> Timestamp {
    let millis = ts.timestamp_millis();
    Utc.timestamp_millis_opt(millis)
        .single()
        .expect("millisecond timestamp derived from a valid DateTime")
}

pub fn format_ts(ts: &Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Parses an RFC 3339 timestamp, rejecting sub-millisecond precision so that
/// a parsed value always formats back to an equivalent instant.
pub fn parse_ts(s: &str) -> Result<Timestamp, String> {
    let parsed = DateTime::parse_from_rfc3339(s)
        .map_err(|e| format!("invalid RFC 3339 timestamp {s:?}: {e}"))?
        .with_timezone(&Utc);
    if truncate_ms(parsed) != parsed {
        return Err(format!("timestamp {s:?} has sub-millisecond precision"));
    }
    Ok(parsed)
}

pub(crate) fn seconds_between(from: Timestamp, to: Timestamp) -> f64 {
    (to - from).num_milliseconds() as f64 / 1000.0
}

/// serde adapter for [`Timestamp`] fields using the canonical text form.
pub mod serde_ts {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::{format_ts, parse_ts, Timestamp};

    pub fn serialize<S: Serializer>(ts: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_ts(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        let raw = String::deserialize(d)?;
        parse_ts(&raw).map_err(serde::de::Error::custom)
    }
}

/// Source of "now" for the session engine. The server clock is authoritative;
/// client-reported times are only ever stored as payload.
pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        truncate_ms(Utc::now())
    }
}

/// A clock that only moves when told to. Used by tests and fixtures.
#[derive(Debug)]
pub struct ManualClock {
    now: Mutex<Timestamp>,
}

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        Self {
            now: Mutex::new(truncate_ms(start)),
        }
    }

    pub fn set(&self, ts: Timestamp) {
        *self.now.lock().unwrap_or_else(|e| e.into_inner()) = truncate_ms(ts);
    }

    pub fn advance(&self, by: Duration) {
        let mut now = self.now.lock().unwrap_or_else(|e| e.into_inner());
        *now = truncate_ms(*now + by);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        *self.now.lock().unwrap_or_else(|e| e.into_inner())
    }
}
