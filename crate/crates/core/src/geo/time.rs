//! Integer 5-minute time indexing.

use std::fmt;

use chrono::{DateTime, Duration, NaiveTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STEP_SECONDS: i64 = 300;
pub const STEPS_PER_DAY: i64 = 288;
pub const STEPS_PER_HOUR: i64 = 12;

/// Count of 5-minute steps since a dataset epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeIndex(pub i64);

impl TimeIndex {
    pub fn value(self) -> i64 {
        self.0
    }

    pub fn offset(self, steps: i64) -> TimeIndex {
        TimeIndex(self.0 + steps)
    }

    /// Steps since the most recent midnight (epochs sit on midnight).
    pub fn step_of_day(self) -> i64 {
        self.0.rem_euclid(STEPS_PER_DAY)
    }
}

impl fmt::Display for TimeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn timestamp_to_index(t: DateTime<Utc>, epoch: DateTime<Utc>) -> Result<TimeIndex> {
    let d = t - epoch;
    let secs = d.num_seconds();
    if d.subsec_nanos() != 0 || secs.rem_euclid(STEP_SECONDS) != 0 {
        return Err(Error::Alignment(t.to_rfc3339()));
    }
    Ok(TimeIndex(secs.div_euclid(STEP_SECONDS)))
}

pub fn index_to_timestamp(idx: TimeIndex, epoch: DateTime<Utc>) -> DateTime<Utc> {
    epoch + Duration::seconds(idx.0 * STEP_SECONDS)
}

/// Midnight UTC of the day containing `t`.
pub fn midnight_epoch(t: DateTime<Utc>) -> DateTime<Utc> {
    t.date_naive().and_time(NaiveTime::MIN).and_utc()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn epoch() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn known_offsets() {
        let e = epoch();
        assert_eq!(timestamp_to_index(e, e).unwrap(), TimeIndex(0));
        assert_eq!(timestamp_to_index(e + Duration::days(1), e).unwrap(), TimeIndex(288));
        assert_eq!(timestamp_to_index(e + Duration::hours(4), e).unwrap(), TimeIndex(48));
        assert_eq!(timestamp_to_index(e - Duration::minutes(10), e).unwrap(), TimeIndex(-2));
    }

    #[test]
    fn off_boundary_rejected() {
        let e = epoch();
        assert!(timestamp_to_index(e + Duration::minutes(7), e).is_err());
        assert!(timestamp_to_index(e + Duration::milliseconds(300_001), e).is_err());
    }

    #[test]
    fn midnight_epoch_truncates() {
        let t = Utc.with_ymd_and_hms(2021, 6, 3, 13, 25, 0).unwrap();
        assert_eq!(midnight_epoch(t), Utc.with_ymd_and_hms(2021, 6, 3, 0, 0, 0).unwrap());
    }

    proptest! {
        #[test]
        fn round_trip_exact(k in -10_000_000i64..10_000_000) {
            let e = epoch();
            let t = index_to_timestamp(TimeIndex(k), e);
            prop_assert_eq!(timestamp_to_index(t, e).unwrap(), TimeIndex(k));
        }
    }
}
