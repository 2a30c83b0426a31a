//! UTC helpers: Julian dates, sidereal time and second-resolution offsets.

use chrono::{DateTime, Duration, TimeZone, Utc};
use std::f64::consts::TAU;

const UNIX_EPOCH_JD: f64 = 2_440_587.5;
const J2000_JD: f64 = 2_451_545.0;

/// Seconds since the Unix epoch as a float (sub-nanosecond detail is dropped).
pub fn unix_seconds(t: DateTime<Utc>) -> f64 {
    t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9
}

pub fn julian_date(t: DateTime<Utc>) -> f64 {
    unix_seconds(t) / 86_400.0 + UNIX_EPOCH_JD
}

/// Greenwich mean sidereal time in radians, `[0, 2π)`.
///
/// IAU-82 polynomial in UT1 centuries; UT1−UTC is ignored.
pub fn gmst(t: DateTime<Utc>) -> f64 {
    // Work from J2000 directly so the large JD offset does not eat precision.
    let days = (unix_seconds(t) - (J2000_JD - UNIX_EPOCH_JD) * 86_400.0) / 86_400.0;
    let tut1 = days / 36_525.0;
    let seconds = -6.2e-6 * tut1 * tut1 * tut1
        + 0.093_104 * tut1 * tut1
        + (876_600.0 * 3600.0 + 8_640_184.812_866) * tut1
        + 67_310.548_41;
    (seconds * (TAU / 86_400.0)).rem_euclid(TAU)
}

/// `t + seconds`, rounded to the nearest nanosecond.
pub fn offset(t: DateTime<Utc>, seconds: f64) -> DateTime<Utc> {
    t + Duration::nanoseconds((seconds * 1e9).round() as i64)
}

/// `(b − a)` in seconds.
pub fn seconds_between(a: DateTime<Utc>, b: DateTime<Utc>) -> f64 {
    let d = b - a;
    match d.num_nanoseconds() {
        Some(ns) => ns as f64 * 1e-9,
        None => d.num_milliseconds() as f64 * 1e-3,
    }
}

/// Start of the UTC year.
pub fn year_start(year: i32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0)
        .single()
        .expect("January 1st midnight is always a valid UTC instant")
}
