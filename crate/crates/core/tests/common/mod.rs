#![allow(dead_code)]

use chrono::{DateTime, Datelike, TimeZone, Timelike, Utc};
use qkdsim_core::orbit::{checksum, predict_passes, time, time::offset, GroundSite, Orbit, PassGeometry, PassWindow, TwoLineElement};

pub const MU_KM3_S2: f64 = 398_600.8;
pub const EARTH_RADIUS_KM: f64 = 6378.135;

pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 3, 20, 6, 0, 0).unwrap()
}

pub fn equatorial_site() -> GroundSite {
    GroundSite {
        latitude: 0.0,
        longitude: 103.8,
        altitude: 0.0,
    }
}

fn with_checksum(body: String) -> String {
    assert_eq!(body.len(), 68, "{body:?}");
    let c = checksum(&format!("{body}0"));
    format!("{body}{c}")
}

/// Two-body mean motion of a circular orbit, revolutions per day.
pub fn mean_motion_rev_day(altitude_km: f64) -> f64 {
    let a = EARTH_RADIUS_KM + altitude_km;
    (MU_KM3_S2 / a.powi(3)).sqrt() * 86_400.0 / std::f64::consts::TAU
}

/// Element set whose satellite sits at the node directly above `site`
/// (on the equator) at `epoch`, in an orbit of inclination `inclination`.
pub fn overhead_tle(altitude_km: f64, inclination: f64, site: &GroundSite, epoch: DateTime<Utc>) -> TwoLineElement {
    assert_eq!(site.latitude, 0.0);
    let raan = (time::gmst(epoch).to_degrees() + site.longitude).rem_euclid(360.0);
    let day = epoch.ordinal() as f64 + epoch.num_seconds_from_midnight() as f64 / 86_400.0;
    let yy = epoch.year() % 100;
    let l1 = with_checksum(format!("1 99990U 26001A   {yy:02}{day:012.8}  .00000000  00000-0  00000-0 0  999"));
    let l2 = with_checksum(format!(
        "2 99990 {inclination:8.4} {raan:8.4} 0000001 {:8.4} {:8.4} {:11.8}{:5}",
        0.0,
        0.0,
        mean_motion_rev_day(altitude_km),
        1
    ));
    TwoLineElement::from_lines(Some("OVERHEAD"), &l1, &l2).unwrap()
}

/// Polar circular orbit culminating at the zenith of an equatorial site at epoch.
pub fn zenith_pass(altitude_km: f64) -> (Orbit, GroundSite, PassWindow) {
    let site = equatorial_site();
    let orbit = Orbit::new(overhead_tle(altitude_km, 90.0, &site, epoch())).unwrap();
    let passes = predict_passes(&orbit, &site, offset(epoch(), -1200.0), offset(epoch(), 1200.0), 10.0).unwrap();
    assert_eq!(passes.len(), 1, "{passes:?}");
    (orbit, site, passes[0])
}

pub fn zenith_geometry(altitude_km: f64) -> PassGeometry {
    let (orbit, site, pass) = zenith_pass(altitude_km);
    PassGeometry::sample(&orbit, &site, &pass, 1.0).unwrap()
}

/// Seconds from AOS to culmination.
pub fn culmination_offset(geometry: &PassGeometry) -> f64 {
    time::seconds_between(geometry.pass.aos, geometry.pass.culmination)
}
