use chrono::{DateTime, Utc};
use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::sgp4::StateVector;
use super::time::{gmst, offset};
use super::OrbitError;

const WGS84_A_KM: f64 = 6378.137;
const WGS84_F: f64 = 1.0 / 298.257_223_563;

/// Step of the symmetric difference used for az/el rates, seconds.
pub const RATE_STEP_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundSite {
    /// Geodetic latitude, degrees.
    pub latitude: f64,
    /// Degrees east.
    pub longitude: f64,
    /// Meters above the WGS-84 ellipsoid.
    pub altitude: f64,
}

impl GroundSite {
    pub fn new(latitude: f64, longitude: f64, altitude: f64) -> Result<Self, OrbitError> {
        let site = Self {
            latitude,
            longitude,
            altitude,
        };
        site.validate()?;
        Ok(site)
    }

    pub fn validate(&self) -> Result<(), OrbitError> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(OrbitError::InvalidSite(format!("latitude {} outside [-90, 90]", self.latitude)));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(OrbitError::InvalidSite(format!(
                "longitude {} outside [-180, 180]",
                self.longitude
            )));
        }
        if !self.altitude.is_finite() {
            return Err(OrbitError::InvalidSite("altitude is not finite".into()));
        }
        Ok(())
    }

    /// Earth-fixed position, km.
    pub fn ecef(&self) -> Vector3<f64> {
        let (sl, cl) = self.latitude.to_radians().sin_cos();
        let (so, co) = self.longitude.to_radians().sin_cos();
        let e2 = WGS84_F * (2.0 - WGS84_F);
        let n = WGS84_A_KM / (1.0 - e2 * sl * sl).sqrt();
        let h = self.altitude / 1000.0;
        Vector3::new((n + h) * cl * co, (n + h) * cl * so, (n * (1.0 - e2) + h) * sl)
    }

    /// Local east, north and up unit vectors in the Earth-fixed frame.
    pub fn enu_basis(&self) -> [Vector3<f64>; 3] {
        let (sl, cl) = self.latitude.to_radians().sin_cos();
        let (so, co) = self.longitude.to_radians().sin_cos();
        [
            Vector3::new(-so, co, 0.0),
            Vector3::new(-sl * co, -sl * so, cl),
            Vector3::new(cl * co, cl * so, sl),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TopocentricState {
    pub time: DateTime<Utc>,
    /// Degrees clockwise from North, `[0, 360)`.
    pub azimuth: f64,
    pub elevation: f64,
    pub range: f64,
    /// Degrees per second.
    pub azimuth_rate: f64,
    pub elevation_rate: f64,
    /// Magnitude of the line-of-sight rotation rate, degrees per second.
    pub angular_rate: f64,
}

/// Rotates a TEME vector into the Earth-fixed frame (polar motion ignored).
pub fn teme_to_ecef(v: &Vector3<f64>, t: DateTime<Utc>) -> Vector3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), -gmst(t)) * v
}

fn line_of_sight(position_teme: &Vector3<f64>, site: &GroundSite, t: DateTime<Utc>) -> Vector3<f64> {
    teme_to_ecef(position_teme, t) - site.ecef()
}

fn az_el(los: &Vector3<f64>, site: &GroundSite) -> (f64, f64) {
    let [e, n, u] = site.enu_basis();
    let (le, ln, lu) = (los.dot(&e), los.dot(&n), los.dot(&u));
    let az = le.atan2(ln).to_degrees().rem_euclid(360.0);
    let el = lu.atan2(le.hypot(ln)).to_degrees();
    (az, el)
}

/// Azimuth, elevation, range and rates seen from `site`.
///
/// Rates come from a symmetric difference over [`RATE_STEP_S`], extrapolating
/// the inertial state linearly to either side of `t`.
pub fn eci_to_topocentric(state: &StateVector, site: &GroundSite, t: DateTime<Utc>) -> TopocentricState {
    let los = line_of_sight(&state.position, site, t);
    let (azimuth, elevation) = az_el(&los, site);

    let h = RATE_STEP_S / 2.0;
    let t_minus = offset(t, -h);
    let t_plus = offset(t, h);
    let los_minus = line_of_sight(&(state.position - state.velocity * h), site, t_minus);
    let los_plus = line_of_sight(&(state.position + state.velocity * h), site, t_plus);
    let (az0, el0) = az_el(&los_minus, site);
    let (az1, el1) = az_el(&los_plus, site);
    let daz = (az1 - az0 + 540.0).rem_euclid(360.0) - 180.0;
    let swept = los_minus.angle(&los_plus).to_degrees();

    TopocentricState {
        time: t,
        azimuth,
        elevation,
        range: los.norm(),
        azimuth_rate: daz / RATE_STEP_S,
        elevation_rate: (el1 - el0) / RATE_STEP_S,
        angular_rate: swept / RATE_STEP_S,
    }
}
