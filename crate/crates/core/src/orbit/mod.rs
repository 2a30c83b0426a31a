//! Orbit propagation, topocentric geometry and pass prediction.

mod passes;
mod sgp4;
pub mod time;
mod tle;
mod topocentric;

use chrono::{DateTime, Utc};
use thiserror::Error;

pub use passes::{
    max_angular_rate, predict_passes, GeometrySample, PassGeometry, PassWindow, MAX_SEARCH_WINDOW_DAYS,
};
pub use sgp4::{Sgp4, StateVector, EARTH_RADIUS_KM};
pub use tle::{checksum, parse_tle_file, TleError, TwoLineElement, LINE_LENGTH};
pub use topocentric::{eci_to_topocentric, teme_to_ecef, GroundSite, TopocentricState, RATE_STEP_S};

/// Element sets older (or newer) than this are flagged as stale.
pub const STALE_AFTER_DAYS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrbitError {
    #[error(transparent)]
    Tle(#[from] TleError),
    #[error("invalid elements: {0}")]
    InvalidElements(&'static str),
    #[error("orbital period {period_minutes:.1} min needs the deep-space propagator, which is not supported")]
    DeepSpace { period_minutes: f64 },
    #[error("orbit decayed {minutes:.3} min from epoch (radius {radius_km:.1} km)")]
    DecayedOrbit { radius_km: f64, minutes: f64 },
    #[error("mean eccentricity {eccentricity} left the valid range {minutes:.3} min from epoch")]
    EccentricityOutOfRange { eccentricity: f64, minutes: f64 },
    #[error("semi-latus rectum went negative {minutes:.3} min from epoch")]
    NegativeSemiLatusRectum { minutes: f64 },
    #[error("invalid ground site: {0}")]
    InvalidSite(String),
    #[error("search window must satisfy start < end and span at most {MAX_SEARCH_WINDOW_DAYS} days")]
    InvalidWindow,
}

/// A parsed element set bound to its initialised propagator.
#[derive(Debug, Clone)]
pub struct Orbit {
    tle: TwoLineElement,
    sgp4: Sgp4,
}

impl Orbit {
    pub fn new(tle: TwoLineElement) -> Result<Self, OrbitError> {
        let sgp4 = Sgp4::new(&tle)?;
        Ok(Self { tle, sgp4 })
    }

    pub fn tle(&self) -> &TwoLineElement {
        &self.tle
    }

    pub fn epoch(&self) -> DateTime<Utc> {
        self.tle.epoch
    }

    /// Whether `t` is further than [`STALE_AFTER_DAYS`] from the element epoch.
    pub fn is_stale(&self, t: DateTime<Utc>) -> bool {
        time::seconds_between(self.tle.epoch, t).abs() > STALE_AFTER_DAYS * 86_400.0
    }

    /// TEME state at `t`. Stale element sets are still propagated.
    pub fn state_at(&self, t: DateTime<Utc>) -> Result<StateVector, OrbitError> {
        self.sgp4
            .propagate_minutes(time::seconds_between(self.tle.epoch, t) / 60.0)
    }

    pub fn topocentric(&self, site: &GroundSite, t: DateTime<Utc>) -> Result<TopocentricState, OrbitError> {
        Ok(eci_to_topocentric(&self.state_at(t)?, site, t))
    }
}

/// One-shot propagation; logs a warning for stale element sets.
pub fn propagate(tle: &TwoLineElement, t: DateTime<Utc>) -> Result<StateVector, OrbitError> {
    let orbit = Orbit::new(tle.clone())?;
    if orbit.is_stale(t) {
        log::warn!(
            "element set for satellite {} is more than {STALE_AFTER_DAYS} days from {t}",
            tle.satellite_number
        );
    }
    orbit.state_at(t)
}
