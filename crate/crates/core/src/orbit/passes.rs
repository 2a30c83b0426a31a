use chrono::{DateTime, Utc};
use nalgebra::Vector3;
use serde::Serialize;

use super::time::{offset, seconds_between};
use super::topocentric::{teme_to_ecef, GroundSite, TopocentricState};
use super::{Orbit, OrbitError};

pub const MAX_SEARCH_WINDOW_DAYS: f64 = 7.0;

const COARSE_STEP_S: f64 = 10.0;
const CROSSING_TOLERANCE_S: f64 = 0.1;
const RATE_SAMPLE_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassWindow {
    pub aos: DateTime<Utc>,
    pub los: DateTime<Utc>,
    /// Time of maximum elevation.
    pub culmination: DateTime<Utc>,
    pub max_elevation: f64,
    pub max_angular_rate: f64,
}

impl PassWindow {
    pub fn duration_s(&self) -> f64 {
        seconds_between(self.aos, self.los)
    }
}

fn elevation(orbit: &Orbit, site: &GroundSite, t: DateTime<Utc>) -> Result<f64, OrbitError> {
    Ok(orbit.topocentric(site, t)?.elevation)
}

/// Bisects the horizon crossing between `a` (elevation sign `rising_below`) and `b`.
fn bisect_horizon(
    orbit: &Orbit,
    site: &GroundSite,
    mut a: DateTime<Utc>,
    mut b: DateTime<Utc>,
) -> Result<DateTime<Utc>, OrbitError> {
    let above_at_a = elevation(orbit, site, a)? >= 0.0;
    while seconds_between(a, b) > CROSSING_TOLERANCE_S {
        let mid = offset(a, seconds_between(a, b) / 2.0);
        if (elevation(orbit, site, mid)? >= 0.0) == above_at_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    // Return the endpoint that lies inside the pass.
    Ok(if above_at_a { a } else { b })
}

/// Golden-section search for the elevation maximum in `[a, b]`.
fn culmination(
    orbit: &Orbit,
    site: &GroundSite,
    a: DateTime<Utc>,
    b: DateTime<Utc>,
) -> Result<(DateTime<Utc>, f64), OrbitError> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let span = seconds_between(a, b);
    let (mut lo, mut hi) = (0.0, span);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = elevation(orbit, site, offset(a, x1))?;
    let mut f2 = elevation(orbit, site, offset(a, x2))?;
    while hi - lo > 1e-3 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = elevation(orbit, site, offset(a, x2))?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = elevation(orbit, site, offset(a, x1))?;
        }
    }
    let t = offset(a, (lo + hi) / 2.0);
    let mut best = (t, elevation(orbit, site, t)?);
    // Clipped windows can peak at an endpoint.
    for end in [a, b] {
        let e = elevation(orbit, site, end)?;
        if e > best.1 {
            best = (end, e);
        }
    }
    Ok(best)
}

/// Largest line-of-sight angular rate over `[aos, los]`, sampled at 1 s and at culmination.
pub fn max_angular_rate(pass: &PassWindow, orbit: &Orbit, site: &GroundSite) -> Result<f64, OrbitError> {
    let span = pass.duration_s();
    let n = (span / RATE_SAMPLE_S).ceil() as usize;
    let mut best = orbit.topocentric(site, pass.culmination)?.angular_rate;
    for i in 0..=n {
        let t = offset(pass.aos, (i as f64 * RATE_SAMPLE_S).min(span));
        best = best.max(orbit.topocentric(site, t)?.angular_rate);
    }
    Ok(best)
}

/// Passes above the horizon whose peak elevation reaches `min_elevation`, sorted by AOS.
///
/// Horizon crossings are bracketed on a 10 s grid and bisected to 0.1 s;
/// passes already in progress at either end of the window are clipped to it.
pub fn predict_passes(
    orbit: &Orbit,
    site: &GroundSite,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    min_elevation: f64,
) -> Result<Vec<PassWindow>, OrbitError> {
    site.validate()?;
    let span = seconds_between(start, end);
    if span <= 0.0 || span > MAX_SEARCH_WINDOW_DAYS * 86_400.0 {
        return Err(OrbitError::InvalidWindow);
    }
    if orbit.is_stale(start) || orbit.is_stale(end) {
        log::warn!(
            "pass search window extends beyond {} days from the element epoch",
            super::STALE_AFTER_DAYS
        );
    }

    let steps = (span / COARSE_STEP_S).ceil() as usize;
    let mut passes = Vec::new();
    let mut prev_t = start;
    let mut prev_up = elevation(orbit, site, start)? >= 0.0;
    let mut aos = if prev_up { Some(start) } else { None };

    for i in 1..=steps {
        let t = offset(start, (i as f64 * COARSE_STEP_S).min(span));
        let up = elevation(orbit, site, t)? >= 0.0;
        if up && !prev_up {
            aos = Some(bisect_horizon(orbit, site, prev_t, t)?);
        } else if !up && prev_up {
            let los = bisect_horizon(orbit, site, prev_t, t)?;
            if let Some(a) = aos.take() {
                push_pass(orbit, site, a, los, min_elevation, &mut passes)?;
            }
        }
        prev_t = t;
        prev_up = up;
    }
    if let Some(a) = aos {
        push_pass(orbit, site, a, end, min_elevation, &mut passes)?;
    }
    Ok(passes)
}

fn push_pass(
    orbit: &Orbit,
    site: &GroundSite,
    aos: DateTime<Utc>,
    los: DateTime<Utc>,
    min_elevation: f64,
    out: &mut Vec<PassWindow>,
) -> Result<(), OrbitError> {
    if los <= aos {
        return Ok(());
    }
    let (culm, max_el) = culmination(orbit, site, aos, los)?;
    if max_el < min_elevation {
        return Ok(());
    }
    let mut pass = PassWindow {
        aos,
        los,
        culmination: culm,
        max_elevation: max_el,
        max_angular_rate: 0.0,
    };
    pass.max_angular_rate = max_angular_rate(&pass, orbit, site)?;
    out.push(pass);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometrySample {
    /// Seconds after AOS.
    pub t: f64,
    pub topo: TopocentricState,
    /// Satellite position, Earth-fixed, km.
    pub sat_ecef: Vector3<f64>,
    /// Inertial velocity expressed on Earth-fixed axes, km/s.
    pub sat_velocity: Vector3<f64>,
}

/// Pass geometry sampled on a uniform grid from AOS to LOS.
#[derive(Debug, Clone)]
pub struct PassGeometry {
    pub pass: PassWindow,
    pub site: GroundSite,
    pub step: f64,
    pub samples: Vec<GeometrySample>,
}

impl PassGeometry {
    pub fn sample(orbit: &Orbit, site: &GroundSite, pass: &PassWindow, step: f64) -> Result<Self, OrbitError> {
        assert!(step > 0.0, "geometry step must be positive");
        let span = pass.duration_s();
        let n = (span / step).ceil().max(1.0) as usize;
        let mut samples = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let dt = (i as f64 * step).min(span);
            let time = offset(pass.aos, dt);
            let state = orbit.state_at(time)?;
            samples.push(GeometrySample {
                t: dt,
                topo: super::eci_to_topocentric(&state, site, time),
                sat_ecef: teme_to_ecef(&state.position, time),
                sat_velocity: teme_to_ecef(&state.velocity, time),
            });
        }
        Ok(Self {
            pass: *pass,
            site: *site,
            step,
            samples,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Index of the sample at or before `t` and the interpolation weight toward the next.
    fn locate(&self, t: f64) -> (usize, f64) {
        let last = self.samples.len() - 1;
        if t <= 0.0 || last == 0 {
            return (0, 0.0);
        }
        let i = ((t / self.step).floor() as usize).min(last - 1);
        let (a, b) = (self.samples[i].t, self.samples[i + 1].t);
        let w = if b > a { ((t - a) / (b - a)).clamp(0.0, 1.0) } else { 0.0 };
        (i, w)
    }

    fn lerp(&self, t: f64, f: impl Fn(&GeometrySample) -> f64) -> f64 {
        let (i, w) = self.locate(t);
        if w == 0.0 {
            return f(&self.samples[i]);
        }
        f(&self.samples[i]) * (1.0 - w) + f(&self.samples[i + 1]) * w
    }

    pub fn elevation_at(&self, t: f64) -> f64 {
        self.lerp(t, |s| s.topo.elevation)
    }

    pub fn range_at(&self, t: f64) -> f64 {
        self.lerp(t, |s| s.topo.range)
    }

    pub fn angular_rate_at(&self, t: f64) -> f64 {
        self.lerp(t, |s| s.topo.angular_rate)
    }
}
