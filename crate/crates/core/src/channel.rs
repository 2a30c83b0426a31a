//! Downlink link budget and photon thinning.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::rng;
use crate::source::PairEventStream;

/// Transmittance floor for the pointing term (300 dB).
const MIN_POINTING_FRACTION: f64 = 1e-30;
/// Below this elevation the airmass model is held at its 5° value.
pub const MIN_MODEL_ELEVATION_DEG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("range must be positive, got {0} km")]
    NonpositiveRange(f64),
    #[error("elevation must be positive, got {0} deg")]
    NonpositiveElevation(f64),
    #[error("residual pointing error must be non-negative, got {0} arcsec")]
    NegativeResidual(f64),
    #[error("link profile does not cover t = {0:.6} s")]
    ProfileGap(f64),
    #[error("invalid link configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Full-angle 1/e² divergence, radians.
    pub tx_divergence: f64,
    /// Meters.
    pub rx_aperture_diameter: f64,
    /// Area fraction blocked by the secondary mirror.
    pub rx_obstruction_fraction: f64,
    /// dB at zenith.
    pub zenith_atmospheric_loss: f64,
    pub optics_efficiency: f64,
    /// Quantum receiver field of view, arcsec (full angle).
    pub qfov: f64,
    /// 1/e² radius of the focused spot, arcsec; defaults to `qfov / 2`.
    pub spot_radius: Option<f64>,
    /// Field-stop radius, arcsec; defaults to `qfov / 2`.
    pub stop_radius: Option<f64>,
    /// Counts/s through the full field and aperture at zenith.
    pub sky_background_rate_zenith: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            tx_divergence: 20e-6,
            rx_aperture_diameter: 0.6,
            rx_obstruction_fraction: 0.1,
            zenith_atmospheric_loss: 3.0,
            optics_efficiency: 0.5,
            qfov: 15.0,
            spot_radius: None,
            stop_radius: None,
            sky_background_rate_zenith: 500.0,
        }
    }
}

impl LinkConfig {
    pub fn spot_radius(&self) -> f64 {
        self.spot_radius.unwrap_or(self.qfov / 2.0)
    }

    pub fn stop_radius(&self) -> f64 {
        self.stop_radius.unwrap_or(self.qfov / 2.0)
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        let positive = [
            ("tx_divergence", self.tx_divergence),
            ("rx_aperture_diameter", self.rx_aperture_diameter),
            ("qfov", self.qfov),
            ("spot_radius", self.spot_radius()),
            ("stop_radius", self.stop_radius()),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LinkError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.rx_obstruction_fraction) {
            return Err(LinkError::InvalidConfig("rx_obstruction_fraction must lie in [0, 1)".into()));
        }
        if !(self.optics_efficiency > 0.0 && self.optics_efficiency <= 1.0) {
            return Err(LinkError::InvalidConfig("optics_efficiency must lie in (0, 1]".into()));
        }
        if !(self.zenith_atmospheric_loss >= 0.0) || !(self.sky_background_rate_zenith >= 0.0) {
            return Err(LinkError::InvalidConfig(
                "zenith_atmospheric_loss and sky_background_rate_zenith must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

pub fn db_to_fraction(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn fraction_to_db(fraction: f64) -> f64 {
    -10.0 * fraction.log10()
}

/// Far-field beam spread: aperture area over beam area at `range_km`, capped at full capture.
pub fn geometric_loss(range_km: f64, config: &LinkConfig) -> Result<f64, LinkError> {
    if !(range_km > 0.0) {
        return Err(LinkError::NonpositiveRange(range_km));
    }
    let aperture_area =
        PI * (config.rx_aperture_diameter / 2.0).powi(2) * (1.0 - config.rx_obstruction_fraction);
    let beam_radius = range_km * 1e3 * config.tx_divergence / 2.0;
    let captured = aperture_area / (PI * beam_radius * beam_radius);
    Ok(fraction_to_db(captured.min(1.0)))
}

pub fn airmass(elevation_deg: f64) -> f64 {
    1.0 / elevation_deg.max(MIN_MODEL_ELEVATION_DEG).to_radians().sin()
}

pub fn atmospheric_loss(elevation_deg: f64, config: &LinkConfig) -> Result<f64, LinkError> {
    if !(elevation_deg > 0.0) {
        return Err(LinkError::NonpositiveElevation(elevation_deg));
    }
    if elevation_deg < MIN_MODEL_ELEVATION_DEG {
        log::warn!("elevation {elevation_deg:.2} deg is below the airmass model limit; using the 5 deg value");
    }
    Ok(config.zenith_atmospheric_loss * airmass(elevation_deg))
}

/// Fraction of a Gaussian spot (1/e² radius `w`) displaced by `d` that falls
/// inside a circular stop of radius `r`, by 2-D quadrature over the stop:
/// composite Simpson in radius, trapezoid (spectrally accurate for periodic
/// integrands) in angle. The radial range is trimmed to where the spot
/// carries weight (5 w, below e⁻⁵⁰).
pub fn spot_fraction_in_stop(d: f64, w: f64, r: f64) -> f64 {
    const NR: usize = 96;
    let reach = 5.0 * w;
    if d + reach <= r {
        return 1.0;
    }
    let lo = (d - reach).max(0.0);
    let hi = (d + reach).min(r);
    if hi <= lo {
        return 0.0;
    }
    let nphi = ((24.0 * d / w).ceil() as usize).clamp(96, 8192);
    let h = (hi - lo) / NR as f64;
    let dphi = 2.0 * PI / nphi as f64;
    let norm = 2.0 / (PI * w * w);
    let cosines: Vec<f64> = (0..nphi).map(|k| (k as f64 * dphi).cos()).collect();
    let mut total = 0.0;
    for i in 0..=NR {
        let rho = lo + i as f64 * h;
        let weight = if i == 0 || i == NR {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let ring: f64 = cosines
            .iter()
            .map(|c| (-2.0 * (rho * rho + d * d - 2.0 * rho * d * c) / (w * w)).exp())
            .sum::<f64>()
            * dphi;
        total += weight * ring * rho;
    }
    (total * h / 3.0 * norm).clamp(0.0, 1.0)
}

pub fn pointing_loss(residual_arcsec: f64, config: &LinkConfig) -> Result<f64, LinkError> {
    if !(residual_arcsec >= 0.0) {
        return Err(LinkError::NegativeResidual(residual_arcsec));
    }
    let f = spot_fraction_in_stop(residual_arcsec, config.spot_radius(), config.stop_radius());
    Ok(fraction_to_db(f.max(MIN_POINTING_FRACTION)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    /// Seconds, pass-relative.
    pub time: f64,
    pub elevation_deg: f64,
    pub range_km: f64,
    pub residual_arcsec: f64,
    pub geometric_loss_db: f64,
    pub atmospheric_loss_db: f64,
    pub pointing_loss_db: f64,
    pub optics_loss_db: f64,
    pub total_transmittance: f64,
    /// Counts/s reaching the quantum detectors.
    pub background_rate: f64,
}

impl LinkState {
    pub fn total_loss_db(&self) -> f64 {
        self.geometric_loss_db + self.atmospheric_loss_db + self.pointing_loss_db + self.optics_loss_db
    }

    /// A link with no signal and no background, used outside tracking.
    pub fn dark(time: f64, elevation_deg: f64, range_km: f64) -> Self {
        Self {
            time,
            elevation_deg,
            range_km,
            residual_arcsec: f64::INFINITY,
            geometric_loss_db: 0.0,
            atmospheric_loss_db: 0.0,
            pointing_loss_db: f64::INFINITY,
            optics_loss_db: 0.0,
            total_transmittance: 0.0,
            background_rate: 0.0,
        }
    }
}

/// Composes the loss terms at one instant. Background scales with airmass,
/// the unobstructed aperture share and the optics efficiency.
pub fn total_transmittance(
    time: f64,
    range_km: f64,
    elevation_deg: f64,
    residual_arcsec: f64,
    config: &LinkConfig,
) -> Result<LinkState, LinkError> {
    let geometric_loss_db = geometric_loss(range_km, config)?;
    let atmospheric_loss_db = atmospheric_loss(elevation_deg, config)?;
    let pointing_loss_db = pointing_loss(residual_arcsec, config)?;
    let optics_loss_db = fraction_to_db(config.optics_efficiency);
    let total_transmittance = db_to_fraction(geometric_loss_db + atmospheric_loss_db + pointing_loss_db)
        * config.optics_efficiency;
    Ok(LinkState {
        time,
        elevation_deg,
        range_km,
        residual_arcsec,
        geometric_loss_db,
        atmospheric_loss_db,
        pointing_loss_db,
        optics_loss_db,
        total_transmittance: total_transmittance.clamp(0.0, 1.0),
        background_rate: config.sky_background_rate_zenith
            * airmass(elevation_deg)
            * (1.0 - config.rx_obstruction_fraction)
            * config.optics_efficiency,
    })
}

/// Link states held constant from each sample's time for at most `hold` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkProfile {
    pub states: Vec<LinkState>,
    pub hold: f64,
}

impl LinkProfile {
    pub fn new(states: Vec<LinkState>, hold: f64) -> Self {
        Self { states, hold }
    }

    pub fn constant(state: LinkState, start: f64, end: f64) -> Self {
        Self {
            states: vec![LinkState { time: start, ..state }],
            hold: end - start,
        }
    }

    fn index_at(&self, t: f64) -> Result<usize, LinkError> {
        let i = self.states.partition_point(|s| s.time <= t);
        if i == 0 {
            return Err(LinkError::ProfileGap(t));
        }
        let s = &self.states[i - 1];
        if t - s.time > self.hold * (1.0 + 1e-9) {
            return Err(LinkError::ProfileGap(t));
        }
        Ok(i - 1)
    }

    pub fn at(&self, t: f64) -> Result<&LinkState, LinkError> {
        self.index_at(t).map(|i| &self.states[i])
    }

    /// Mean background rate over `[t0, t1]`, failing on gaps.
    fn background_segments(&self, t0: f64, t1: f64) -> Result<Vec<(f64, f64, f64)>, LinkError> {
        let mut out = Vec::new();
        let mut t = t0;
        while t < t1 {
            let i = self.index_at(t)?;
            let s = &self.states[i];
            let held = s.time + self.hold;
            let seg_end = match self.states.get(i + 1) {
                // Adjacent states on a grid may miss each other by an ulp.
                Some(next) if next.time <= held + self.hold * 1e-9 => next.time,
                _ => held,
            }
            .min(t1);
            if seg_end <= t {
                return Err(LinkError::ProfileGap(t));
            }
            out.push((t, seg_end, s.background_rate));
            t = seg_end;
        }
        Ok(out)
    }
}

/// A photon reaching the ground receiver; `pair` indexes the source stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub pair: Option<usize>,
}

/// Bernoulli thinning of signal photons at the local transmittance plus
/// Poisson background over the stream window.
pub fn apply_channel(stream: &PairEventStream, profile: &LinkProfile, seed: u64) -> Result<Vec<Arrival>, LinkError> {
    apply_channel_scaled(stream, profile, 1.0, seed)
}

/// As [`apply_channel`] with every signal survival probability multiplied by
/// `extra` (the on-board split toward the ground).
pub fn apply_channel_scaled(
    stream: &PairEventStream,
    profile: &LinkProfile,
    extra: f64,
    seed: u64,
) -> Result<Vec<Arrival>, LinkError> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for (k, e) in stream.events.iter().enumerate() {
        let p = (profile.at(e.emission_time)?.total_transmittance * extra).clamp(0.0, 1.0);
        if p >= 1.0 || (p > 0.0 && rng.random_bool(p)) {
            out.push(Arrival {
                time: e.emission_time,
                pair: Some(k),
            });
        }
    }
    let signal = out.len();
    for (a, b, rate) in profile.background_segments(stream.start, stream.end())? {
        let mean = rate * (b - a);
        if mean <= 0.0 {
            continue;
        }
        let n = Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize;
        out.extend((0..n).map(|_| Arrival {
            time: rng.random_range(a..b),
            pair: None,
        }));
    }
    if out.len() > signal {
        out.sort_by(|x, y| x.time.total_cmp(&y.time));
    }
    Ok(out)
}
