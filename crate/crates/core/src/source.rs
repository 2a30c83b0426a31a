//! Behavioural model of the entangled-pair source and its timing beacon.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SourceError {
    #[error("brightness must be positive, got {0}")]
    NonpositiveBrightness(f64),
    #[error("invalid extrema: need c_max >= c_min >= 0 and c_max > 0 (got {c_max}, {c_min})")]
    InvalidExtrema { c_max: f64, c_min: f64 },
    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid source configuration: {0}")]
    InvalidConfig(String),
    #[error("fringe fit needs at least {needed} distinct angles, got {got}")]
    TooFewAngles { needed: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    /// Pairs per second per mW of pump.
    pub brightness: f64,
    /// mW.
    pub pump_power: f64,
    pub visibility: f64,
    /// Share of signal photons sent toward the ground; the rest feed the self-check arm.
    pub downlink_fraction: f64,
    pub beacon_enabled: bool,
    /// Hz.
    pub beacon_frequency: f64,
    /// Seconds.
    pub beacon_pulse_width: f64,
    /// Relative asymmetry of the two fringe maxima in a polarizer scan.
    pub intensity_imbalance: f64,
    pub signal_wavelength_nm: f64,
    pub idler_wavelength_nm: f64,
    pub rng_seed: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            brightness: 13.6e6,
            pump_power: 1.84,
            visibility: 0.98,
            downlink_fraction: 0.9,
            beacon_enabled: true,
            beacon_frequency: 10_000.0,
            beacon_pulse_width: 5e-9,
            intensity_imbalance: 0.0,
            signal_wavelength_nm: 785.0,
            idler_wavelength_nm: 837.0,
            rng_seed: 0,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), SourceError> {
        if !(self.brightness > 0.0) {
            return Err(SourceError::NonpositiveBrightness(self.brightness));
        }
        let range = |name, value: f64, lo, hi| {
            if (lo..=hi).contains(&value) {
                Ok(())
            } else {
                Err(SourceError::OutOfRange { name, value, lo, hi })
            }
        };
        range("pump_power", self.pump_power, 0.0, f64::MAX)?;
        range("visibility", self.visibility, 0.0, 1.0)?;
        range("intensity_imbalance", self.intensity_imbalance, 0.0, 1.0)?;
        if !(self.downlink_fraction > 0.0 && self.downlink_fraction <= 1.0) {
            return Err(SourceError::OutOfRange {
                name: "downlink_fraction",
                value: self.downlink_fraction,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if self.beacon_enabled {
            range("beacon_frequency", self.beacon_frequency, 1_000.0, 50_000.0)?;
            range("beacon_pulse_width", self.beacon_pulse_width, 0.0, 0.5 / self.beacon_frequency)?;
        }
        Ok(())
    }
}

pub fn pair_rate(config: &SourceConfig) -> f64 {
    config.brightness * config.pump_power
}

pub fn required_pump_power(target_rate: f64, brightness: f64) -> Result<f64, SourceError> {
    if !(brightness > 0.0) {
        return Err(SourceError::NonpositiveBrightness(brightness));
    }
    Ok(target_rate / brightness)
}

pub fn visibility_from_extrema(c_max: f64, c_min: f64) -> Result<f64, SourceError> {
    if !(c_max > 0.0 && c_min >= 0.0 && c_max >= c_min) {
        return Err(SourceError::InvalidExtrema { c_max, c_min });
    }
    Ok((c_max - c_min) / (c_max + c_min))
}

pub fn qber_from_visibility(visibility: f64) -> Result<f64, SourceError> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(SourceError::OutOfRange {
            name: "visibility",
            value: visibility,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok((1.0 - visibility) / 2.0)
}

pub fn visibility_from_qber(qber: f64) -> Result<f64, SourceError> {
    if !(0.0..=0.5).contains(&qber) {
        return Err(SourceError::OutOfRange {
            name: "qber",
            value: qber,
            lo: 0.0,
            hi: 0.5,
        });
    }
    Ok(1.0 - 2.0 * qber)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    HV,
    AD,
}

impl Basis {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Basis::AD
        } else {
            Basis::HV
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvent {
    /// Seconds on the satellite clock, pass-relative.
    pub emission_time: f64,
    pub idler_basis: Basis,
    pub idler_outcome: bool,
    /// Signal outcome when the ground measures in the other basis.
    pub latent_bit: bool,
    /// Correlation broken by source imperfection.
    pub error_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairEventStream {
    pub events: Vec<PairEvent>,
    pub beacon_times: Vec<f64>,
    pub start: f64,
    pub duration: f64,
    pub config_snapshot: SourceConfig,
}

impl PairEventStream {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Beacon pulse times inside `[start, start + duration]`, on the grid `k / f`.
pub fn beacon_schedule(frequency: f64, start: f64, duration: f64) -> Vec<f64> {
    let first = (start * frequency - 1e-9).ceil().max(0.0) as u64;
    let last = ((start + duration) * frequency + 1e-9).floor() as u64;
    (first..=last).map(|k| k as f64 / frequency).collect()
}

/// Pair stream over `[0, duration]`, seeded from `config.rng_seed`.
pub fn generate_pair_stream(config: &SourceConfig, duration: f64) -> Result<PairEventStream, SourceError> {
    generate_pair_window(config, 0.0, duration, derive_seed(config.rng_seed, "photon_source"))
}

/// Pair stream over `[start, start + duration]` with an explicit seed.
///
/// Arrivals form a homogeneous Poisson process at [`pair_rate`]; bases and
/// latent bits are uniform and each pair carries an error flag with
/// probability `(1 - V) / 2`.
pub fn generate_pair_window(
    config: &SourceConfig,
    start: f64,
    duration: f64,
    seed: u64,
) -> Result<PairEventStream, SourceError> {
    config.validate()?;
    if !(duration > 0.0) {
        return Err(SourceError::InvalidConfig(format!("duration must be positive, got {duration}")));
    }
    let rate = pair_rate(config);
    let q = qber_from_visibility(config.visibility)?;
    let mut rng = rng(seed);
    let end = start + duration;
    let mut events = Vec::with_capacity((rate * duration * 1.01) as usize + 16);
    if rate > 0.0 {
        let gaps = Exp::new(rate).expect("positive rate");
        let mut t = start + gaps.sample(&mut rng);
        while t <= end {
            events.push(PairEvent {
                emission_time: t,
                idler_basis: Basis::from_bit(rng.random()),
                idler_outcome: rng.random(),
                latent_bit: rng.random(),
                error_flag: q > 0.0 && rng.random_bool(q),
            });
            t += gaps.sample(&mut rng);
        }
    }
    let beacon_times = if config.beacon_enabled {
        beacon_schedule(config.beacon_frequency, start, duration)
    } else {
        Vec::new()
    };
    Ok(PairEventStream {
        events,
        beacon_times,
        start,
        duration,
        config_snapshot: config.clone(),
    })
}

/// Expected coincidence rate behind a single polarizer at `angle` degrees.
///
/// `R·(1 + ε·cos 2x)·(1 + V·cos 4x)/2` with `x = angle − θ₀`: maxima at the HH
/// and VV settings, minima at the diagonals, and ε splitting the two maxima.
pub fn fringe_rate(config: &SourceConfig, angle_deg: f64, phase_deg: f64) -> f64 {
    let x = (angle_deg - phase_deg).to_radians();
    pair_rate(config)
        * (1.0 + config.intensity_imbalance * (2.0 * x).cos())
        * (1.0 + config.visibility * (4.0 * x).cos())
        / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub angle_deg: f64,
    pub expected: f64,
    pub counts: f64,
}

/// Simulated single-polarizer fringe. `seed = None` returns expectations
/// instead of Poisson draws.
pub fn polarizer_scan(
    config: &SourceConfig,
    angles_deg: &[f64],
    integration: f64,
    seed: Option<u64>,
) -> Result<Vec<ScanPoint>, SourceError> {
    config.validate()?;
    if !(integration > 0.0) {
        return Err(SourceError::InvalidConfig(format!(
            "integration time must be positive, got {integration}"
        )));
    }
    let mut rng = seed.map(rng);
    Ok(angles_deg
        .iter()
        .map(|&a| {
            let expected = fringe_rate(config, a, 0.0) * integration;
            let counts = match rng.as_mut() {
                Some(r) if expected > 0.0 => Poisson::new(expected).expect("positive mean").sample(r),
                _ => expected,
            };
            ScanPoint {
                angle_deg: a,
                expected,
                counts,
            }
        })
        .collect())
}

/// Angles `0, step, 2·step, …` strictly below `end`.
pub fn scan_angles(step_deg: f64, end_deg: f64) -> Vec<f64> {
    let n = (end_deg / step_deg - 1e-9).ceil() as usize;
    (0..n).map(|i| i as f64 * step_deg).collect()
}

/// Least-squares fit of a fringe in the harmonics {0, 2θ, 4θ, 6θ}.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeFit {
    coefficients: Vec<f64>,
}

const HARMONICS: [f64; 3] = [2.0, 4.0, 6.0];

fn basis_row(angle_deg: f64) -> [f64; 7] {
    let a = angle_deg.to_radians();
    let mut row = [1.0; 7];
    for (k, h) in HARMONICS.iter().enumerate() {
        row[1 + 2 * k] = (h * a).cos();
        row[2 + 2 * k] = (h * a).sin();
    }
    row
}

impl FringeFit {
    pub fn fit(points: &[ScanPoint]) -> Result<Self, SourceError> {
        let mut distinct: Vec<i64> = points
            .iter()
            .map(|p| (p.angle_deg.rem_euclid(180.0) * 1e6).round() as i64)
            .collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 7 {
            return Err(SourceError::TooFewAngles {
                needed: 7,
                got: distinct.len(),
            });
        }
        let a = DMatrix::from_fn(points.len(), 7, |i, j| basis_row(points[i].angle_deg)[j]);
        let b = DVector::from_iterator(points.len(), points.iter().map(|p| p.counts));
        let x = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| SourceError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            coefficients: x.iter().copied().collect(),
        })
    }

    pub fn eval(&self, angle_deg: f64) -> f64 {
        basis_row(angle_deg)
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| b * c)
            .sum()
    }

    /// Extremes of the fitted curve on a 0.1° grid over one half turn, clamped at zero.
    pub fn extrema(&self) -> (f64, f64) {
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..1800 {
            let v = self.eval(i as f64 * 0.1).max(0.0);
            hi = hi.max(v);
            lo = lo.min(v);
        }
        (hi, lo)
    }

    pub fn visibility(&self) -> Result<f64, SourceError> {
        let (hi, lo) = self.extrema();
        visibility_from_extrema(hi, lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_and_pump_sizing() {
        let cfg = SourceConfig::default();
        assert!((pair_rate(&cfg) - 25.024e6).abs() < 1.0);
        assert!((required_pump_power(13.6e6, 13.6e6).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(required_pump_power(0.0, 5.0).unwrap(), 0.0);
        assert!(required_pump_power(1.0, 0.0).is_err());
        let zero = SourceConfig {
            pump_power: 0.0,
            ..cfg
        };
        assert_eq!(pair_rate(&zero), 0.0);
    }

    #[test]
    fn extrema_edge_cases() {
        assert_eq!(visibility_from_extrema(7.0, 7.0).unwrap(), 0.0);
        assert_eq!(visibility_from_extrema(7.0, 0.0).unwrap(), 1.0);
        assert!(visibility_from_extrema(1.0, 2.0).is_err());
        assert!(visibility_from_extrema(0.0, 0.0).is_err());
    }

    #[test]
    fn qber_relation() {
        assert_eq!(qber_from_visibility(1.0).unwrap(), 0.0);
        assert!((qber_from_visibility(0.949).unwrap() - 0.0255).abs() < 1e-12);
        assert!(qber_from_visibility(1.5).is_err());
    }

    #[test]
    fn beacon_count_matches_grid() {
        let s = beacon_schedule(10_000.0, 0.0, 0.01);
        assert_eq!(s.len(), 101);
        let s = beacon_schedule(10_000.0, 0.00005, 0.001);
        assert_eq!(s.first().copied(), Some(0.0001));
        assert_eq!(s.len(), 10);
    }

    #[test]
    fn perfect_visibility_has_no_errors() {
        let cfg = SourceConfig {
            visibility: 1.0,
            pump_power: 0.01,
            ..SourceConfig::default()
        };
        let s = generate_pair_stream(&cfg, 0.1).unwrap();
        assert!(!s.events.is_empty());
        assert!(s.events.iter().all(|e| !e.error_flag));
        assert!(s.events.windows(2).all(|w| w[0].emission_time < w[1].emission_time));
    }

    #[test]
    fn balanced_scan_ratio() {
        let cfg = SourceConfig {
            visibility: 0.949,
            ..SourceConfig::default()
        };
        let pts = polarizer_scan(&cfg, &[0.0, 45.0, 90.0], 1.0, None).unwrap();
        let ratio = pts[0].expected / pts[1].expected;
        assert!((ratio - 38.2).abs() < 0.1, "{ratio}");
        assert!((pts[0].expected - pts[2].expected).abs() < 1e-6 * pts[0].expected);
    }

    #[test]
    fn imbalance_splits_maxima() {
        let cfg = SourceConfig {
            intensity_imbalance: 0.1,
            ..SourceConfig::default()
        };
        let pts = polarizer_scan(&cfg, &[0.0, 90.0], 1.0, None).unwrap();
        assert!(pts[0].expected > pts[1].expected * 1.2);
    }

    #[test]
    fn noiseless_fit_recovers_visibility() {
        for v in [1.0, 0.949, 0.5] {
            let cfg = SourceConfig {
                visibility: v,
                ..SourceConfig::default()
            };
            let pts = polarizer_scan(&cfg, &scan_angles(5.0, 360.0), 1.0, None).unwrap();
            let fit = FringeFit::fit(&pts).unwrap();
            assert!((fit.visibility().unwrap() - v).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn zero_integration_is_rejected() {
        assert!(polarizer_scan(&SourceConfig::default(), &[0.0], 0.0, None).is_err());
    }

    #[test]
    fn too_few_angles() {
        let pts = polarizer_scan(&SourceConfig::default(), &[0.0, 10.0], 1.0, None).unwrap();
        assert!(matches!(FringeFit::fit(&pts), Err(SourceError::TooFewAngles { .. })));
    }
}
