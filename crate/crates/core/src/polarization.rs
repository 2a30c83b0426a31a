//! Polarization reference-frame tracking: frame rotation model, beacon
//! polarimeter, offset estimator and the stepwise correction loop.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbit::PassGeometry;
use crate::seed::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolarizationError {
    #[error("frame profile does not cover t = {0:.3} s")]
    ProfileGap(f64),
    #[error("frame profile times must be strictly increasing")]
    UnorderedProfile,
    #[error("half-wave plate settings cannot resolve the angle (need two with distinct 4·h mod 180°)")]
    DegenerateSettings,
    #[error("no counts at half-wave plate setting {0} deg")]
    ZeroCounts(f64),
    #[error("invalid polarimeter configuration: {0}")]
    InvalidConfig(String),
}

/// Wraps an angle in degrees onto the half-turn `(−90, 90]`.
pub fn wrap_half_turn(deg: f64) -> f64 {
    let w = (deg + 90.0).rem_euclid(180.0) - 90.0;
    if w == -90.0 {
        90.0
    } else {
        w
    }
}

pub fn qber_from_residual(delta_deg: f64) -> f64 {
    delta_deg.to_radians().sin().powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrameMode {
    /// Nadir-pointing satellite, polarization reference along the body axis
    /// closest to the velocity vector, rotated by `yaw_deg` about nadir.
    Geometric {
        #[serde(default)]
        yaw_deg: f64,
    },
    /// User-supplied `(time_s, theta_deg)` samples, linearly interpolated.
    Scripted { samples: Vec<(f64, f64)> },
}

impl Default for FrameMode {
    fn default() -> Self {
        FrameMode::Geometric { yaw_deg: 0.0 }
    }
}

/// Rotation of the satellite's linear-polarization frame as seen at the ground.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOffsetProfile {
    pub samples: Vec<(f64, f64)>,
}

impl FrameOffsetProfile {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, PolarizationError> {
        if samples.is_empty() || samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(PolarizationError::UnorderedProfile);
        }
        Ok(Self { samples })
    }

    pub fn start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    pub fn at(&self, t: f64) -> Result<f64, PolarizationError> {
        if t < self.start() || t > self.end() {
            return Err(PolarizationError::ProfileGap(t));
        }
        let i = self.samples.partition_point(|s| s.0 <= t);
        if i == self.samples.len() {
            return Ok(self.samples[i - 1].1);
        }
        let (t0, a) = self.samples[i - 1];
        let (t1, b) = self.samples[i];
        Ok(a + (b - a) * (t - t0) / (t1 - t0))
    }
}

/// Signed angle about the line of sight between the projected local North
/// (ground reference) and the projected satellite reference axis.
fn geometric_angle(site_ecef: &Vector3<f64>, north: &Vector3<f64>, sat: &Vector3<f64>, vel: &Vector3<f64>, yaw: f64) -> f64 {
    let k = (sat - site_ecef).normalize();
    let nadir = -sat.normalize();
    let along = (vel - nadir * vel.dot(&nadir)).normalize();
    let (sy, cy) = yaw.to_radians().sin_cos();
    let body_x = along * cy + nadir.cross(&along) * sy;
    let project = |v: &Vector3<f64>| (v - k * v.dot(&k)).normalize();
    let g = project(north);
    let s = project(&body_x);
    k.dot(&g.cross(&s)).atan2(g.dot(&s)).to_degrees()
}

pub fn frame_offset_profile(geometry: &PassGeometry, mode: &FrameMode) -> Result<FrameOffsetProfile, PolarizationError> {
    match mode {
        FrameMode::Scripted { samples } => {
            let profile = FrameOffsetProfile::new(samples.clone())?;
            let end = geometry.duration();
            if profile.start() > 0.0 {
                return Err(PolarizationError::ProfileGap(0.0));
            }
            if profile.end() < end {
                return Err(PolarizationError::ProfileGap(profile.end()));
            }
            Ok(profile)
        }
        FrameMode::Geometric { yaw_deg } => {
            let site = geometry.site.ecef();
            let north = geometry.site.enu_basis()[1];
            let mut out: Vec<(f64, f64)> = Vec::with_capacity(geometry.samples.len());
            for s in &geometry.samples {
                let raw = geometric_angle(&site, &north, &s.sat_ecef, &s.sat_velocity, *yaw_deg);
                // Linear polarization repeats every 180°; keep the trace continuous.
                let theta = match out.last() {
                    None => wrap_half_turn(raw),
                    Some(&(_, prev)) => prev + wrap_half_turn(raw - prev),
                };
                if out.last().is_some_and(|&(t, _)| s.t <= t) {
                    continue;
                }
                out.push((s.t, theta));
            }
            FrameOffsetProfile::new(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolarimeterConfig {
    /// Half-wave plate angles, degrees.
    pub hwp_settings: Vec<f64>,
    /// Transmit-arm over reflect-arm detection efficiency.
    pub detector_pair_efficiency_ratio: f64,
    /// Seconds spent at each setting.
    pub integration: f64,
    /// Beacon counts/s reaching the polarimeter.
    pub count_rate: f64,
}

impl Default for PolarimeterConfig {
    fn default() -> Self {
        Self {
            hwp_settings: vec![0.0, 22.5],
            detector_pair_efficiency_ratio: 1.0,
            integration: 0.5,
            count_rate: 2e5,
        }
    }
}

impl PolarimeterConfig {
    pub fn validate(&self) -> Result<(), PolarizationError> {
        if !(self.integration > 0.0) {
            return Err(PolarizationError::InvalidConfig("integration must be positive".into()));
        }
        if !(self.count_rate >= 0.0) || !(self.detector_pair_efficiency_ratio > 0.0) {
            return Err(PolarizationError::InvalidConfig(
                "count_rate must be non-negative and detector_pair_efficiency_ratio positive".into(),
            ));
        }
        normal_matrix(&self.hwp_settings).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarimeterReading {
    pub hwp_deg: f64,
    pub transmit: f64,
    pub reflect: f64,
}

/// Malus-law split of beacon counts behind a half-wave plate at `hwp_deg`.
pub fn expected_transmit_fraction(theta_deg: f64, hwp_deg: f64) -> f64 {
    (theta_deg - 2.0 * hwp_deg).to_radians().cos().powi(2)
}

pub fn polarimeter_counts<R: Rng>(theta_deg: f64, hwp_deg: f64, config: &PolarimeterConfig, rng: &mut R) -> PolarimeterReading {
    let total = config.count_rate * config.integration;
    let p = expected_transmit_fraction(theta_deg, hwp_deg);
    let mut draw = |mean: f64| {
        if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(rng)
        } else {
            0.0
        }
    };
    let transmit = draw(total * p);
    let reflect = draw(total * (1.0 - p) / config.detector_pair_efficiency_ratio);
    PolarimeterReading {
        hwp_deg,
        transmit,
        reflect,
    }
}

/// Noise-free counts, for estimator checks.
pub fn polarimeter_expected(theta_deg: f64, hwp_deg: f64, config: &PolarimeterConfig) -> PolarimeterReading {
    let total = config.count_rate * config.integration;
    let p = expected_transmit_fraction(theta_deg, hwp_deg);
    PolarimeterReading {
        hwp_deg,
        transmit: total * p,
        reflect: total * (1.0 - p) / config.detector_pair_efficiency_ratio,
    }
}

fn normal_matrix(settings: &[f64]) -> Result<[[f64; 2]; 2], PolarizationError> {
    let mut m = [[0.0; 2]; 2];
    for h in settings {
        let (s, c) = (4.0 * h.to_radians()).sin_cos();
        m[0][0] += c * c;
        m[0][1] += c * s;
        m[1][1] += s * s;
    }
    m[1][0] = m[0][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-9 {
        return Err(PolarizationError::DegenerateSettings);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffsetEstimate {
    /// Degrees, `(−90, 90]`.
    pub theta_hat: f64,
    /// Delta-method standard error, degrees.
    pub std_error: f64,
    /// Visibility at each setting, in input order.
    pub visibilities: Vec<f64>,
    /// Some setting had fewer than 100 counts.
    pub low_counts: bool,
}

pub const LOW_COUNT_THRESHOLD: f64 = 100.0;

/// Least-squares fit of `v_k = cos2θ·cos4h_k + sin2θ·sin4h_k` over the
/// per-setting visibilities; with settings {0°, 22.5°} this is
/// `θ̂ = ½·atan2(v₂₂.₅, v₀)`.
pub fn estimate_offset(readings: &[PolarimeterReading], efficiency_ratio: f64) -> Result<OffsetEstimate, PolarizationError> {
    let settings: Vec<f64> = readings.iter().map(|r| r.hwp_deg).collect();
    let m = normal_matrix(&settings)?;
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];

    let mut low_counts = false;
    let mut vis = Vec::with_capacity(readings.len());
    let mut totals = Vec::with_capacity(readings.len());
    for r in readings {
        let reflect = r.reflect * efficiency_ratio;
        let n = r.transmit + reflect;
        if n <= 0.0 {
            return Err(PolarizationError::ZeroCounts(r.hwp_deg));
        }
        low_counts |= r.transmit + r.reflect < LOW_COUNT_THRESHOLD;
        vis.push((r.transmit - reflect) / n);
        totals.push(r.transmit + r.reflect);
    }
    if low_counts {
        log::warn!("polarimeter setting with fewer than {LOW_COUNT_THRESHOLD} counts; estimate is noisy");
    }

    // Rows of (AᵀA)⁻¹Aᵀ give ∂(c, s)/∂v_k.
    let rows: Vec<[f64; 2]> = settings
        .iter()
        .map(|h| {
            let (s, c) = (4.0 * h.to_radians()).sin_cos();
            [inv[0][0] * c + inv[0][1] * s, inv[1][0] * c + inv[1][1] * s]
        })
        .collect();
    let (mut c, mut s) = (0.0, 0.0);
    for (row, v) in rows.iter().zip(&vis) {
        c += row[0] * v;
        s += row[1] * v;
    }
    let theta = 0.5 * s.atan2(c);
    let r2 = (c * c + s * s).max(1e-12);
    let mut var = 0.0;
    for ((row, v), n) in rows.iter().zip(&vis).zip(&totals) {
        let d = 0.5 * (c * row[1] - s * row[0]) / r2;
        var += d * d * (1.0 - v * v).max(0.0) / n;
    }
    Ok(OffsetEstimate {
        theta_hat: wrap_half_turn(theta.to_degrees()),
        std_error: var.sqrt().to_degrees(),
        visibilities: vis,
        low_counts,
    })
}

/// Receiver measurement-frame rotation; the misalignment left for the
/// quantum channel is `θ_true − rotation_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReceiverFrame {
    pub rotation_deg: f64,
}

impl ReceiverFrame {
    pub fn residual(&self, theta_true: f64) -> f64 {
        wrap_half_turn(theta_true - self.rotation_deg)
    }
}

pub fn apply_correction(frame: ReceiverFrame, theta_hat: f64) -> ReceiverFrame {
    ReceiverFrame {
        rotation_deg: frame.rotation_deg + theta_hat,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcsConfig {
    pub enabled: bool,
    /// Seconds between estimates; each estimate is held for one interval.
    pub update_interval: f64,
    /// Fixed misalignment between the polarimeter reference and the
    /// quantum receiver that the loop cannot see, degrees.
    pub uncorrected_offset_deg: f64,
    pub frame: FrameMode,
    pub polarimeter: PolarimeterConfig,
}

impl Default for PcsConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            update_interval: 1.0,
            uncorrected_offset_deg: 0.0,
            frame: FrameMode::default(),
            polarimeter: PolarimeterConfig::default(),
        }
    }
}

impl PcsConfig {
    pub fn validate(&self) -> Result<(), PolarizationError> {
        if !(self.update_interval > 0.0) {
            return Err(PolarizationError::InvalidConfig("update_interval must be positive".into()));
        }
        self.polarimeter.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcsSample {
    pub time_s: f64,
    pub theta_true_deg: f64,
    pub theta_hat_deg: f64,
    pub residual_deg: f64,
    pub v0: f64,
    pub v22_5: f64,
}

/// Stepwise correction over `[0, duration]`: estimate `k` is measured at
/// `t_k = k·Δ` and held over `[t_k − Δ/2, t_k + Δ/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcsRun {
    pub interval: f64,
    pub samples: Vec<PcsSample>,
    pub uncorrected_offset_deg: f64,
    profile: FrameOffsetProfile,
}

impl PcsRun {
    fn index(&self, t: f64) -> usize {
        (((t / self.interval) + 0.5).floor().max(0.0) as usize).min(self.samples.len() - 1)
    }

    pub fn theta_hat_at(&self, t: f64) -> f64 {
        self.samples[self.index(t)].theta_hat_deg
    }

    pub fn theta_true_at(&self, t: f64) -> Result<f64, PolarizationError> {
        self.profile.at(t)
    }

    /// Misalignment seen by the quantum receiver at `t`, degrees.
    pub fn residual_at(&self, t: f64) -> Result<f64, PolarizationError> {
        let frame = ReceiverFrame {
            rotation_deg: self.theta_hat_at(t),
        };
        Ok(wrap_half_turn(frame.residual(self.profile.at(t)?) + self.uncorrected_offset_deg))
    }
}

pub fn run_pcs(profile: &FrameOffsetProfile, config: &PcsConfig, duration: f64, seed: u64) -> Result<PcsRun, PolarizationError> {
    config.validate()?;
    let mut rng = rng(seed);
    let n = (duration / config.update_interval).ceil() as usize + 1;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t = (k as f64 * config.update_interval).min(duration);
        let theta = profile.at(t)?;
        let (theta_hat, v0, v22) = if config.enabled {
            let readings: Vec<PolarimeterReading> = config
                .polarimeter
                .hwp_settings
                .iter()
                .map(|&h| polarimeter_counts(theta, h, &config.polarimeter, &mut rng))
                .collect();
            let est = estimate_offset(&readings, config.polarimeter.detector_pair_efficiency_ratio)?;
            let pick = |target: f64| {
                config
                    .polarimeter
                    .hwp_settings
                    .iter()
                    .position(|&h| (h - target).abs() < 1e-9)
                    .map_or(f64::NAN, |i| est.visibilities[i])
            };
            (est.theta_hat, pick(0.0), pick(22.5))
        } else {
            (0.0, f64::NAN, f64::NAN)
        };
        // Keep the estimate on the same branch as the unwrapped truth.
        let theta_hat = theta_hat + 180.0 * ((theta - theta_hat) / 180.0).round();
        samples.push(PcsSample {
            time_s: t,
            theta_true_deg: theta,
            theta_hat_deg: if config.enabled { theta_hat } else { 0.0 },
            residual_deg: wrap_half_turn(theta - if config.enabled { theta_hat } else { 0.0 } + config.uncorrected_offset_deg),
            v0,
            v22_5: v22,
        });
    }
    Ok(PcsRun {
        interval: config.update_interval,
        samples,
        uncorrected_offset_deg: config.uncorrected_offset_deg,
        profile: profile.clone(),
    })
}
