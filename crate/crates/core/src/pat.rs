//! Pointing, acquisition and tracking: a time-stepped state machine driving a
//! rate-limited mount, two beacon cameras and a fast steering mirror.
//!
//! Errors are sky-plane 2-vectors in arcsec, x along the satellite's apparent
//! motion. With `D` the open-loop tracking error (systematic bias plus any
//! slew lag), `M` the mount correction, `J` the mount jitter and `F` the FSM
//! command, the wide camera sees `D − M − J` and the narrow camera (sharing
//! the quantum path, behind the FSM) sees `e = D − M − J − F`.

use std::collections::VecDeque;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbit::PassGeometry;
use crate::seed::rng;

pub type Vec2 = Vector2<f64>;

const ARCSEC_PER_DEG: f64 = 3600.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PatError {
    #[error("invalid tracking configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PatPhase {
    Idle,
    UplinkBeaconPointing,
    OpenLoopCoarse,
    ClosedLoopCoarse,
    ClosedLoopFine,
    SignalLost,
}

impl PatPhase {
    pub fn name(self) -> &'static str {
        match self {
            PatPhase::Idle => "idle",
            PatPhase::UplinkBeaconPointing => "uplink_beacon_pointing",
            PatPhase::OpenLoopCoarse => "open_loop_coarse",
            PatPhase::ClosedLoopCoarse => "closed_loop_coarse",
            PatPhase::ClosedLoopFine => "closed_loop_fine",
            PatPhase::SignalLost => "signal_lost",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MountModel {
    /// Degrees per second.
    pub max_slew_rate: f64,
    /// Seconds of dead time between command and motion.
    pub command_latency: f64,
    /// Open-loop pointing error from element-set and pointing-model errors, arcsec.
    pub systematic_bias: [f64; 2],
    /// Per-axis RMS, arcsec, redrawn at every mount update.
    pub jitter_rms: f64,
}

impl Default for MountModel {
    fn default() -> Self {
        Self {
            max_slew_rate: 1.0,
            command_latency: 0.05,
            systematic_bias: [90.0, -60.0],
            jitter_rms: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    /// Full field of view, arcsec.
    pub fov: f64,
    /// Per-axis RMS, arcsec.
    pub centroid_noise_rms: f64,
    /// Hz.
    pub frame_rate: f64,
    pub detection_snr_threshold: f64,
}

impl CameraModel {
    pub fn wide() -> Self {
        Self {
            fov: 3600.0,
            centroid_noise_rms: 3.0,
            frame_rate: 20.0,
            detection_snr_threshold: 5.0,
        }
    }

    pub fn narrow() -> Self {
        Self {
            fov: 120.0,
            centroid_noise_rms: 0.3,
            frame_rate: 6000.0,
            detection_snr_threshold: 5.0,
        }
    }
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::narrow()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsmModel {
    /// Hz.
    pub bandwidth: f64,
    /// Largest deflection per axis magnitude, arcsec.
    pub range: f64,
    pub loop_gain: f64,
}

impl Default for FsmModel {
    fn default() -> Self {
        Self {
            bandwidth: 600.0,
            range: 60.0,
            loop_gain: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatConfig {
    pub mount: MountModel,
    pub wfov: CameraModel,
    pub nfov: CameraModel,
    pub fsm: FsmModel,
    /// Uplink beacon is allowed at or above this elevation, degrees.
    pub threshold_elevation: f64,
    /// Consecutive narrow-camera misses that declare the signal lost.
    pub dropout_count: usize,
    /// Fraction of the measured offset sent to the mount per wide-camera frame.
    pub coarse_gain: f64,
    /// Outer time step, seconds.
    pub step: f64,
    /// Time for the satellite to acquire the uplink and start its downlink beacon, s.
    pub satellite_acquisition_delay: f64,
    /// Beacon SNR on the cameras at `snr_reference_range_km`.
    pub snr_reference: f64,
    pub snr_reference_range_km: f64,
}

impl Default for PatConfig {
    fn default() -> Self {
        Self {
            mount: MountModel::default(),
            wfov: CameraModel::wide(),
            nfov: CameraModel::narrow(),
            fsm: FsmModel::default(),
            threshold_elevation: 20.0,
            dropout_count: 5,
            coarse_gain: 0.5,
            step: 0.01,
            satellite_acquisition_delay: 2.0,
            snr_reference: 30.0,
            snr_reference_range_km: 1000.0,
        }
    }
}

impl PatConfig {
    pub fn validate(&self, qfov: f64) -> Result<(), PatError> {
        let err = |m: String| Err(PatError::InvalidConfig(m));
        if !(self.mount.max_slew_rate > 0.0) {
            return err("mount.max_slew_rate must be positive".into());
        }
        if !(self.mount.command_latency >= 0.0) || !(self.mount.jitter_rms >= 0.0) {
            return err("mount latency and jitter must be non-negative".into());
        }
        if !(self.wfov.fov > self.nfov.fov && self.nfov.fov > qfov) {
            return err(format!(
                "fields of view must satisfy wfov ({}) > nfov ({}) > qfov ({qfov})",
                self.wfov.fov, self.nfov.fov
            ));
        }
        for (name, cam) in [("wfov", &self.wfov), ("nfov", &self.nfov)] {
            if !(cam.frame_rate > 0.0) || !(cam.centroid_noise_rms >= 0.0) {
                return err(format!("{name}: frame_rate must be positive and noise non-negative"));
            }
        }
        if !(self.fsm.bandwidth > 0.0) || !(self.fsm.range > 0.0) {
            return err("fsm bandwidth and range must be positive".into());
        }
        if !(self.fsm.loop_gain > 0.0 && self.fsm.loop_gain <= 1.0) {
            return err("fsm.loop_gain must lie in (0, 1]".into());
        }
        if !(self.coarse_gain > 0.0 && self.coarse_gain <= 1.0) {
            return err("coarse_gain must lie in (0, 1]".into());
        }
        if !(self.step > 0.0) || self.dropout_count == 0 {
            return err("step must be positive and dropout_count at least 1".into());
        }
        Ok(())
    }

    /// Fine-loop sub-step: a tenth of the FSM period.
    pub fn fine_step(&self) -> f64 {
        1.0 / (10.0 * self.fsm.bandwidth)
    }
}

pub fn elevation_gate(elevation: f64, threshold: f64) -> bool {
    elevation >= threshold
}

fn gaussian2<R: Rng>(sigma: f64, rng: &mut R) -> Vec2 {
    if sigma <= 0.0 {
        return Vec2::zeros();
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    Vec2::new(n.sample(rng), n.sample(rng))
}

/// Centroid of the beacon spot, or `None` when it falls outside the field.
pub fn centroid_offset<R: Rng>(camera: &CameraModel, true_error: Vec2, rng: &mut R) -> Option<Vec2> {
    if true_error.norm() > camera.fov / 2.0 {
        return None;
    }
    Some(true_error + gaussian2(camera.centroid_noise_rms, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MountState {
    /// Smooth correction on top of the element-set track, arcsec.
    pub position: Vec2,
    /// Jitter held until the next update, arcsec.
    pub jitter: Vec2,
}

impl MountState {
    pub fn realized(&self) -> Vec2 {
        self.position + self.jitter
    }
}

/// Moves toward `commanded` at no more than the slew rate and redraws jitter.
/// Latency is applied by the caller, which delays commands.
pub fn mount_step<R: Rng>(mount: &MountModel, commanded: Vec2, state: MountState, dt: f64, rng: &mut R) -> MountState {
    let max_move = mount.max_slew_rate * ARCSEC_PER_DEG * dt;
    let delta = commanded - state.position;
    let step = if delta.norm() > max_move {
        delta * (max_move / delta.norm())
    } else {
        delta
    };
    MountState {
        position: state.position + step,
        jitter: gaussian2(mount.jitter_rms, rng),
    }
}

fn saturate(v: Vec2, range: f64) -> Vec2 {
    let n = v.norm();
    if n > range {
        v * (range / n)
    } else {
        v
    }
}

/// First-order servo update `cmd + g·(1 − e^(−2π·bw·dt))·measured`, saturated at the range.
pub fn fsm_step(fsm: &FsmModel, command: Vec2, measured_error: Vec2, dt: f64) -> Vec2 {
    let alpha = fsm.loop_gain * (1.0 - (-2.0 * std::f64::consts::PI * fsm.bandwidth * dt).exp());
    saturate(command + measured_error * alpha, fsm.range)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PatMeasurements {
    pub gate_open: bool,
    pub wfov_detected: bool,
    pub nfov_detected: bool,
    pub consecutive_nfov_misses: usize,
}

/// One transition of the acquisition sequence.
pub fn pat_transition(phase: PatPhase, m: &PatMeasurements, config: &PatConfig) -> PatPhase {
    use PatPhase::*;
    if !m.gate_open {
        return Idle;
    }
    match phase {
        Idle => UplinkBeaconPointing,
        UplinkBeaconPointing => OpenLoopCoarse,
        OpenLoopCoarse if m.wfov_detected => ClosedLoopCoarse,
        ClosedLoopCoarse if m.nfov_detected => ClosedLoopFine,
        ClosedLoopFine if m.consecutive_nfov_misses >= config.dropout_count => SignalLost,
        SignalLost => ClosedLoopCoarse,
        p => p,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatState {
    pub time: f64,
    pub phase: PatPhase,
    pub true_error: Vec2,
    pub measured_error: Option<Vec2>,
    pub mount_offset_cmd: Vec2,
    pub fsm_offset_cmd: Vec2,
    /// `|e|` at the end of the step, arcsec.
    pub residual: f64,
    /// Downlink (beacon and quantum signal) is on.
    pub downlink: bool,
}

/// Fine-loop residuals for one outer step spent in closed-loop fine tracking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineSegment {
    pub start: f64,
    pub first: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatRun {
    pub step: f64,
    pub fine_step: f64,
    pub start: f64,
    pub states: Vec<PatState>,
    pub fine_segments: Vec<Option<FineSegment>>,
    /// Residual vectors at the fine-loop rate, arcsec.
    pub fine_residuals: Vec<[f32; 2]>,
}

impl PatRun {
    fn step_index(&self, t: f64) -> Option<usize> {
        let k = ((t - self.start) / self.step).floor();
        (k >= 0.0 && (k as usize) < self.states.len()).then_some(k as usize)
    }

    pub fn state_at(&self, t: f64) -> Option<&PatState> {
        self.step_index(t).map(|k| &self.states[k])
    }

    /// Residual at `t` (fine-rate inside closed-loop fine steps), or `None`
    /// when the downlink is off.
    pub fn residual_at(&self, t: f64) -> Option<f64> {
        let k = self.step_index(t)?;
        let s = &self.states[k];
        if !s.downlink {
            return None;
        }
        if let Some(seg) = self.fine_segments[k] {
            let i = (((t - seg.start) / self.fine_step).floor().max(0.0) as usize).min(seg.len - 1);
            let r = self.fine_residuals[seg.first + i];
            return Some(f64::from(r[0]).hypot(f64::from(r[1])));
        }
        Some(s.residual)
    }

    /// Phase sequence with consecutive repeats removed.
    pub fn phase_trace(&self) -> Vec<PatPhase> {
        let mut out: Vec<PatPhase> = Vec::new();
        for s in &self.states {
            if out.last() != Some(&s.phase) {
                out.push(s.phase);
            }
        }
        out
    }

    pub fn fine_sample_count(&self) -> usize {
        self.fine_residuals.len()
    }

    /// Share of fine-loop samples with residual at or below `limit` arcsec.
    pub fn fine_fraction_within(&self, limit: f64) -> Option<f64> {
        if self.fine_residuals.is_empty() {
            return None;
        }
        let within = self
            .fine_residuals
            .iter()
            .filter(|r| f64::from(r[0]).hypot(f64::from(r[1])) <= limit)
            .count();
        Some(within as f64 / self.fine_residuals.len() as f64)
    }

    /// Fraction of gated (above-threshold) time spent in closed-loop fine tracking.
    pub fn lock_fraction(&self) -> f64 {
        let gated = self.states.iter().filter(|s| s.phase != PatPhase::Idle).count();
        if gated == 0 {
            return 0.0;
        }
        let fine = self.states.iter().filter(|s| s.phase == PatPhase::ClosedLoopFine).count();
        fine as f64 / gated as f64
    }
}

/// Runs the tracking sequence over the whole pass.
pub fn run_pat(geometry: &PassGeometry, config: &PatConfig, seed: u64) -> Result<PatRun, PatError> {
    run_pat_window(geometry, config, 0.0, geometry.duration(), seed)
}

/// Runs the tracking sequence over `[t0, t1]` seconds after AOS, starting idle.
pub fn run_pat_window(geometry: &PassGeometry, config: &PatConfig, t0: f64, t1: f64, seed: u64) -> Result<PatRun, PatError> {
    let dt = config.step;
    let fine_dt = config.fine_step();
    let substeps = ((dt / fine_dt).round() as usize).max(1);
    let fine_dt = dt / substeps as f64;
    let nfov_every = ((1.0 / config.nfov.frame_rate) / fine_dt).round().max(1.0) as usize;
    let wfov_every = ((1.0 / config.wfov.frame_rate) / dt).round().max(1.0) as usize;
    let latency_steps = (config.mount.command_latency / dt).round() as usize;
    let slew_limit = config.mount.max_slew_rate;
    let bias = Vec2::new(config.mount.systematic_bias[0], config.mount.systematic_bias[1]);

    let mut rng = rng(seed);
    let n_steps = ((t1 - t0) / dt).floor().max(0.0) as usize;
    let mut states = Vec::with_capacity(n_steps);
    let mut fine_segments = Vec::with_capacity(n_steps);
    let mut fine_residuals: Vec<[f32; 2]> = Vec::new();

    let mut phase = PatPhase::Idle;
    let mut mount = MountState::default();
    let mut mount_target = Vec2::zeros();
    let mut pending: VecDeque<Vec2> = VecDeque::new();
    let mut fsm = Vec2::zeros();
    let mut slew_lag = 0.0;
    let mut misses = 0usize;
    let mut uplink_on: Option<f64> = None;
    let mut wfov_detected_last = false;
    let mut nfov_detected_last = false;

    for k in 0..n_steps {
        let t = t0 + k as f64 * dt;
        let elevation = geometry.elevation_at(t);
        let gate = elevation_gate(elevation, config.threshold_elevation);

        let next = pat_transition(
            phase,
            &PatMeasurements {
                gate_open: gate,
                wfov_detected: wfov_detected_last,
                nfov_detected: nfov_detected_last,
                consecutive_nfov_misses: misses,
            },
            config,
        );
        if next != phase {
            match next {
                PatPhase::Idle => {
                    uplink_on = None;
                    fsm = Vec2::zeros();
                }
                PatPhase::OpenLoopCoarse => uplink_on = uplink_on.or(Some(t)),
                PatPhase::ClosedLoopCoarse => fsm = Vec2::zeros(),
                PatPhase::ClosedLoopFine => misses = 0,
                _ => {}
            }
            phase = next;
        }

        // Open-loop error: systematic bias plus lag whenever the sky rate beats the mount.
        let excess = geometry.angular_rate_at(t) - slew_limit;
        slew_lag = (slew_lag + excess * ARCSEC_PER_DEG * dt).max(0.0);
        let open_loop = bias + Vec2::new(slew_lag, 0.0);

        let downlink = uplink_on.is_some_and(|u| t >= u + config.satellite_acquisition_delay);
        let snr = config.snr_reference * (config.snr_reference_range_km / geometry.range_at(t)).powi(2);
        let wfov_visible = downlink && snr >= config.wfov.detection_snr_threshold;
        let nfov_visible = downlink && snr >= config.nfov.detection_snr_threshold;

        // Mount: apply the command issued `latency` ago, then move.
        pending.push_back(mount_target);
        let effective = if pending.len() > latency_steps {
            pending.pop_front().expect("queue non-empty")
        } else {
            Vec2::zeros()
        };
        if phase == PatPhase::Idle {
            pending.clear();
            mount_target = Vec2::zeros();
        }
        mount = mount_step(&config.mount, effective, mount, dt, &mut rng);

        let coarse_error = open_loop - mount.realized();
        let wfov_frame = k % wfov_every == 0;
        let mut measured = None;

        match phase {
            PatPhase::OpenLoopCoarse | PatPhase::ClosedLoopCoarse | PatPhase::SignalLost => {
                if wfov_frame {
                    let m = if wfov_visible {
                        centroid_offset(&config.wfov, coarse_error, &mut rng)
                    } else {
                        None
                    };
                    wfov_detected_last = m.is_some();
                    if let (Some(m), true) = (m, phase != PatPhase::OpenLoopCoarse) {
                        mount_target = mount.position + m * config.coarse_gain;
                    }
                    measured = m;
                }
                nfov_detected_last = nfov_visible && coarse_error.norm() <= config.nfov.fov / 2.0;
                fine_segments.push(None);
            }
            PatPhase::ClosedLoopFine => {
                let first = fine_residuals.len();
                let mut offload = None;
                for s in 0..substeps {
                    if s % nfov_every == 0 {
                        let e = coarse_error - fsm;
                        let m = if nfov_visible {
                            centroid_offset(&config.nfov, e, &mut rng)
                        } else {
                            None
                        };
                        match m {
                            Some(m) => {
                                misses = 0;
                                fsm = fsm_step(&config.fsm, fsm, m, fine_dt);
                                offload = Some(m + fsm);
                                measured = Some(m);
                            }
                            None => misses += 1,
                        }
                    }
                    let e = coarse_error - fsm;
                    fine_residuals.push([e.x as f32, e.y as f32]);
                }
                // The mount keeps absorbing the FSM deflection at the wide-camera cadence.
                if let (true, Some(o)) = (wfov_frame, offload) {
                    mount_target = mount.position + o * config.coarse_gain;
                }
                nfov_detected_last = misses == 0;
                fine_segments.push(Some(FineSegment {
                    start: t,
                    first,
                    len: substeps,
                }));
            }
            PatPhase::Idle | PatPhase::UplinkBeaconPointing => {
                wfov_detected_last = false;
                nfov_detected_last = false;
                fine_segments.push(None);
            }
        }

        let true_error = coarse_error - fsm;
        states.push(PatState {
            time: t,
            phase,
            true_error,
            measured_error: measured,
            mount_offset_cmd: mount_target,
            fsm_offset_cmd: fsm,
            residual: true_error.norm(),
            downlink,
        });
    }

    Ok(PatRun {
        step: dt,
        fine_step: fine_dt,
        start: t0,
        states,
        fine_segments,
        fine_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    #[test]
    fn gate_is_inclusive() {
        assert!(!elevation_gate(19.999, 20.0));
        assert!(elevation_gate(20.0, 20.0));
        assert!(elevation_gate(90.0, 20.0));
    }

    #[test]
    fn centroid_field_limits() {
        let cam = CameraModel {
            centroid_noise_rms: 0.0,
            ..CameraModel::narrow()
        };
        let mut r = rng(1);
        assert_eq!(centroid_offset(&cam, Vec2::zeros(), &mut r), Some(Vec2::zeros()));
        assert_eq!(centroid_offset(&cam, Vec2::new(cam.fov, 0.0), &mut r), None);
    }

    #[test]
    fn centroid_noise_level() {
        let cam = CameraModel {
            centroid_noise_rms: 1.0,
            ..CameraModel::narrow()
        };
        let mut r = rng(5);
        let xs: Vec<Vec2> = (0..10_000)
            .map(|_| centroid_offset(&cam, Vec2::zeros(), &mut r).unwrap())
            .collect();
        for axis in 0..2 {
            let var = xs.iter().map(|v| v[axis] * v[axis]).sum::<f64>() / xs.len() as f64;
            assert!((0.97..=1.03).contains(&var.sqrt()), "{}", var.sqrt());
        }
    }

    #[test]
    fn mount_rate_limit_and_jitter() {
        let quiet = MountModel {
            jitter_rms: 0.0,
            ..MountModel::default()
        };
        let mut r = rng(2);
        let s = mount_step(&quiet, Vec2::new(10.0, 0.0), MountState::default(), 1.0, &mut r);
        assert_eq!(s.realized(), Vec2::new(10.0, 0.0));
        let slow = MountModel {
            max_slew_rate: 1.0 / 3600.0,
            ..quiet
        };
        let s = mount_step(&slow, Vec2::new(10.0, 0.0), MountState::default(), 1.0, &mut r);
        assert!((s.position.x - 1.0).abs() < 1e-12);
        let noisy = MountModel::default();
        let s = mount_step(&noisy, Vec2::zeros(), MountState::default(), 1.0, &mut r);
        assert_eq!(s.position, Vec2::zeros());
        assert_eq!(s.realized(), s.jitter);
    }

    #[test]
    fn fsm_converges_geometrically() {
        let fsm = FsmModel {
            loop_gain: 1.0,
            ..FsmModel::default()
        };
        let dt = 1.0 / 6000.0;
        let ratio = (-2.0 * std::f64::consts::PI * fsm.bandwidth * dt).exp();
        let d = Vec2::new(10.0, -4.0);
        let mut cmd = Vec2::zeros();
        for k in 1..=20 {
            cmd = fsm_step(&fsm, cmd, d - cmd, dt);
            let expected = d * ratio.powi(k);
            assert!(((d - cmd) - expected).norm() < 1e-9);
        }
        let fast = FsmModel {
            bandwidth: 1e12,
            loop_gain: 1.0,
            ..fsm
        };
        assert!((fsm_step(&fast, Vec2::zeros(), d, dt) - d).norm() < 1e-12);
        assert!((fsm_step(&fsm, Vec2::zeros(), Vec2::new(1e3, 0.0), 1.0).norm() - fsm.range).abs() < 1e-12);
    }

    #[test]
    fn transition_rules() {
        let cfg = PatConfig::default();
        let open = PatMeasurements {
            gate_open: true,
            ..PatMeasurements::default()
        };
        assert_eq!(pat_transition(PatPhase::Idle, &open, &cfg), PatPhase::UplinkBeaconPointing);
        assert_eq!(
            pat_transition(PatPhase::UplinkBeaconPointing, &open, &cfg),
            PatPhase::OpenLoopCoarse
        );
        assert_eq!(pat_transition(PatPhase::OpenLoopCoarse, &open, &cfg), PatPhase::OpenLoopCoarse);
        let lost = PatMeasurements {
            consecutive_nfov_misses: 5,
            ..open
        };
        assert_eq!(pat_transition(PatPhase::ClosedLoopFine, &lost, &cfg), PatPhase::SignalLost);
        assert_eq!(pat_transition(PatPhase::SignalLost, &open, &cfg), PatPhase::ClosedLoopCoarse);
        assert_eq!(
            pat_transition(PatPhase::ClosedLoopFine, &PatMeasurements::default(), &cfg),
            PatPhase::Idle
        );
    }
}
