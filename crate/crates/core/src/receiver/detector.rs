use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Channel, Origin, ReceiverError, TimeTag};
use crate::seed::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Counts/s per channel.
    pub dark_rate: f64,
    /// Seconds, non-paralyzable.
    pub dead_time: f64,
    /// Seconds RMS.
    pub timing_jitter_rms: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            efficiency: 0.5,
            dark_rate: 150.0,
            dead_time: 50e-9,
            timing_jitter_rms: 150e-12,
        }
    }
}

impl DetectorModel {
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dark_rate: 0.0,
            dead_time: 0.0,
            timing_jitter_rms: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ReceiverError> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(ReceiverError::InvalidDetector(format!(
                "efficiency {} outside [0, 1]",
                self.efficiency
            )));
        }
        for (name, v) in [
            ("dark_rate", self.dark_rate),
            ("dead_time", self.dead_time),
            ("timing_jitter_rms", self.timing_jitter_rms),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ReceiverError::InvalidDetector(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Ground clock relative to the satellite clock: `t_g = t·(1 + drift) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockModel {
    pub offset: f64,
    pub drift: f64,
}

impl ClockModel {
    pub const MAX_DRIFT: f64 = 1e-4;

    pub fn validate(&self) -> Result<(), ReceiverError> {
        if !(self.drift.abs() < Self::MAX_DRIFT) || !self.offset.is_finite() {
            return Err(ReceiverError::InvalidClock(format!(
                "need |drift| < {} and a finite offset (got drift {}, offset {})",
                Self::MAX_DRIFT,
                self.drift,
                self.offset
            )));
        }
        Ok(())
    }

    pub fn apply(&self, t: f64) -> f64 {
        t * (1.0 + self.drift) + self.offset
    }

    pub fn invert(&self, t: f64) -> f64 {
        (t - self.offset) / (1.0 + self.drift)
    }
}

fn prune_dead_time(tags: &mut Vec<TimeTag>, dead_time: f64) {
    if dead_time <= 0.0 {
        return;
    }
    let mut last = f64::NEG_INFINITY;
    tags.retain(|t| {
        if t.time - last >= dead_time {
            last = t.time;
            true
        } else {
            false
        }
    });
}

/// Efficiency thinning, Gaussian jitter, clock transform, per-channel dark
/// counts over `[t0, t1]` (local time) and dead-time pruning, in that order.
/// Returns tags sorted by time.
pub fn apply_detector(
    arrivals: &[TimeTag],
    model: &DetectorModel,
    clock: &ClockModel,
    window: (f64, f64),
    seed: u64,
) -> Vec<TimeTag> {
    let mut rng = rng(seed);
    let jitter = (model.timing_jitter_rms > 0.0)
        .then(|| Normal::new(0.0, model.timing_jitter_rms).expect("finite jitter"));
    let mut per_channel: [Vec<TimeTag>; 5] = Default::default();
    for a in arrivals {
        if model.efficiency < 1.0 && !rng.random_bool(model.efficiency) {
            continue;
        }
        let mut t = a.time;
        if let Some(j) = &jitter {
            t += j.sample(&mut rng);
        }
        per_channel[a.channel.index()].push(TimeTag {
            time: clock.apply(t),
            ..*a
        });
    }
    let (t0, t1) = (clock.apply(window.0), clock.apply(window.1));
    if model.dark_rate > 0.0 && t1 > t0 {
        let mean = model.dark_rate * (t1 - t0);
        let poisson = Poisson::new(mean).expect("positive mean");
        for ch in Channel::POLARIZATION {
            let n = poisson.sample(&mut rng) as usize;
            per_channel[ch.index()].extend((0..n).map(|_| TimeTag {
                time: rng.random_range(t0..t1),
                channel: ch,
                origin: Origin::Dark,
                pair: None,
            }));
        }
    }
    let mut out = Vec::with_capacity(per_channel.iter().map(Vec::len).sum());
    for mut tags in per_channel {
        tags.sort_by(|a, b| a.time.total_cmp(&b.time));
        prune_dead_time(&mut tags, model.dead_time);
        out.extend(tags);
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeaconDetector {
    pub detection_probability: f64,
    /// Seconds RMS, on top of the pulse-width spread.
    pub timing_jitter_rms: f64,
}

impl Default for BeaconDetector {
    fn default() -> Self {
        Self {
            detection_probability: 1.0,
            timing_jitter_rms: 1e-9,
        }
    }
}

/// Ground-clock times of detected beacon pulses. Each pulse is timed at a
/// uniform point inside its width (centred) plus Gaussian jitter.
pub fn detect_beacon(
    schedule: &[f64],
    pulse_width: f64,
    detector: &BeaconDetector,
    clock: &ClockModel,
    seed: u64,
) -> Vec<f64> {
    let mut rng = rng(seed);
    let jitter = (detector.timing_jitter_rms > 0.0)
        .then(|| Normal::new(0.0, detector.timing_jitter_rms).expect("finite jitter"));
    let mut out = Vec::with_capacity(schedule.len());
    for &s in schedule {
        if detector.detection_probability < 1.0 && !rng.random_bool(detector.detection_probability.max(0.0)) {
            continue;
        }
        let mut t = s;
        if pulse_width > 0.0 {
            t += rng.random_range(-0.5..0.5) * pulse_width;
        }
        if let Some(j) = &jitter {
            t += j.sample(&mut rng);
        }
        out.push(clock.apply(t));
    }
    out.sort_by(f64::total_cmp);
    out
}
