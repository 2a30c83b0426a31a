//! Clock recovery from the periodic downlink beacon.
//!
//! A lag histogram of every ground tag against every scheduled pulse within
//! `±max_lag` forms a comb with one tooth per pulse period. When the tags and
//! the schedule cover the same pulse train, the tooth at the true lag collects
//! one more pair than its neighbours, which is what the coarse stage picks.
//! Teeth are summed over a window wide enough to absorb the drift smear.
//! Matched pulse pairs are then fitted by least squares for offset and drift.

use serde::{Deserialize, Serialize};

use super::{ClockModel, ReceiverError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncConfig {
    /// Seconds.
    pub bin_width: f64,
    /// Largest clock offset searched, seconds.
    pub max_lag: f64,
    /// Largest drift the coarse stage tolerates.
    pub max_drift: f64,
    pub min_pulses: usize,
    /// Required ratio of the peak bin to the median bin.
    pub peak_ratio: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            bin_width: 100e-9,
            max_lag: 10e-3,
            max_drift: 1e-5,
            min_pulses: 100,
            peak_ratio: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncResult {
    pub clock: ClockModel,
    pub matched: usize,
    /// RMS of the fit residuals, seconds.
    pub residual_rms: f64,
}

fn fail(msg: impl Into<String>) -> ReceiverError {
    ReceiverError::SyncFailed(msg.into())
}

fn nearest(sorted: &[f64], x: f64) -> usize {
    let i = sorted.partition_point(|&s| s < x);
    if i == 0 {
        0
    } else if i == sorted.len() || x - sorted[i - 1] <= sorted[i] - x {
        i - 1
    } else {
        i
    }
}

/// Least-squares line `g − s = offset + drift·s`, centred for conditioning.
fn fit(pairs: &[(f64, f64)]) -> (ClockModel, f64) {
    let n = pairs.len() as f64;
    let xm = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pairs.iter().map(|p| p.1 - p.0).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(s, g) in pairs {
        let dx = s - xm;
        sxx += dx * dx;
        sxy += dx * (g - s - ym);
    }
    let drift = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let clock = ClockModel {
        offset: ym - drift * xm,
        drift,
    };
    let rms = (pairs
        .iter()
        .map(|&(s, g)| (g - clock.apply(s)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (clock, rms)
}

fn match_pulses(ground: &[f64], schedule: &[f64], clock: &ClockModel, tolerance: f64) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(ground.len());
    let mut last_idx = None;
    for &g in ground {
        let predicted = clock.invert(g);
        let k = nearest(schedule, predicted);
        if (schedule[k] - predicted).abs() > tolerance {
            continue;
        }
        if last_idx == Some(k) {
            // Two tags on one pulse: keep the closer.
            let prev = pairs.last_mut().expect("previous match exists");
            if (clock.invert(prev.1) - schedule[k]).abs() > (predicted - schedule[k]).abs() {
                *prev = (schedule[k], g);
            }
            continue;
        }
        last_idx = Some(k);
        pairs.push((schedule[k], g));
    }
    pairs
}

/// Estimates the ground clock from beacon tags (ground time) and the pulse
/// schedule (satellite time). Both must be sorted.
pub fn beacon_clock_sync(ground: &[f64], schedule: &[f64], config: &SyncConfig) -> Result<SyncResult, ReceiverError> {
    if ground.len() < config.min_pulses || schedule.len() < 2 {
        return Err(fail(format!(
            "{} beacon tags, at least {} needed",
            ground.len(),
            config.min_pulses
        )));
    }
    let mut spacings: Vec<f64> = schedule.windows(2).map(|w| w[1] - w[0]).collect();
    spacings.sort_by(f64::total_cmp);
    let period = spacings[spacings.len() / 2];

    let half_bins = (config.max_lag / config.bin_width).ceil() as usize;
    let nbins = 2 * half_bins + 1;
    let origin = -(half_bins as f64 + 0.5) * config.bin_width;
    let mut counts = vec![0u32; nbins];
    let mut sums = vec![0.0f64; nbins];
    for &g in ground {
        let lo = schedule.partition_point(|&s| s < g - config.max_lag);
        for &s in schedule[lo..].iter().take_while(|&&s| s <= g + config.max_lag) {
            let lag = g - s;
            let b = ((lag - origin) / config.bin_width).floor();
            if b >= 0.0 && (b as usize) < nbins {
                counts[b as usize] += 1;
                sums[b as usize] += lag;
            }
        }
    }

    let mut sorted_counts = counts.clone();
    sorted_counts.sort_unstable();
    let median = f64::from(sorted_counts[nbins / 2]);
    let peak = f64::from(*sorted_counts.last().expect("non-empty histogram"));
    if peak == 0.0 || peak <= config.peak_ratio * median {
        return Err(fail(format!("no correlation peak (peak {peak}, median {median})")));
    }

    let span = schedule[schedule.len() - 1] - schedule[0];
    let width = ((config.max_drift * span) / config.bin_width).ceil() as usize + 3;
    let width = width.min(nbins);
    let mut window: u64 = counts[..width].iter().map(|&c| u64::from(c)).sum();
    let mut best = (window, 0usize);
    for start in 1..=nbins - width {
        window += u64::from(counts[start + width - 1]);
        window -= u64::from(counts[start - 1]);
        if window > best.0 {
            best = (window, start);
        }
    }
    let (best_sum, best_start) = best;
    let exclusion = ((period / 2.0) / config.bin_width) as usize;
    let mut window: u64 = counts[..width].iter().map(|&c| u64::from(c)).sum();
    for start in 0..=nbins - width {
        if start > 0 {
            window += u64::from(counts[start + width - 1]);
            window -= u64::from(counts[start - 1]);
        }
        if start.abs_diff(best_start) > exclusion.max(width) && window >= best_sum {
            return Err(fail("ambiguous correlation peak; beacon tags and schedule do not cover the same pulses"));
        }
    }

    let in_window = best_start..best_start + width;
    let n: u64 = counts[in_window.clone()].iter().map(|&c| u64::from(c)).sum();
    let coarse_offset = sums[in_window].iter().sum::<f64>() / n as f64;

    let tolerance = period / 4.0;
    let mut clock = ClockModel {
        offset: coarse_offset,
        drift: 0.0,
    };
    let mut pairs = match_pulses(ground, schedule, &clock, tolerance);
    for _ in 0..3 {
        if pairs.len() < config.min_pulses {
            break;
        }
        let rms;
        (clock, rms) = fit(&pairs);
        pairs = match_pulses(ground, schedule, &clock, tolerance.min(10.0 * rms.max(1e-9)));
    }
    if pairs.len() < config.min_pulses {
        return Err(fail(format!(
            "only {} matched pulses, at least {} needed",
            pairs.len(),
            config.min_pulses
        )));
    }
    let (clock, rms) = fit(&pairs);
    Ok(SyncResult {
        clock,
        matched: pairs.len(),
        residual_rms: rms,
    })
}
