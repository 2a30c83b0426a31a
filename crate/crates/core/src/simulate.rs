//! End-to-end pass simulation: orbit → tracking and polarization loops →
//! photon slices through source, channel and both receivers → key report.
//!
//! Photon-level work runs in short time slices spread over the downlink
//! window. Counts measured in the slices are scaled by
//! `downlink_time / photon_time` for the pass-level key estimates.

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::Serialize;

use crate::bbm92::{estimate_qber, secret_bits, secret_fraction, sift, MatchedPair, QberEstimate};
use crate::channel::{apply_channel_scaled, total_transmittance, LinkConfig, LinkProfile, LinkState};
use crate::error::SimError;
use crate::orbit::{predict_passes, time::offset, GroundSite, Orbit, PassGeometry, PassWindow};
use crate::pat::{run_pat, PatRun};
use crate::polarization::{frame_offset_profile, qber_from_residual, run_pcs, PcsRun};
use crate::receiver::{
    apply_detector, beacon_clock_sync, detect_beacon, find_coincidences, measure_polarization, random_channel,
    BeaconDetector, Channel, ClockModel, Correlation, DetectorModel, Origin, SyncConfig, TimeTag,
};
use crate::scenario::Scenario;
use crate::seed::{derive_indexed, derive_seed, rng};
use crate::source::{beacon_schedule, generate_pair_window, qber_from_visibility, SourceConfig};

/// What the photons see at a given pass-relative time.
pub trait LinkEnvironment: Sync {
    fn link_state(&self, t: f64) -> Result<LinkState, SimError>;

    /// Polarization misalignment at the quantum receiver, degrees.
    fn misalignment_deg(&self, t: f64) -> Result<f64, SimError>;

    /// Spacing of link states inside a slice.
    fn profile_step(&self) -> f64;

    fn link_profile(&self, t0: f64, t1: f64) -> Result<LinkProfile, SimError> {
        let step = self.profile_step();
        let span = t1 - t0;
        if !(step < span) {
            return Ok(LinkProfile::new(vec![self.link_state(t0)?], span));
        }
        let n = (span / step).ceil() as usize;
        let states = (0..=n)
            .map(|i| self.link_state((t0 + i as f64 * step).min(t1)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LinkProfile::new(states, step))
    }
}

/// Fixed link and misalignment, for controlled experiments.
#[derive(Debug, Clone)]
pub struct ConstantEnvironment {
    pub state: LinkState,
    pub misalignment_deg: f64,
}

impl ConstantEnvironment {
    /// Lossless link without background or misalignment.
    pub fn ideal() -> Self {
        Self {
            state: LinkState {
                time: 0.0,
                elevation_deg: 90.0,
                range_km: 0.0,
                residual_arcsec: 0.0,
                geometric_loss_db: 0.0,
                atmospheric_loss_db: 0.0,
                pointing_loss_db: 0.0,
                optics_loss_db: 0.0,
                total_transmittance: 1.0,
                background_rate: 0.0,
            },
            misalignment_deg: 0.0,
        }
    }
}

impl LinkEnvironment for ConstantEnvironment {
    fn link_state(&self, t: f64) -> Result<LinkState, SimError> {
        Ok(LinkState { time: t, ..self.state })
    }

    fn misalignment_deg(&self, _t: f64) -> Result<f64, SimError> {
        Ok(self.misalignment_deg)
    }

    fn profile_step(&self) -> f64 {
        f64::INFINITY
    }
}

/// Link driven by the simulated pass: geometry, tracking residual and
/// polarization correction.
pub struct PassEnvironment {
    pub geometry: PassGeometry,
    pub pat: PatRun,
    pub pcs: PcsRun,
    pub link: LinkConfig,
}

impl PassEnvironment {
    /// Downlink on for every tracking step touching `[t0, t1]`.
    pub fn downlink_on(&self, t0: f64, t1: f64) -> bool {
        if t0 < 0.0 || t1 > self.geometry.duration() {
            return false;
        }
        let mut t = t0;
        loop {
            match self.pat.state_at(t) {
                Some(s) if s.downlink => {}
                _ => return false,
            }
            if t >= t1 {
                return true;
            }
            t = (t + self.pat.step).min(t1);
        }
    }

    pub fn downlink_time(&self) -> f64 {
        self.pat.states.iter().filter(|s| s.downlink).count() as f64 * self.pat.step
    }
}

impl LinkEnvironment for PassEnvironment {
    fn link_state(&self, t: f64) -> Result<LinkState, SimError> {
        let el = self.geometry.elevation_at(t);
        let range = self.geometry.range_at(t);
        match self.pat.residual_at(t) {
            Some(residual) if el > 0.0 => Ok(total_transmittance(t, range, el, residual, &self.link)?),
            _ => Ok(LinkState::dark(t, el, range)),
        }
    }

    fn misalignment_deg(&self, t: f64) -> Result<f64, SimError> {
        Ok(self.pcs.residual_at(t)?)
    }

    fn profile_step(&self) -> f64 {
        self.pat.fine_step
    }
}

/// Source, detectors, clocks and protocol settings shared by every slice.
#[derive(Debug, Clone)]
pub struct SliceChain {
    pub source: SourceConfig,
    pub ground: DetectorModel,
    pub onboard: DetectorModel,
    pub beacon: BeaconDetector,
    /// True ground clock relative to the satellite clock.
    pub clock: ClockModel,
    pub sync: SyncConfig,
    pub correlation: Correlation,
    pub coincidence_window: f64,
    pub sync_window: f64,
    pub keep_tags: bool,
}

impl SliceChain {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            source: s.source.clone(),
            ground: s.detectors.ground.clone(),
            onboard: s.detectors.onboard.clone(),
            beacon: s.detectors.beacon.clone(),
            clock: s.clock,
            sync: s.sync.clone(),
            correlation: s.protocol.correlation,
            coincidence_window: s.protocol.coincidence_window,
            sync_window: s.simulation.sync_window,
            keep_tags: false,
        }
    }

    /// Ideal detectors on both sides and a perfect shared clock.
    pub fn ideal(source: SourceConfig) -> Self {
        Self {
            source,
            ground: DetectorModel::ideal(),
            onboard: DetectorModel::ideal(),
            beacon: BeaconDetector {
                detection_probability: 1.0,
                timing_jitter_rms: 0.0,
            },
            clock: ClockModel::default(),
            sync: SyncConfig::default(),
            correlation: Correlation::default(),
            coincidence_window: 1e-9,
            sync_window: 0.05,
            keep_tags: false,
        }
    }
}

/// Counts and matches from one photon slice.
#[derive(Debug, Clone, Default)]
pub struct SliceResult {
    pub start: f64,
    pub duration: f64,
    pub synced: bool,
    pub recovered_clock: Option<ClockModel>,
    pub pairs_emitted: usize,
    pub ground_arrivals: usize,
    pub ground_tags: usize,
    pub onboard_tags: usize,
    pub matches: Vec<MatchedPair>,
    pub accidental_estimate: f64,
    pub misalignment_deg: f64,
    pub link: Option<LinkState>,
    /// Ground tags on the recovered clock and on-board tags, when kept.
    pub tags: Option<(Vec<TimeTag>, Vec<TimeTag>)>,
}

impl SliceResult {
    pub fn true_coincidences(&self) -> usize {
        self.matches.iter().filter(|m| m.true_pair).count()
    }
}

/// Simulates `[t0, t0 + duration]` of photons through the full chain.
///
/// A beacon span of `sync_window` centred on the slice is used to recover
/// the ground clock; a failed recovery yields `synced = false` and no matches.
pub fn simulate_slice(
    chain: &SliceChain,
    env: &dyn LinkEnvironment,
    t0: f64,
    duration: f64,
    seed: u64,
) -> Result<SliceResult, SimError> {
    let t1 = t0 + duration;
    let stream = generate_pair_window(&chain.source, t0, duration, derive_seed(seed, "source"))?;
    let profile = env.link_profile(t0, t1)?;
    let arrivals = apply_channel_scaled(&stream, &profile, chain.source.downlink_fraction, derive_seed(seed, "channel"))?;

    let mut measure = rng(derive_seed(seed, "ground_measurement"));
    let mut ground_photons = Vec::with_capacity(arrivals.len());
    for a in &arrivals {
        let (channel, origin) = match a.pair {
            Some(k) => {
                let delta = env.misalignment_deg(a.time)?;
                (measure_polarization(&stream.events[k], chain.correlation, delta, &mut measure), Origin::Signal)
            }
            None => (random_channel(&mut measure), Origin::Background),
        };
        ground_photons.push(TimeTag {
            time: a.time,
            channel,
            origin,
            pair: a.pair,
        });
    }
    let ground = apply_detector(&ground_photons, &chain.ground, &chain.clock, (t0, t1), derive_seed(seed, "ground_detector"));

    let onboard_photons: Vec<TimeTag> = stream
        .events
        .iter()
        .enumerate()
        .map(|(k, e)| TimeTag {
            time: e.emission_time,
            channel: Channel::from_measurement(e.idler_basis, e.idler_outcome),
            origin: Origin::Signal,
            pair: Some(k),
        })
        .collect();
    let onboard = apply_detector(
        &onboard_photons,
        &chain.onboard,
        &ClockModel::default(),
        (t0, t1),
        derive_seed(seed, "onboard_detector"),
    );

    let centre = t0 + duration / 2.0;
    let sync_start = (centre - chain.sync_window / 2.0).max(0.0);
    let schedule = beacon_schedule(chain.source.beacon_frequency, sync_start, chain.sync_window);
    let beacon_tags = detect_beacon(
        &schedule,
        chain.source.beacon_pulse_width,
        &chain.beacon,
        &chain.clock,
        derive_seed(seed, "beacon"),
    );
    let mut result = SliceResult {
        start: t0,
        duration,
        pairs_emitted: stream.events.len(),
        ground_arrivals: arrivals.len(),
        ground_tags: ground.len(),
        onboard_tags: onboard.len(),
        misalignment_deg: env.misalignment_deg(centre)?,
        link: Some(env.link_state(centre)?),
        ..SliceResult::default()
    };
    let clock = match beacon_clock_sync(&beacon_tags, &schedule, &chain.sync) {
        Ok(s) => s.clock,
        Err(e) => {
            log::warn!("slice at {t0:.3} s: {e}");
            return Ok(result);
        }
    };
    result.synced = true;
    result.recovered_clock = Some(clock);

    let ground: Vec<TimeTag> = ground
        .into_iter()
        .map(|g| TimeTag {
            time: clock.invert(g.time),
            ..g
        })
        .collect();
    let a: Vec<f64> = ground.iter().map(|g| g.time).collect();
    let b: Vec<f64> = onboard.iter().map(|o| o.time).collect();
    let found = find_coincidences(&a, &b, chain.coincidence_window, duration);
    result.accidental_estimate = found.accidental_estimate;
    result.matches = found
        .pairs
        .iter()
        .filter_map(|&(i, j)| {
            let (g, o) = (&ground[i], &onboard[j]);
            let (ground_basis, ground_bit) = g.channel.measurement()?;
            let (onboard_basis, onboard_bit) = o.channel.measurement()?;
            Some(MatchedPair {
                ground_basis,
                ground_bit,
                onboard_basis,
                onboard_bit,
                true_pair: g.pair.is_some() && g.pair == o.pair,
            })
        })
        .collect();
    if chain.keep_tags {
        result.tags = Some((ground, onboard));
    }
    Ok(result)
}

/// Runs slices starting at each of `starts` in parallel; results keep the input order.
pub fn simulate_slices(
    chain: &SliceChain,
    env: &dyn LinkEnvironment,
    starts: &[f64],
    duration: f64,
    seed: u64,
) -> Result<Vec<SliceResult>, SimError> {
    starts
        .par_iter()
        .enumerate()
        .map(|(k, &t0)| simulate_slice(chain, env, t0, duration, derive_indexed(seed, "slice", k as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBudget {
    pub geometric_db: f64,
    pub atmospheric_db: f64,
    pub pointing_db: f64,
    pub optics_db: f64,
    pub total_transmittance: f64,
    pub background_rate: f64,
}

/// Expected QBER contributions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QberBudget {
    pub source: f64,
    /// Mean `sin²` of the polarization misalignment over the slices.
    pub polarization: Option<f64>,
    /// Half the measured accidental share of coincidences.
    pub accidental: Option<f64>,
}

/// Totals over a set of slices after sifting and parameter estimation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyStatistics {
    pub key_model: &'static str,
    pub slices: usize,
    pub sync_failures: usize,
    pub photon_time_s: f64,
    pub pairs_emitted: usize,
    pub ground_tags: usize,
    pub onboard_tags: usize,
    pub coincidences: usize,
    pub true_coincidences: usize,
    pub accidental_coincidences: usize,
    pub accidental_estimate: f64,
    pub sifted_bits: usize,
    pub discarded_mismatched_basis: usize,
    pub qber_estimate: Option<f64>,
    pub qber_std_error: Option<f64>,
    pub qber_sample_size: usize,
    pub qber_low_sample: bool,
    /// Disagreement over the whole sifted key (ground truth, not disclosed).
    pub qber_full: Option<f64>,
    pub secret_fraction: f64,
    pub secret_bits: u64,
    pub loss_budget: Option<LossBudget>,
    pub qber_budget: QberBudget,
}

/// Sifts, estimates the QBER on a disclosed sample and computes the key.
pub fn aggregate(
    slices: &[SliceResult],
    source: &SourceConfig,
    correlation: Correlation,
    sample_fraction: f64,
    seed: u64,
) -> Result<KeyStatistics, SimError> {
    let synced: Vec<&SliceResult> = slices.iter().filter(|s| s.synced).collect();
    let matches: Vec<MatchedPair> = synced.iter().flat_map(|s| s.matches.iter().copied()).collect();
    let (key, discarded) = sift(&matches, correlation);
    let estimate: Option<QberEstimate> = if key.is_empty() {
        None
    } else {
        Some(estimate_qber(&key, sample_fraction, &mut rng(derive_seed(seed, "qber_sample")))?)
    };
    let r = match &estimate {
        Some(e) => secret_fraction(e.estimate.min(0.5))?,
        None => 0.0,
    };
    let coincidences = matches.len();
    let true_coincidences = matches.iter().filter(|m| m.true_pair).count();
    let accidental_coincidences = coincidences - true_coincidences;
    let n = synced.len();
    let mean = |f: &dyn Fn(&LinkState) -> f64| {
        let v: Vec<f64> = synced.iter().filter_map(|s| s.link.as_ref()).map(f).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let loss_budget = (n > 0).then(|| LossBudget {
        geometric_db: mean(&|l| l.geometric_loss_db),
        atmospheric_db: mean(&|l| l.atmospheric_loss_db),
        pointing_db: mean(&|l| l.pointing_loss_db),
        optics_db: mean(&|l| l.optics_loss_db),
        total_transmittance: mean(&|l| l.total_transmittance),
        background_rate: mean(&|l| l.background_rate),
    });
    let accidental_share = (coincidences > 0).then(|| accidental_coincidences as f64 / coincidences as f64);
    Ok(KeyStatistics {
        key_model: "asymptotic",
        slices: slices.len(),
        sync_failures: slices.len() - n,
        photon_time_s: synced.iter().map(|s| s.duration).sum(),
        pairs_emitted: synced.iter().map(|s| s.pairs_emitted).sum(),
        ground_tags: synced.iter().map(|s| s.ground_tags).sum(),
        onboard_tags: synced.iter().map(|s| s.onboard_tags).sum(),
        coincidences,
        true_coincidences,
        accidental_coincidences,
        accidental_estimate: synced.iter().map(|s| s.accidental_estimate).sum(),
        sifted_bits: key.len(),
        discarded_mismatched_basis: discarded,
        qber_estimate: estimate.as_ref().map(|e| e.estimate),
        qber_std_error: estimate.as_ref().map(|e| e.std_error),
        qber_sample_size: estimate.as_ref().map_or(0, |e| e.sample_size),
        qber_low_sample: estimate.as_ref().map_or(true, |e| e.low_sample),
        qber_full: key.full_qber(),
        secret_fraction: r,
        secret_bits: secret_bits(key.len(), r, sample_fraction),
        loss_budget,
        qber_budget: QberBudget {
            source: qber_from_visibility(source.visibility)?,
            polarization: (n > 0)
                .then(|| synced.iter().map(|s| qber_from_residual(s.misalignment_deg)).sum::<f64>() / n as f64),
            accidental: accidental_share.map(|a| a / 2.0),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassReport {
    pub pass_index: usize,
    pub aos: DateTime<Utc>,
    pub los: DateTime<Utc>,
    pub culmination: DateTime<Utc>,
    pub max_elevation_deg: f64,
    pub max_angular_rate_deg_s: f64,
    pub seed: u64,
    pub downlink_time_s: f64,
    pub pat_lock_fraction: f64,
    /// Share of fine-loop samples inside half the quantum field of view.
    pub fine_within_half_qfov: Option<f64>,
    pub key: KeyStatistics,
    /// Slice totals scaled to the whole downlink time.
    pub extrapolated_sifted_bits: f64,
    pub extrapolated_secret_bits: f64,
}

/// Everything a pass run produces.
pub struct PassOutcome {
    pub report: PassReport,
    pub env: PassEnvironment,
    pub slices: Vec<SliceResult>,
}

impl PassOutcome {
    /// Link states on the `step` grid over the whole pass.
    pub fn link_samples(&self, step: f64) -> Result<Vec<LinkState>, SimError> {
        link_samples(&self.env, step)
    }
}

pub fn link_samples(env: &PassEnvironment, step: f64) -> Result<Vec<LinkState>, SimError> {
    let end = env.geometry.duration();
    let n = (end / step).floor() as usize;
    (0..=n).map(|i| env.link_state(i as f64 * step)).collect()
}

/// Passes in the scenario's search window.
pub fn find_passes(scenario: &Scenario) -> Result<(Orbit, Vec<PassWindow>), SimError> {
    let orbit = Orbit::new(scenario.load_tle()?)?;
    let start = scenario.search.start.unwrap_or_else(|| orbit.epoch());
    let end = offset(start, scenario.search.duration_hours * 3600.0);
    let passes = predict_passes(&orbit, &scenario.site, start, end, scenario.search.min_elevation)?;
    Ok((orbit, passes))
}

/// Geometry, tracking and polarization loops for the selected pass.
pub fn pass_environment(scenario: &Scenario, orbit: &Orbit, pass: &PassWindow) -> Result<PassEnvironment, SimError> {
    let site: &GroundSite = &scenario.site;
    let geometry = PassGeometry::sample(orbit, site, pass, scenario.simulation.geometry_step)?;
    let pat = run_pat(&geometry, &scenario.pat, derive_seed(scenario.seed, "pat_controller"))?;
    let frame = frame_offset_profile(&geometry, &scenario.pcs.frame)?;
    let pcs = run_pcs(&frame, &scenario.pcs, geometry.duration(), derive_seed(scenario.seed, "polarization"))?;
    Ok(PassEnvironment {
        geometry,
        pat,
        pcs,
        link: scenario.link.clone(),
    })
}

/// Slice start times: one per `slice_interval` wherever the downlink covers
/// the slice and its beacon span.
pub fn slice_starts(env: &PassEnvironment, scenario: &Scenario) -> Vec<f64> {
    let sim = &scenario.simulation;
    let end = env.geometry.duration();
    let n = (end / sim.slice_interval).floor() as usize;
    (0..=n)
        .map(|k| k as f64 * sim.slice_interval)
        .filter(|&t0| {
            let centre = t0 + sim.slice_duration / 2.0;
            let a = t0.min(centre - sim.sync_window / 2.0);
            let b = (t0 + sim.slice_duration).max(centre + sim.sync_window / 2.0);
            env.downlink_on(a, b)
        })
        .collect()
}

/// Runs the full pipeline for the scenario's selected pass.
pub fn simulate_pass(scenario: &Scenario, keep_tags: bool) -> Result<PassOutcome, SimError> {
    scenario.validate()?;
    let (orbit, passes) = find_passes(scenario)?;
    let pass = passes.get(scenario.pass_index).ok_or(SimError::NoSuchPass {
        index: scenario.pass_index,
        found: passes.len(),
    })?;
    let env = pass_environment(scenario, &orbit, pass)?;
    let mut chain = SliceChain::from_scenario(scenario);
    chain.source.rng_seed = derive_seed(scenario.seed, "photon_source");
    chain.keep_tags = keep_tags;
    let starts = slice_starts(&env, scenario);
    let slices = simulate_slices(
        &chain,
        &env,
        &starts,
        scenario.simulation.slice_duration,
        derive_seed(scenario.seed, "photons"),
    )?;
    let key = aggregate(
        &slices,
        &scenario.source,
        scenario.protocol.correlation,
        scenario.protocol.sample_fraction,
        scenario.seed,
    )?;
    let downlink_time_s = env.downlink_time();
    let scale = if key.photon_time_s > 0.0 {
        downlink_time_s / key.photon_time_s
    } else {
        0.0
    };
    let report = PassReport {
        pass_index: scenario.pass_index,
        aos: pass.aos,
        los: pass.los,
        culmination: pass.culmination,
        max_elevation_deg: pass.max_elevation,
        max_angular_rate_deg_s: pass.max_angular_rate,
        seed: scenario.seed,
        downlink_time_s,
        pat_lock_fraction: env.pat.lock_fraction(),
        fine_within_half_qfov: env.pat.fine_fraction_within(scenario.link.qfov / 2.0),
        extrapolated_sifted_bits: key.sifted_bits as f64 * scale,
        extrapolated_secret_bits: key.secret_bits as f64 * scale,
        key,
    };
    Ok(PassOutcome { report, env, slices })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn low_rate_source(visibility: f64) -> SourceConfig {
        SourceConfig {
            pump_power: 0.01,
            visibility,
            downlink_fraction: 1.0,
            ..SourceConfig::default()
        }
    }

    #[test]
    fn ideal_chain_recovers_every_pair() {
        let chain = SliceChain::ideal(low_rate_source(1.0));
        let r = simulate_slice(&chain, &ConstantEnvironment::ideal(), 1.0, 0.01, 3).unwrap();
        assert!(r.synced);
        assert_eq!(r.matches.len(), r.pairs_emitted);
        assert!(r.matches.iter().all(|m| m.true_pair));
        let (key, _) = sift(&r.matches, chain.correlation);
        assert_eq!(key.errors(), 0);
    }

    #[test]
    fn clock_offset_is_recovered() {
        let mut chain = SliceChain::ideal(low_rate_source(1.0));
        chain.clock = ClockModel {
            offset: 1.2345e-3,
            drift: 1e-6,
        };
        let r = simulate_slice(&chain, &ConstantEnvironment::ideal(), 200.0, 0.01, 9).unwrap();
        let c = r.recovered_clock.unwrap();
        assert!((c.apply(200.005) - chain.clock.apply(200.005)).abs() < 1e-10);
        assert_eq!(r.true_coincidences(), r.pairs_emitted);
    }

    #[test]
    fn misalignment_adds_errors() {
        let chain = SliceChain::ideal(low_rate_source(1.0));
        let env = ConstantEnvironment {
            misalignment_deg: 45.0,
            ..ConstantEnvironment::ideal()
        };
        let r = simulate_slice(&chain, &env, 0.0, 0.05, 5).unwrap();
        let (key, _) = sift(&r.matches, chain.correlation);
        let q = key.full_qber().unwrap();
        assert!((q - 0.5).abs() < 0.05, "{q}");
    }

    #[test]
    fn slices_are_deterministic_and_ordered() {
        let chain = SliceChain::ideal(low_rate_source(0.98));
        let env = ConstantEnvironment::ideal();
        let a = simulate_slices(&chain, &env, &[0.0, 1.0, 2.0], 0.01, 11).unwrap();
        let b = simulate_slices(&chain, &env, &[0.0, 1.0, 2.0], 0.01, 11).unwrap();
        assert_eq!(a.iter().map(|s| s.matches.clone()).collect::<Vec<_>>(), b.iter().map(|s| s.matches.clone()).collect::<Vec<_>>());
        assert_eq!(a.iter().map(|s| s.start).collect::<Vec<_>>(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn aggregate_handles_no_slices() {
        let k = aggregate(&[], &SourceConfig::default(), Correlation::default(), 0.1, 1).unwrap();
        assert_eq!(k.sifted_bits, 0);
        assert_eq!(k.qber_estimate, None);
        assert_eq!(k.secret_bits, 0);
        assert!(k.loss_budget.is_none());
    }
}
