//! Scenario files: every simulation parameter with its default, loaded from
//! TOML (or JSON by extension). Only `tle_path` and `site` are required.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::LinkConfig;
use crate::orbit::{parse_tle_file, GroundSite, TleError, TwoLineElement};
use crate::pat::PatConfig;
use crate::polarization::PcsConfig;
use crate::receiver::{BeaconDetector, ClockModel, Correlation, DetectorModel, SyncConfig};
use crate::source::SourceConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Tle {
        path: String,
        #[source]
        source: TleError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Start of the pass search; the element-set epoch when absent.
    pub start: Option<DateTime<Utc>>,
    pub duration_hours: f64,
    /// Degrees.
    pub min_elevation: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            start: None,
            duration_hours: 24.0,
            min_elevation: 10.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSet {
    pub ground: DetectorModel,
    pub onboard: DetectorModel,
    pub beacon: BeaconDetector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Full coincidence window, seconds.
    pub coincidence_window: f64,
    pub sample_fraction: f64,
    pub correlation: Correlation,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            coincidence_window: 1e-9,
            sample_fraction: 0.1,
            correlation: Correlation::Anticorrelated,
        }
    }
}

/// Time discretisation of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Orbit sampling step for the pass geometry, seconds.
    pub geometry_step: f64,
    /// Cadence of the exported link profile, seconds.
    pub link_step: f64,
    /// Photons are simulated in slices of this length...
    pub slice_duration: f64,
    /// ...one slice per interval while the downlink is up. The report
    /// extrapolates slice totals to the full downlink time.
    pub slice_interval: f64,
    /// Beacon span used for clock recovery around each slice, seconds.
    pub sync_window: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            geometry_step: 1.0,
            link_step: 1.0,
            slice_duration: 1e-3,
            slice_interval: 1.0,
            sync_window: 0.05,
        }
    }
}

fn default_clock() -> ClockModel {
    ClockModel {
        offset: 1.2345e-3,
        drift: 1e-6,
    }
}

fn default_seed() -> u64 {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Element-set file, relative paths resolved against the scenario file.
    pub tle_path: PathBuf,
    pub site: GroundSite,
    /// Catalogue number to select from a multi-set file; first set when absent.
    #[serde(default)]
    pub satellite_number: Option<u32>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub pass_index: usize,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub pat: PatConfig,
    #[serde(default)]
    pub pcs: PcsConfig,
    #[serde(default)]
    pub detectors: DetectorSet,
    #[serde(default = "default_clock")]
    pub clock: ClockModel,
    #[serde(default)]
    pub sync: SyncConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

impl Scenario {
    /// Defaults everywhere except the two required fields.
    pub fn new(tle_path: impl Into<PathBuf>, site: GroundSite) -> Self {
        Self {
            tle_path: tle_path.into(),
            site,
            satellite_number: None,
            seed: default_seed(),
            output_dir: default_output_dir(),
            pass_index: 0,
            search: SearchConfig::default(),
            source: SourceConfig::default(),
            link: LinkConfig::default(),
            pat: PatConfig::default(),
            pcs: PcsConfig::default(),
            detectors: DetectorSet::default(),
            clock: default_clock(),
            sync: SyncConfig::default(),
            protocol: ProtocolConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String, ScenarioError> {
        serde_json::to_string_pretty(self).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Reads a scenario (`.json` as JSON, anything else as TOML) and resolves
    /// `tle_path` against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut scenario = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        if scenario.tle_path.is_relative() {
            if let Some(dir) = path.parent() {
                scenario.tle_path = dir.join(&scenario.tle_path);
            }
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |e: &dyn std::fmt::Display| ScenarioError::Invalid(e.to_string());
        self.site.validate().map_err(|e| invalid(&e))?;
        self.source.validate().map_err(|e| invalid(&e))?;
        self.link.validate().map_err(|e| invalid(&e))?;
        self.pat.validate(self.link.qfov).map_err(|e| invalid(&e))?;
        self.pcs.validate().map_err(|e| invalid(&e))?;
        for d in [&self.detectors.ground, &self.detectors.onboard] {
            d.validate().map_err(|e| invalid(&e))?;
        }
        self.clock.validate().map_err(|e| invalid(&e))?;
        let sim = &self.simulation;
        let checks = [
            ("search.duration_hours", self.search.duration_hours > 0.0 && self.search.duration_hours <= 24.0 * 7.0),
            ("protocol.coincidence_window", self.protocol.coincidence_window > 0.0),
            (
                "protocol.sample_fraction",
                self.protocol.sample_fraction > 0.0 && self.protocol.sample_fraction < 1.0,
            ),
            ("simulation.geometry_step", sim.geometry_step > 0.0),
            ("simulation.link_step", sim.link_step > 0.0),
            ("simulation.slice_duration", sim.slice_duration > 0.0),
            ("simulation.slice_interval", sim.slice_interval >= sim.slice_duration),
            ("simulation.sync_window", sim.sync_window > 0.0),
            (
                "detectors.beacon.detection_probability",
                (0.0..=1.0).contains(&self.detectors.beacon.detection_probability),
            ),
            ("sync.bin_width", self.sync.bin_width > 0.0 && self.sync.max_lag > self.sync.bin_width),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(ScenarioError::Invalid(format!("{name} is out of range")));
            }
        }
        if !self.source.beacon_enabled {
            return Err(ScenarioError::Invalid(
                "source.beacon_enabled = false leaves no timing reference for the ground clock".into(),
            ));
        }
        Ok(())
    }

    /// Loads the selected element set from `tle_path`.
    pub fn load_tle(&self) -> Result<TwoLineElement, ScenarioError> {
        let path = self.tle_path.display().to_string();
        let text = std::fs::read_to_string(&self.tle_path).map_err(|e| ScenarioError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let sets = parse_tle_file(&text).map_err(|source| ScenarioError::Tle {
            path: path.clone(),
            source,
        })?;
        let found = match self.satellite_number {
            Some(n) => sets.into_iter().find(|t| t.satellite_number == n),
            None => sets.into_iter().next(),
        };
        found.ok_or_else(|| ScenarioError::Tle {
            path,
            source: TleError::Incomplete(match self.satellite_number {
                Some(n) => format!("no element set for satellite {n}"),
                None => "file holds no element sets".into(),
            }),
        })
    }
}

/// Commented example listing every option with its default.
pub fn example_scenario() -> String {
    let scenario = Scenario::new("demo.tle", GroundSite {
        latitude: 1.2966,
        longitude: 103.7764,
        altitude: 20.0,
    });
    let body = scenario.to_toml().expect("default scenario serialises");
    format!(
        "# Example scenario with every option at its default value.\n\
         # Only `tle_path` and `[site]` are required; delete anything else to keep the default.\n\
         # Units: seconds, degrees, arcsec for pointing, km for range, counts/s for rates.\n\n{body}"
    )
}
