use thiserror::Error;

use crate::bbm92::Bbm92Error;
use crate::channel::LinkError;
use crate::orbit::{OrbitError, TleError};
use crate::pat::PatError;
use crate::polarization::PolarizationError;
use crate::receiver::ReceiverError;
use crate::scenario::ScenarioError;
use crate::source::SourceError;
use crate::telemetry::TelemetryError;

/// Any failure of an end-to-end run, tagged with the module that raised it.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("orbit_dynamics: {0}")]
    Orbit(#[from] OrbitError),
    #[error("photon_source: {0}")]
    Source(#[from] SourceError),
    #[error("channel_link: {0}")]
    Link(#[from] LinkError),
    #[error("pat_controller: {0}")]
    Pat(#[from] PatError),
    #[error("polarization_correction: {0}")]
    Polarization(#[from] PolarizationError),
    #[error("quantum_receiver: {0}")]
    Receiver(#[from] ReceiverError),
    #[error("bbm92_pipeline: {0}")]
    Protocol(#[from] Bbm92Error),
    #[error("telemetry: {0}")]
    Output(#[from] TelemetryError),
    #[error("orbit_dynamics: pass {index} requested but only {found} found in the search window")]
    NoSuchPass { index: usize, found: usize },
}

impl From<TleError> for SimError {
    fn from(e: TleError) -> Self {
        SimError::Orbit(OrbitError::Tle(e))
    }
}

impl SimError {
    /// Configuration problems (as opposed to bad input data or a failed run).
    pub fn is_config(&self) -> bool {
        matches!(self, SimError::Scenario(ScenarioError::Invalid(_) | ScenarioError::Parse(_)))
            || matches!(
                self,
                SimError::Source(SourceError::InvalidConfig(_) | SourceError::OutOfRange { .. } | SourceError::NonpositiveBrightness(_))
                    | SimError::Link(LinkError::InvalidConfig(_))
                    | SimError::Pat(PatError::InvalidConfig(_))
                    | SimError::Polarization(PolarizationError::InvalidConfig(_) | PolarizationError::DegenerateSettings)
                    | SimError::Receiver(ReceiverError::InvalidDetector(_) | ReceiverError::InvalidClock(_))
                    | SimError::Orbit(OrbitError::InvalidSite(_) | OrbitError::InvalidWindow)
            )
    }

    /// Problems with input data files (element sets, scripted profiles).
    pub fn is_input_data(&self) -> bool {
        matches!(
            self,
            SimError::Scenario(ScenarioError::Io { .. } | ScenarioError::Tle { .. })
                | SimError::Orbit(OrbitError::Tle(_) | OrbitError::DeepSpace { .. } | OrbitError::InvalidElements(_))
        )
    }
}
