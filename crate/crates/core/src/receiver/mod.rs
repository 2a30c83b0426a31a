//! Four-channel polarization receiver: measurement, detector effects,
//! beacon clock synchronisation and coincidence search.

mod coincidence;
mod detector;
mod sync;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coincidence::{accidental_estimate, find_coincidences, CoincidenceResult};
pub use detector::{apply_detector, detect_beacon, BeaconDetector, ClockModel, DetectorModel};
pub use sync::{beacon_clock_sync, SyncConfig};

use crate::source::Basis;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReceiverError {
    #[error("invalid detector model: {0}")]
    InvalidDetector(String),
    #[error("invalid clock model: {0}")]
    InvalidClock(String),
    #[error("beacon synchronisation failed: {0}")]
    SyncFailed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    H,
    V,
    A,
    D,
    Beacon,
}

impl Channel {
    pub const POLARIZATION: [Channel; 4] = [Channel::H, Channel::V, Channel::A, Channel::D];

    /// Channel for an outcome bit within a basis: HV false→H, true→V; AD false→D, true→A.
    pub fn from_measurement(basis: Basis, bit: bool) -> Self {
        match (basis, bit) {
            (Basis::HV, false) => Channel::H,
            (Basis::HV, true) => Channel::V,
            (Basis::AD, false) => Channel::D,
            (Basis::AD, true) => Channel::A,
        }
    }

    /// Basis and bit of a polarization channel; `None` for the beacon.
    pub fn measurement(self) -> Option<(Basis, bool)> {
        match self {
            Channel::H => Some((Basis::HV, false)),
            Channel::V => Some((Basis::HV, true)),
            Channel::D => Some((Basis::AD, false)),
            Channel::A => Some((Basis::AD, true)),
            Channel::Beacon => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Channel::H => 0,
            Channel::V => 1,
            Channel::A => 2,
            Channel::D => 3,
            Channel::Beacon => 255,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Channel::H),
            1 => Some(Channel::V),
            2 => Some(Channel::A),
            3 => Some(Channel::D),
            255 => Some(Channel::Beacon),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Channel::H => "H",
            Channel::V => "V",
            Channel::A => "A",
            Channel::D => "D",
            Channel::Beacon => "BEACON",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "H" => Some(Channel::H),
            "V" => Some(Channel::V),
            "A" => Some(Channel::A),
            "D" => Some(Channel::D),
            "BEACON" => Some(Channel::Beacon),
            _ => None,
        }
    }

    fn index(self) -> usize {
        match self {
            Channel::H => 0,
            Channel::V => 1,
            Channel::A => 2,
            Channel::D => 3,
            Channel::Beacon => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Signal,
    Dark,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeTag {
    pub time: f64,
    pub channel: Channel,
    /// Ground truth, never exported.
    pub origin: Origin,
    /// Index of the source pair for signal tags.
    pub pair: Option<usize>,
}

/// Bit relation between the two photons of a pair in a matched basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    Correlated,
    #[default]
    Anticorrelated,
}

impl Correlation {
    pub fn flips(self) -> bool {
        self == Correlation::Anticorrelated
    }
}

/// Ground-side outcome for one signal photon.
///
/// The basis is drawn uniformly. In the idler's basis the outcome follows the
/// pair correlation, broken by the source error flag and by a misalignment
/// flip with probability sin²(δ); in the other basis it is the pair's latent bit.
pub fn measure_polarization<R: rand::Rng>(
    event: &crate::source::PairEvent,
    correlation: Correlation,
    misalignment_deg: f64,
    rng: &mut R,
) -> Channel {
    let basis = Basis::from_bit(rng.random());
    let flip_p = crate::polarization::qber_from_residual(misalignment_deg);
    let misaligned = flip_p > 0.0 && rng.random_bool(flip_p.min(1.0));
    let bit = if basis == event.idler_basis {
        event.idler_outcome ^ correlation.flips() ^ event.error_flag ^ misaligned
    } else {
        event.latent_bit
    };
    Channel::from_measurement(basis, bit)
}

/// Channel for a background photon: uniform over the four outputs.
pub fn random_channel<R: rand::Rng>(rng: &mut R) -> Channel {
    Channel::POLARIZATION[rng.random_range(0..4)]
}
