//! Satellite-to-ground entanglement key distribution, simulated end to end.

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bbm92;
pub mod channel;
pub mod error;
pub mod orbit;
pub mod pat;
pub mod polarization;
pub mod receiver;
pub mod scenario;
pub mod seed;
pub mod simulate;
pub mod source;
pub mod telemetry;

pub use bbm92::{MatchedPair, QberEstimate, SiftedKey};
pub use channel::{LinkConfig, LinkProfile, LinkState};
pub use error::SimError;
pub use orbit::{GroundSite, Orbit, PassGeometry, PassWindow, TwoLineElement};
pub use pat::{PatConfig, PatPhase, PatRun};
pub use polarization::{PcsConfig, PcsRun};
pub use receiver::{Channel, ClockModel, Correlation, DetectorModel, TimeTag};
pub use scenario::{Scenario, ScenarioError};
pub use simulate::{simulate_pass, PassOutcome, PassReport};
pub use source::{Basis, PairEvent, SourceConfig};
pub use telemetry::Format;
