//! Deterministic desk-scale Open RAN control-plane simulator: wireless
//! primitives, a Near-RT RIC message core, A1 policy handling, four xApps,
//! and a discrete-event RAN simulator with CSV trace export.

pub mod error;
pub mod policy;
pub mod ric;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod wireless;
pub mod xapp;

pub use error::{ConfigError, DomainError, SimError};
pub use policy::{A1Policy, PolicyBody, PolicyScope};
pub use ric::{ControlPayload, Ric};
pub use scenario::ScenarioConfig;
pub use trace::SimulationTrace;
pub use wireless::{Beam, LocalizationTechnique, Position, PropagationParams, TaConfig};
