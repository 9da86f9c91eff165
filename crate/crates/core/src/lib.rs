//! Ruin theory for Markov-modulated risk processes.

pub mod asymptotics;
pub mod claims;
pub mod error;
pub mod model;
pub mod numerics;
pub mod parisian;
pub mod ruin;
pub mod scale;
pub mod simulate;
pub mod spectral;

#[cfg(test)]
pub(crate) mod testing;

pub use claims::ClaimLaw;
pub use error::{Result, RiskError};
pub use model::{drift_report, stationary_distribution, validate_model, DriftReport, ModelSpec, RegimeModel};
