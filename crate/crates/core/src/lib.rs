//! Bandit algorithms that are near-optimal for both stochastic and
//! adversarial rewards, with the environments and Monte Carlo harness used
//! to study them.

pub mod algorithms;
pub mod bandit;
pub mod concentration;
pub mod environments;
pub mod error;
pub mod harness;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Per-arm statistics in double precision.
pub type ArmStatistics = bandit::ArmStats<f64>;

/// Regret bookkeeping in double precision.
pub type Regret = bandit::RegretLedger<f64>;
