//! Deterministic Monte Carlo ensembles over `gmc-core`: configuration,
//! parallel replica reduction, archives and derived fits.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod export;
pub mod report;
pub mod verify;

pub use config::{ExperimentConfig, Format};
pub use ensemble::{merge_results, run_ensemble, run_range, run_replica, EnsembleResult, ReplicaRecord, Runner};
pub use error::{HarnessError, Result};
