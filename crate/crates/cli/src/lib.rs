//! Operational harness around `qauction-core`: valuation datasets, the lot
//! ledger, training runs, evaluation, regret audits and chart emission.

pub mod config;
pub mod dataset;
pub mod error;
pub mod ledger;
pub mod metrics;
pub mod report;
pub mod run;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use run::RunPaths;
