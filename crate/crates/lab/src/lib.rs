//! Experiment harness for the quasineutral Vlasov–Poisson laboratory.
//!
//! The numerics live in `vplab-core`; this crate adds what turns them into
//! experiments: typed run configs, seeded sweep orchestration, trend
//! verdicts, and CSV/JSON reports. The `vplab` binary is a thin CLI over
//! [`experiments`].

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod stats;

pub use error::LabError;

pub type Result<T> = std::result::Result<T, LabError>;
