//! Experiment harness: configuration, suite runners, ledgers, manifests
//! and replay.

// `!(a < b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod run;
pub mod suites;

pub use config::{ExperimentConfig, Suite};
pub use error::{HarnessError, HarnessResult};
pub use run::{emit_report, replay, run_suite, RunManifest};
pub use suites::CheckRow;
