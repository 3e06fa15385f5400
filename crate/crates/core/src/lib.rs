//! Spectral Galerkin simulation of
//!
//! ```text
//! dX = (D_ξ²X - X + D_ξ F(X)) dt + dW
//! ```
//!
//! on 2π-periodic functions, together with Monte Carlo checks of the
//! quantitative bounds satisfied by its solutions, its transition
//! semigroup and its invariant measure.

// `!(a < b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod dynamics;
pub mod ergodics;
pub mod error;
pub mod exec;
pub mod kolmogorov;
pub mod noise;
pub mod nonlinearity;
pub mod oracle;
pub mod semigroup_mc;
pub mod spectral;
pub mod stats;

pub use dynamics::{PathRecord, PathState, TrajectoryConfig, VariationalState};
pub use ergodics::{EmpiricalMeasure, MomentReport};
pub use error::{Error, Result};
pub use kolmogorov::{CylindricalFunction, InequalityReport, Trig, Verdict};
pub use noise::{SeedSpec, StreamTag};
pub use nonlinearity::NonlinearitySpec;
pub use semigroup_mc::{MCEstimate, Observable};
pub use spectral::{FourierState, GridField, SobolevIndex, SpectralTransform};
