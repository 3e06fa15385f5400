//! Shared fixtures for the benchmarks.

use spectral_ergo::noise::StreamTag;
use spectral_ergo::nonlinearity::random_state;
use spectral_ergo::{FourierState, NonlinearitySpec, PathState, SeedSpec, TrajectoryConfig};

pub const SEED: u64 = 0x5eed;

/// A smooth random state with unit-scale low modes.
pub fn state(n: usize) -> FourierState {
    random_state(n, &SeedSpec::new(SEED, 0, StreamTag::InitialCondition), 0, 1.0)
}

pub fn path_state(n: usize) -> PathState {
    PathState::initial(state(n))
}

pub fn config(n: usize) -> TrajectoryConfig {
    TrajectoryConfig::new(n, 1e-3, 1.0).expect("valid benchmark config")
}

pub fn spec() -> NonlinearitySpec {
    NonlinearitySpec::eps_sin(0.5)
}
