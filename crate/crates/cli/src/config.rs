//! Experiment configuration: a versioned TOML file, validated at load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spectral_ergo::{NonlinearitySpec, SeedSpec, TrajectoryConfig};

use crate::error::{HarnessError, HarnessResult};

pub const CONFIG_VERSION: u32 = 1;

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "SPECTRAL_ERGO_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    KernelBound,
    MittagLeffler,
    Ed3,
    Ed4,
    Galerkin,
    Energy,
    BismutElworthy,
    Feller,
    Irreducible,
    Moments,
    Invariance,
    Ibpf,
    Poincare,
    Gap,
    Pf2,
    Logsob,
}

impl Suite {
    pub const ALL: [Suite; 16] = [
        Suite::KernelBound,
        Suite::MittagLeffler,
        Suite::Ed3,
        Suite::Ed4,
        Suite::Galerkin,
        Suite::Energy,
        Suite::BismutElworthy,
        Suite::Feller,
        Suite::Irreducible,
        Suite::Moments,
        Suite::Invariance,
        Suite::Ibpf,
        Suite::Poincare,
        Suite::Gap,
        Suite::Pf2,
        Suite::Logsob,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::KernelBound => "kernel_bound",
            Suite::MittagLeffler => "mittag_leffler",
            Suite::Ed3 => "ed3",
            Suite::Ed4 => "ed4",
            Suite::Galerkin => "galerkin",
            Suite::Energy => "energy",
            Suite::BismutElworthy => "bismut_elworthy",
            Suite::Feller => "feller",
            Suite::Irreducible => "irreducible",
            Suite::Moments => "moments",
            Suite::Invariance => "invariance",
            Suite::Ibpf => "ibpf",
            Suite::Poincare => "poincare",
            Suite::Gap => "gap",
            Suite::Pf2 => "pf2",
            Suite::Logsob => "logsob",
        }
    }

    /// Suites that read the empirical invariant measure.
    pub fn needs_measure(self) -> bool {
        matches!(
            self,
            Suite::Moments | Suite::Invariance | Suite::Ibpf | Suite::Poincare | Suite::Gap | Suite::Pf2 | Suite::Logsob
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    Zero,
    Sin,
    Rational,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub kind: SpecKind,
    #[serde(default)]
    pub eps: f64,
}

impl SpecConfig {
    pub fn build(&self) -> HarnessResult<NonlinearitySpec> {
        if !self.eps.is_finite() {
            return Err(HarnessError::Config(format!("nonlinearity eps must be finite, got {}", self.eps)));
        }
        Ok(match self.kind {
            SpecKind::Zero => NonlinearitySpec::zero(),
            SpecKind::Sin => NonlinearitySpec::eps_sin(self.eps),
            SpecKind::Rational => NonlinearitySpec::rational(self.eps),
            SpecKind::Linear => NonlinearitySpec::linear(self.eps)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    pub n: usize,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub grid_m: Option<usize>,
}

impl Discretization {
    pub fn build(&self) -> HarnessResult<TrajectoryConfig> {
        let cfg = TrajectoryConfig::new(self.n, self.dt, self.t_final)?;
        Ok(match self.grid_m {
            Some(m) => cfg.with_grid(m)?,
            None => cfg,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarlo {
    pub replicas: usize,
    pub seed: u64,
    /// Outer ν-samples of nested estimates.
    pub outer: usize,
    /// Inner replicas per outer sample.
    pub inner: usize,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self {
            replicas: 200,
            seed: 1,
            outer: 200,
            inner: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureConfig {
    pub chains: usize,
    /// Length of each chain.
    pub t_final: f64,
    /// Defaults to five relaxation times of the gap bound.
    pub burn_in: Option<f64>,
    pub thinning: f64,
    /// Time step of the chains; the trajectory step when absent.
    pub dt: Option<f64>,
    /// Reuse a saved measure instead of sampling one.
    pub load: Option<PathBuf>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            chains: 8,
            t_final: 200.0,
            burn_in: None,
            thinning: 0.5,
            dt: None,
            load: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckParams {
    /// Directions for the derivative-flow checks.
    pub directions: usize,
    /// Cylindrical test functions per inequality suite.
    pub battery: usize,
    /// Highest mode of battery directions.
    pub battery_modes: usize,
    /// Finite-difference step of the gradient comparison.
    pub fd_eps: f64,
    /// Times of the semigroup checks.
    pub times: Vec<f64>,
    /// Time grid of the spectral gap decay.
    pub gap_times: Vec<f64>,
    pub pf2_time: f64,
    pub m_grad: usize,
    /// Random (x, y, φ) triples of the strong Feller check.
    pub feller_pairs: usize,
    pub feller_distance: f64,
    pub galerkin_levels: Vec<usize>,
    pub probe_radius: f64,
    pub energy_epsilon: f64,
}

impl Default for CheckParams {
    fn default() -> Self {
        Self {
            directions: 5,
            battery: 10,
            battery_modes: 4,
            fd_eps: 1e-3,
            times: vec![0.5, 1.0],
            gap_times: vec![0.25, 0.5, 0.75, 1.0],
            pf2_time: 1.0,
            m_grad: 8,
            feller_pairs: 20,
            feller_distance: 0.1,
            galerkin_levels: vec![4, 8, 16],
            probe_radius: 1.0,
            energy_epsilon: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub config_version: u32,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads (0: one per core). Never changes a result.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub suites: Vec<Suite>,
    pub nonlinearity: SpecConfig,
    pub discretization: Discretization,
    #[serde(default)]
    pub monte_carlo: MonteCarlo,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub checks: CheckParams,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> HarnessResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> HarnessResult<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.config_version != CONFIG_VERSION {
            return bad(format!(
                "unsupported config_version {} (expected {CONFIG_VERSION})",
                self.config_version
            ));
        }
        self.nonlinearity.build()?;
        let traj = self.discretization.build()?;
        let mc = &self.monte_carlo;
        if mc.replicas < 2 || mc.outer < 2 || mc.inner < 2 {
            return bad("replicas, outer and inner must all be >= 2".into());
        }
        let m = &self.measure;
        if m.chains == 0 || !(m.thinning > 0.0) || !(m.t_final > 0.0) {
            return bad("measure needs chains > 0, thinning > 0 and t_final > 0".into());
        }
        if let Some(b) = m.burn_in {
            if !(b >= 0.0 && b < m.t_final) {
                return bad(format!("measure burn_in must lie in [0, t_final), got {b}"));
            }
        }
        let c = &self.checks;
        if c.m_grad > traj.n {
            return bad(format!("m_grad = {} exceeds n = {}", c.m_grad, traj.n));
        }
        if c.times.iter().chain(&c.gap_times).any(|t| !(*t > 0.0)) || !(c.pf2_time >= 0.0) {
            return bad("check times must be positive".into());
        }
        if !(c.fd_eps > 0.0) || !(c.feller_distance > 0.0) || !(c.probe_radius > 0.0) {
            return bad("fd_eps, feller_distance and probe_radius must be positive".into());
        }
        if c.galerkin_levels.is_empty() || c.galerkin_levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad("galerkin_levels must be strictly increasing and nonempty".into());
        }
        if !(0.0..=1.0).contains(&c.energy_epsilon) || c.energy_epsilon == 0.0 {
            return bad(format!("energy_epsilon must lie in (0, 1], got {}", c.energy_epsilon));
        }
        Ok(())
    }

    pub fn spec(&self) -> NonlinearitySpec {
        self.nonlinearity.build().expect("validated at load")
    }

    pub fn trajectory(&self) -> TrajectoryConfig {
        self.discretization.build().expect("validated at load")
    }

    /// Seed of suite `suite`: suites draw from disjoint master seeds.
    pub fn seed_for(&self, suite: Suite) -> SeedSpec {
        let base = SeedSpec::path(self.monte_carlo.seed, 0);
        SeedSpec::path(base.derive(suite as u64 + 1), 0)
    }

    pub fn measure_seed(&self) -> SeedSpec {
        SeedSpec::path(SeedSpec::path(self.monte_carlo.seed, 0).derive(1000), 0)
    }

    /// Output directory: the configured one, else `$SPECTRAL_ERGO_OUT`,
    /// else `spectral-ergo-out`.
    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("spectral-ergo-out"))
    }

    /// SHA-256 of the resolved configuration as JSON, excluding the output
    /// directory and worker count, which never affect results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        c.workers = 0;
        hex(&Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
