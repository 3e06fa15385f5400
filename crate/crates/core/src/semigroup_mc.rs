//! Monte Carlo estimates of `P_t φ(x) = E φ(X(t, x))`, its gradient by the
//! Bismut-Elworthy weight, the strong Feller modulus and the irreducibility
//! probe.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Integrator, PathState, TrajectoryConfig};
use crate::error::{Error, Result};
use crate::exec::replicate;
use crate::kolmogorov::{CylindricalFunction, Verdict};
use crate::noise::SeedSpec;
use crate::nonlinearity::NonlinearitySpec;
use crate::spectral::FourierState;
use crate::stats::{mean_stderr, wilson_interval};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    Cylindrical(CylindricalFunction),
    NormSquared,
    ModeCoordinate(i64),
    Constant(f64),
}

/// Test function `φ` with its sup norm (`+∞` when unbounded).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub kind: ObservableKind,
    pub sup_bound: f64,
}

impl Observable {
    pub fn cylindrical(phi: CylindricalFunction) -> Self {
        let sup_bound = phi.sup_bound();
        Self {
            kind: ObservableKind::Cylindrical(phi),
            sup_bound,
        }
    }

    pub fn norm_squared() -> Self {
        Self {
            kind: ObservableKind::NormSquared,
            sup_bound: f64::INFINITY,
        }
    }

    pub fn mode(k: i64) -> Self {
        Self {
            kind: ObservableKind::ModeCoordinate(k),
            sup_bound: f64::INFINITY,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            kind: ObservableKind::Constant(c),
            sup_bound: c.abs(),
        }
    }

    pub fn eval(&self, x: &FourierState) -> f64 {
        match &self.kind {
            ObservableKind::Cylindrical(c) => c.eval(x),
            ObservableKind::NormSquared => x.norm_sq(),
            ObservableKind::ModeCoordinate(k) => x.get(*k),
            ObservableKind::Constant(c) => *c,
        }
    }

    /// `Dφ(x)` at the cutoff of `x`.
    pub fn grad(&self, x: &FourierState) -> FourierState {
        match &self.kind {
            ObservableKind::Cylindrical(c) => c.grad(x),
            ObservableKind::NormSquared => x.scaled(2.0),
            ObservableKind::ModeCoordinate(k) => {
                let mut g = FourierState::zeros(x.cutoff());
                if k.unsigned_abs() as usize <= x.cutoff() {
                    g.set(*k, 1.0);
                }
                g
            }
            ObservableKind::Constant(_) => FourierState::zeros(x.cutoff()),
        }
    }
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
}

impl MCEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let (mean, stderr) = mean_stderr(xs);
        Self {
            mean,
            stderr,
            replicas: xs.len(),
        }
    }

    /// `|self - want| <= k stderr` (with a floor `abs_tol` for exact cases).
    pub fn agrees_with(&self, want: f64, k: f64, abs_tol: f64) -> bool {
        (self.mean - want).abs() <= (k * self.stderr).max(abs_tol)
    }
}

/// Number of steps to reach `t` on the grid of `cfg`.
pub fn steps_to(t: f64, cfg: &TrajectoryConfig) -> Result<u64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be >= 0, got {t}")));
    }
    let r = t / cfg.dt;
    if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "time {t} is not on the grid of step {}",
            cfg.dt
        )));
    }
    Ok(r.round() as u64)
}

/// `φ_j(X(t_i, x))` for every replica: entry `[r][i * phis.len() + j]`.
/// `times` must be ascending grid times.
pub fn sample_observables(
    phis: &[Observable],
    x: &FourierState,
    times: &[f64],
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<Vec<Vec<f64>>> {
    let marks = times.iter().map(|&t| steps_to(t, cfg)).collect::<Result<Vec<_>>>()?;
    if marks.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("observation times must be ascending".into()));
    }
    replicate(replicas, |r| {
        let mut it = Integrator::new(cfg, spec)?;
        let gen = seed.with_replica(r).generator();
        let mut s = PathState::initial(x.clone());
        let mut out = Vec::with_capacity(marks.len() * phis.len());
        let mut m = 0u64;
        for &mark in &marks {
            while m < mark {
                it.step(&mut s, &gen, m)?;
                m += 1;
            }
            out.extend(phis.iter().map(|p| p.eval(&s.x)));
        }
        Ok(out)
    })
}

/// `P_t φ(x)` by plain Monte Carlo over independent tapes.
pub fn estimate_pt(
    phi: &Observable,
    x: &FourierState,
    t: f64,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<MCEstimate> {
    if replicas < 2 {
        return Err(Error::InvalidArgument("need at least two replicas".into()));
    }
    if t == 0.0 {
        return Ok(MCEstimate {
            mean: phi.eval(x),
            stderr: 0.0,
            replicas,
        });
    }
    let v: Vec<f64> = sample_observables(std::slice::from_ref(phi), x, &[t], cfg, spec, replicas, seed)?
        .into_iter()
        .map(|r| r[0])
        .collect();
    Ok(MCEstimate::from_samples(&v))
}

/// Per-replica Bismut-Elworthy products `φ(X_M) · w` together with the
/// endpoint, where
///
/// ```text
/// w = (1/M) Σ_{m<M} <Q^{-1} η_{m+1}, g_m>
/// ```
///
/// `g_m` is the exact OU innovation of step `m`, `Q = diag(q_k)` its
/// covariance and `η_{m+1}` the variational state produced from the
/// pre-step path, hence known before `g_m` is drawn. Gaussian integration by
/// parts makes `E[φ(X_M) w]` the exact directional derivative of the
/// discrete chain; as `dt -> 0` the weight tends to `(1/t) ∫ <η, dW>`.
#[allow(clippy::too_many_arguments)]
fn bismut_elworthy_samples(
    phi: &Observable,
    x: &FourierState,
    h: &FourierState,
    t: f64,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<Vec<(f64, FourierState)>> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gradient estimate needs t > 0, got {t}"
        )));
    }
    let steps = steps_to(t, cfg)?;
    replicate(replicas, |r| {
        let mut it = Integrator::new(cfg, spec)?;
        let gen = seed.with_replica(r).generator();
        let mut s = PathState::initial(x.clone());
        let mut eta = [h.clone()];
        let mut acc = 0.0;
        for m in 0..steps {
            it.step_coupled(&mut s, &mut eta, &gen, m)?;
            acc += eta[0]
                .coeffs()
                .iter()
                .zip(it.normals())
                .zip(it.innovation_sd())
                .map(|((e, z), sd)| e * z / sd)
                .sum::<f64>();
        }
        Ok((phi.eval(&s.x) * acc / steps as f64, s.x))
    })
}

/// `<D P_t φ(x), h>` by the Bismut-Elworthy formula.
#[allow(clippy::too_many_arguments)]
pub fn bismut_elworthy_grad(
    phi: &Observable,
    x: &FourierState,
    h: &FourierState,
    t: f64,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<MCEstimate> {
    let v: Vec<f64> = bismut_elworthy_samples(phi, x, h, t, cfg, spec, replicas, seed)?
        .into_iter()
        .map(|p| p.0)
        .collect();
    Ok(MCEstimate::from_samples(&v))
}

/// Bismut-Elworthy estimate, central finite difference on common tapes,
/// and their per-replica difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientComparison {
    pub bismut_elworthy: MCEstimate,
    pub finite_difference: MCEstimate,
    pub difference: MCEstimate,
}

impl GradientComparison {
    /// `|difference| <= max(k · stderr, floor)`.
    pub fn agrees(&self, k: f64, floor: f64) -> bool {
        self.difference.agrees_with(0.0, k, floor)
    }
}

/// Compares the Bismut-Elworthy gradient with
/// `(φ(X(t, x+εh)) - φ(X(t, x-εh))) / 2ε` replica by replica.
#[allow(clippy::too_many_arguments)]
pub fn gradient_comparison(
    phi: &Observable,
    x: &FourierState,
    h: &FourierState,
    t: f64,
    eps: f64,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<GradientComparison> {
    let be: Vec<f64> = bismut_elworthy_samples(phi, x, h, t, cfg, spec, replicas, seed)?
        .into_iter()
        .map(|p| p.0)
        .collect();
    let mut xp = x.clone();
    xp.axpy(eps, h);
    let mut xm = x.clone();
    xm.axpy(-eps, h);
    let one = std::slice::from_ref(phi);
    let up = sample_observables(one, &xp, &[t], cfg, spec, replicas, seed)?;
    let down = sample_observables(one, &xm, &[t], cfg, spec, replicas, seed)?;
    let fd: Vec<f64> = up.iter().zip(&down).map(|(a, b)| (a[0] - b[0]) / (2.0 * eps)).collect();
    let diff: Vec<f64> = be.iter().zip(&fd).map(|(a, b)| a - b).collect();
    Ok(GradientComparison {
        bismut_elworthy: MCEstimate::from_samples(&be),
        finite_difference: MCEstimate::from_samples(&fd),
        difference: MCEstimate::from_samples(&diff),
    })
}

/// `t^{-1} (√2/d) (e^{a t} - 1)^{1/2}` with `a = d²/2` (`squared = true`)
/// or `a = d/2`, and the `d -> 0` limit `t^{-1/2}` of the squared form.
pub fn feller_constant(d: f64, t: f64, squared: bool) -> f64 {
    if d == 0.0 {
        return if squared { t.powf(-0.5) } else { f64::INFINITY };
    }
    let a = if squared { d * d / 2.0 } else { d / 2.0 };
    (2.0f64).sqrt() / d * (a * t).exp_m1().sqrt() / t
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FellerReport {
    pub t: f64,
    /// `|P_t φ(x) - P_t φ(y)|` from common tapes.
    pub lhs: f64,
    pub stderr: f64,
    /// Bound with exponent `‖DF‖₀² t / 2`.
    pub rhs: f64,
    /// Bound with exponent `‖DF‖₀ t / 2`, logged alongside.
    pub rhs_printed_exponent: f64,
    pub holds: bool,
}

/// Checks `|P_tφ(x) - P_tφ(y)| <= C(t) ‖φ‖₀ |x - y|₂` with common tapes.
#[allow(clippy::too_many_arguments)]
pub fn strong_feller_modulus(
    phi: &Observable,
    x: &FourierState,
    y: &FourierState,
    t: f64,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<FellerReport> {
    Ok(strong_feller_multi(phi, x, y, &[t], cfg, spec, replicas, seed)?[0])
}

/// [`strong_feller_modulus`] at several times from the same paths.
#[allow(clippy::too_many_arguments)]
pub fn strong_feller_multi(
    phi: &Observable,
    x: &FourierState,
    y: &FourierState,
    times: &[f64],
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<Vec<FellerReport>> {
    if !phi.sup_bound.is_finite() {
        return Err(Error::InvalidArgument("strong Feller check needs a bounded φ".into()));
    }
    let one = std::slice::from_ref(phi);
    let a = sample_observables(one, x, times, cfg, spec, replicas, seed)?;
    let b = sample_observables(one, y, times, cfg, spec, replicas, seed)?;
    let dist = x.sub(y).norm();
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let d: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p[i] - q[i]).collect();
            let est = MCEstimate::from_samples(&d);
            let lhs = est.mean.abs();
            let scale = phi.sup_bound * dist;
            let rhs = feller_constant(spec.df_sup, t, true) * scale;
            FellerReport {
                t,
                lhs,
                stderr: est.stderr,
                rhs,
                rhs_printed_exponent: feller_constant(spec.df_sup, t, false) * scale,
                holds: lhs <= rhs + 3.0 * est.stderr,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrreducibilityReport {
    pub hits: usize,
    pub trials: usize,
    pub fraction: f64,
    /// 95% Wilson interval for the hit probability.
    pub wilson: (f64, f64),
    /// `Holds` once a replica enters the ball (escape probability < 1),
    /// `Inconclusive` with no hit at this budget.
    pub verdict: Verdict,
}

/// Fraction of replicas with `|X(T, x) - z|₂ <= eps`.
#[allow(clippy::too_many_arguments)]
pub fn irreducibility_probe(
    x: &FourierState,
    z: &FourierState,
    eps: f64,
    t_final: f64,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<IrreducibilityReport> {
    if !(eps > 0.0) || !(t_final > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "probe needs eps > 0 and T > 0, got eps = {eps}, T = {t_final}"
        )));
    }
    let cfg = cfg.clone().with_horizon(t_final)?;
    let hits = replicate(replicas, |r| {
        let mut it = Integrator::new(&cfg, spec)?;
        let gen = seed.with_replica(r).generator();
        let mut s = PathState::initial(x.clone());
        for m in 0..cfg.steps() {
            it.step(&mut s, &gen, m)?;
        }
        Ok(s.x.sub(z).norm() <= eps)
    })?
    .into_iter()
    .filter(|&b| b)
    .count();
    Ok(IrreducibilityReport {
        hits,
        trials: replicas,
        fraction: hits as f64 / replicas as f64,
        wilson: wilson_interval(hits, replicas, 1.959_963_984_540_054),
        verdict: if hits > 0 {
            Verdict::Holds
        } else {
            Verdict::Inconclusive
        },
    })
}
