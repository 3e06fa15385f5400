//! Cylindrical test functions, the Kolmogorov operator `K₀` on them, and
//! the functional inequalities of the invariant measure checked by Monte
//! Carlo over an [`EmpiricalMeasure`].
//!
//! `K₀φ(x) = ½ Tr[D²φ(x)] + <x, A Dφ(x)> - <F(x), D_ξ Dφ(x)>`, evaluated
//! exactly in the truncated space.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Integrator, PathState, TrajectoryConfig};
use crate::ergodics::EmpiricalMeasure;
use crate::error::{Error, Result};
use crate::exec::replicate;
use crate::noise::SeedSpec;
use crate::nonlinearity::{NemytskiiWorkspace, NonlinearitySpec};
use crate::semigroup_mc::{sample_observables, steps_to, MCEstimate, Observable};
use crate::spectral::{apply_a, apply_dxi, min_grid_size, FourierState};
use crate::stats::{linear_fit, mean_stderr};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Cos,
    Sin,
}

impl Trig {
    pub fn value(self, u: f64) -> f64 {
        match self {
            Trig::Cos => u.cos(),
            Trig::Sin => u.sin(),
        }
    }

    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Trig::Cos => -u.sin(),
            Trig::Sin => u.cos(),
        }
    }

    pub fn second(self, u: f64) -> f64 {
        -self.value(u)
    }
}

/// `φ(x) = shift + amplitude · T(<x, h>)` with `T ∈ {cos, sin}`.
///
/// The affine wrapper keeps quasi-linear functionals such as
/// `sin(<x, εe₀>)/ε` and shifted families like `2 + sin(<x, h>)` inside the
/// same type; the plain constructors give `amplitude = 1`, `shift = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylindricalFunction {
    pub trig: Trig,
    pub h: FourierState,
    pub amplitude: f64,
    pub shift: f64,
}

impl CylindricalFunction {
    pub fn new(trig: Trig, h: FourierState) -> Result<Self> {
        if h.norm() == 0.0 {
            return Err(Error::InvalidArgument("cylindrical direction must be nonzero".into()));
        }
        Ok(Self {
            trig,
            h,
            amplitude: 1.0,
            shift: 0.0,
        })
    }

    pub fn cos(h: FourierState) -> Result<Self> {
        Self::new(Trig::Cos, h)
    }

    pub fn sin(h: FourierState) -> Result<Self> {
        Self::new(Trig::Sin, h)
    }

    pub fn scaled(mut self, a: f64) -> Self {
        self.amplitude *= a;
        self.shift *= a;
        self
    }

    pub fn shifted(mut self, c: f64) -> Self {
        self.shift += c;
        self
    }

    pub fn sup_bound(&self) -> f64 {
        self.shift.abs() + self.amplitude.abs()
    }

    /// `<x, h>` over the modes both states carry.
    pub fn phase(&self, x: &FourierState) -> f64 {
        self.h.modes().map(|(k, c)| c * x.get(k)).sum()
    }

    pub fn eval(&self, x: &FourierState) -> f64 {
        self.shift + self.amplitude * self.trig.value(self.phase(x))
    }

    /// `Dφ(x) = a T'(<x,h>) P_n h` at the cutoff of `x`.
    pub fn grad(&self, x: &FourierState) -> FourierState {
        self.h
            .with_cutoff(x.cutoff())
            .scaled(self.amplitude * self.trig.derivative(self.phase(x)))
    }

    /// `Tr[D²φ(x)] = a T''(<x,h>) |P_n h|₂²`.
    pub fn trace_hess(&self, x: &FourierState) -> f64 {
        self.amplitude * self.trig.second(self.phase(x)) * self.h.with_cutoff(x.cutoff()).norm_sq()
    }
}

/// `count` test functions with directions on modes `|k| <= max_mode`,
/// `|h|₂` uniform in `[0.1, 2]`, alternating cosine and sine.
pub fn test_battery(count: usize, n: usize, max_mode: usize, seed: &SeedSpec) -> Vec<CylindricalFunction> {
    let g = seed.generator();
    let m = max_mode.min(n) as i64;
    (0..count as u64)
        .map(|i| {
            let mut h = FourierState::zeros(n);
            for k in -m..=m {
                h.set(k, g.normal(i, k, 2));
            }
            if h.norm() == 0.0 {
                h.set(0, 1.0);
            }
            let len = 0.1 + 1.9 * g.uniform(i, 0, 3);
            let h = h.scaled(len / h.norm());
            let trig = if i % 2 == 0 { Trig::Cos } else { Trig::Sin };
            CylindricalFunction::new(trig, h).expect("direction is nonzero")
        })
        .collect()
}

/// Evaluates `K₀` repeatedly at one cutoff.
#[derive(Clone, Debug)]
pub struct K0Evaluator {
    n: usize,
    spec: NonlinearitySpec,
    ws: NemytskiiWorkspace,
}

impl K0Evaluator {
    pub fn new(n: usize, spec: &NonlinearitySpec) -> Result<Self> {
        Ok(Self {
            n,
            spec: *spec,
            ws: NemytskiiWorkspace::new(n, min_grid_size(n))?,
        })
    }

    pub fn apply(&mut self, phi: &CylindricalFunction, x: &FourierState) -> Result<f64> {
        if x.cutoff() != self.n {
            return Err(Error::CutoffMismatch {
                left: x.cutoff(),
                right: self.n,
            });
        }
        if phi.h.bandwidth() > self.n {
            return Err(Error::InvalidArgument(format!(
                "direction reaches mode {} beyond the cutoff {}",
                phi.h.bandwidth(),
                self.n
            )));
        }
        let d = phi.grad(x);
        let mut out = 0.5 * phi.trace_hess(x) + apply_a(x).dot(&d);
        if !self.spec.is_zero() {
            out -= self.ws.eval(&self.spec, x)?.dot(&apply_dxi(&d));
        }
        Ok(out)
    }
}

/// `K₀φ(x)`.
pub fn apply_k0(phi: &CylindricalFunction, x: &FourierState, spec: &NonlinearitySpec) -> Result<f64> {
    K0Evaluator::new(x.cutoff(), spec)?.apply(phi, x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Monte Carlo comparison of the two sides of an inequality or identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub lhs_stderr: f64,
    pub rhs_stderr: f64,
    /// Standard error of `lhs - rhs` from per-sample differences.
    pub combined_stderr: f64,
    pub verdict: Verdict,
}

impl InequalityReport {
    /// `lhs <= rhs`, tested as `lhs <= rhs + 3 σ`.
    pub fn one_sided(lhs: f64, rhs: f64, lhs_stderr: f64, rhs_stderr: f64, combined_stderr: f64) -> Self {
        let verdict = if lhs <= rhs + 3.0 * combined_stderr {
            Verdict::Holds
        } else {
            Verdict::Violated
        };
        Self {
            lhs,
            rhs,
            lhs_stderr,
            rhs_stderr,
            combined_stderr,
            verdict,
        }
    }

    /// `lhs = rhs`, tested as `|lhs - rhs| <= 3 σ`.
    pub fn two_sided(lhs: f64, rhs: f64, lhs_stderr: f64, rhs_stderr: f64, combined_stderr: f64) -> Self {
        let verdict = if (lhs - rhs).abs() <= 3.0 * combined_stderr {
            Verdict::Holds
        } else {
            Verdict::Violated
        };
        Self {
            lhs,
            rhs,
            lhs_stderr,
            rhs_stderr,
            combined_stderr,
            verdict,
        }
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

fn gap_factor(spec: &NonlinearitySpec) -> Result<f64> {
    let d = spec.df_sup;
    if d >= 2.0 {
        return Err(Error::Inapplicable(format!(
            "the spectral gap bounds need sup|f'| < 2, got {d}"
        )));
    }
    Ok(1.0 - d * d / 4.0)
}

/// `1 / (2(1 - ‖DF‖₀²/4))`.
pub fn poincare_constant(spec: &NonlinearitySpec) -> Result<f64> {
    Ok(0.5 / gap_factor(spec)?)
}

/// `1 / (1 - ‖DF‖₀²/4)`.
pub fn log_sobolev_constant(spec: &NonlinearitySpec) -> Result<f64> {
    Ok(1.0 / gap_factor(spec)?)
}

/// `2(1 - ‖DF‖₀²/4)`, the decay rate of the squared `L²(ν)` distance.
pub fn gap_rate(spec: &NonlinearitySpec) -> Result<f64> {
    Ok(2.0 * gap_factor(spec)?)
}

fn check_span(nu: &EmpiricalMeasure, phi: &CylindricalFunction) -> Result<()> {
    if phi.h.bandwidth() > nu.cutoff() {
        return Err(Error::InvalidArgument(format!(
            "direction reaches mode {} beyond the measure cutoff {}",
            phi.h.bandwidth(),
            nu.cutoff()
        )));
    }
    Ok(())
}

fn grad_sq(phi: &CylindricalFunction, nu: &EmpiricalMeasure) -> Vec<f64> {
    nu.samples().iter().map(|x| phi.grad(x).norm_sq()).collect()
}

fn diff(a: &[f64], b: &[f64], c: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - c * y).collect()
}

/// `∫ φ K₀φ dν = -½ ∫ |Dφ|₂² dν`, two-sided.
pub fn ibpf_residual(nu: &EmpiricalMeasure, phi: &CylindricalFunction, spec: &NonlinearitySpec) -> Result<InequalityReport> {
    check_span(nu, phi)?;
    let mut k0 = K0Evaluator::new(nu.cutoff(), spec)?;
    let l: Vec<f64> = nu
        .samples()
        .iter()
        .map(|x| Ok(phi.eval(x) * k0.apply(phi, x)?))
        .collect::<Result<_>>()?;
    let r: Vec<f64> = grad_sq(phi, nu).into_iter().map(|g| -0.5 * g).collect();
    let (lhs, lse) = nu.mean_stderr(&l);
    let (rhs, rse) = nu.mean_stderr(&r);
    let (_, cse) = nu.mean_stderr(&diff(&l, &r, 1.0));
    Ok(InequalityReport::two_sided(lhs, rhs, lse, rse, cse))
}

/// `Var_ν φ <= c_P ∫ |Dφ|₂² dν` with `c_P = 1/(2(1 - ‖DF‖₀²/4))`.
pub fn poincare_check(nu: &EmpiricalMeasure, phi: &CylindricalFunction, spec: &NonlinearitySpec) -> Result<InequalityReport> {
    let c = poincare_constant(spec)?;
    check_span(nu, phi)?;
    let f: Vec<f64> = nu.samples().iter().map(|x| phi.eval(x)).collect();
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    let nn = f.len() as f64;
    // unbiased variance as a mean of per-sample terms
    let l: Vec<f64> = f.iter().map(|v| (v - mean).powi(2) * nn / (nn - 1.0)).collect();
    let g = grad_sq(phi, nu);
    let (lhs, lse) = nu.mean_stderr(&l);
    let (eg, gse) = nu.mean_stderr(&g);
    let (_, cse) = nu.mean_stderr(&diff(&l, &g, c));
    Ok(InequalityReport::one_sided(lhs, c * eg, lse, c * gse, cse))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSobolevReport {
    pub report: InequalityReport,
    /// Samples with `φ² < 1e-12`, floored before taking logarithms.
    pub floored: usize,
}

/// `Ent_ν(φ²) <= c_LS ∫ |Dφ|₂² dν` with `c_LS = 1/(1 - ‖DF‖₀²/4)`.
pub fn log_sobolev_check(nu: &EmpiricalMeasure, phi: &CylindricalFunction, spec: &NonlinearitySpec) -> Result<LogSobolevReport> {
    let c = log_sobolev_constant(spec)?;
    check_span(nu, phi)?;
    let mut floored = 0;
    let f2: Vec<f64> = nu
        .samples()
        .iter()
        .map(|x| {
            let v = phi.eval(x).powi(2);
            if v < 1e-12 {
                floored += 1;
                1e-12
            } else {
                v
            }
        })
        .collect();
    let m = f2.iter().sum::<f64>() / f2.len() as f64;
    let ent = f2.iter().map(|v| v * v.ln()).sum::<f64>() / f2.len() as f64 - m * m.ln();
    // delta-method influence of the entropy functional
    let psi: Vec<f64> = f2.iter().map(|v| v * v.ln() - (m.ln() + 1.0) * v).collect();
    let g = grad_sq(phi, nu);
    let (_, lse) = nu.mean_stderr(&psi);
    let (eg, gse) = nu.mean_stderr(&g);
    let (_, cse) = nu.mean_stderr(&diff(&psi, &g, c));
    Ok(LogSobolevReport {
        report: InequalityReport::one_sided(ent, c * eg, lse, c * gse, cse),
        floored,
    })
}

/// Up to `count` samples of `nu`, evenly spaced through the record.
fn outer_samples(nu: &EmpiricalMeasure, count: usize) -> Vec<&FourierState> {
    let len = nu.samples().len();
    let count = count.min(len).max(1);
    (0..count).map(|i| &nu.samples()[i * len / count]).collect()
}

fn inner_seed(seed: &SeedSpec, i: usize) -> SeedSpec {
    SeedSpec::new(seed.derive(i as u64), 0, seed.stream_tag)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub times: Vec<f64>,
    /// Nested estimate of `∫ (P_tφ - φ̄)² dν`.
    pub distance: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `e^{-2(1 - ‖DF‖₀²/4)t} ∫ φ² dν`.
    pub envelope: Vec<f64>,
    pub envelope_holds: Vec<bool>,
    /// `-slope` of the least-squares fit of `log d(t)` over positive `d(t)`.
    pub fitted_rate: f64,
    pub envelope_rate: f64,
    pub verdict: Verdict,
}

/// Nested Monte Carlo for the `L²(ν)` decay of `P_tφ - φ̄`.
///
/// For each of `outer` samples of ν, `inner` paths give `m̂(t)` and its
/// sample variance `s²`; `m̂² - s²/inner` is unbiased for `(P_tφ)²`.
#[allow(clippy::too_many_arguments)]
pub fn spectral_gap_decay(
    nu: &EmpiricalMeasure,
    phi: &CylindricalFunction,
    spec: &NonlinearitySpec,
    times: &[f64],
    cfg: &TrajectoryConfig,
    outer: usize,
    inner: usize,
    seed: &SeedSpec,
) -> Result<GapReport> {
    let rate = gap_rate(spec)?;
    check_span(nu, phi)?;
    if inner < 2 || outer < 2 || times.is_empty() {
        return Err(Error::InvalidArgument("need >= 2 outer and inner replicas and a time grid".into()));
    }
    let xs = outer_samples(nu, outer);
    let obs = [Observable::cylindrical(phi.clone())];
    let stats = replicate(xs.len(), |i| {
        let s = sample_observables(&obs, xs[i as usize], times, cfg, spec, inner, &inner_seed(seed, i as usize))?;
        Ok(times
            .iter()
            .enumerate()
            .map(|(j, _)| {
                let v: Vec<f64> = s.iter().map(|r| r[j]).collect();
                let (m, se) = mean_stderr(&v);
                (m, se * se)
            })
            .collect::<Vec<_>>())
    })?;
    let no = xs.len() as f64;
    let phi2: Vec<f64> = xs.iter().map(|x| phi.eval(x).powi(2)).collect();
    let (m2, _) = mean_stderr(&phi2);
    let mut distance = Vec::new();
    let mut stderr = Vec::new();
    let mut envelope = Vec::new();
    let mut envelope_holds = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let means: Vec<f64> = stats.iter().map(|r| r[j].0).collect();
        let centre = means.iter().sum::<f64>() / no;
        let terms: Vec<f64> = stats
            .iter()
            .map(|r| (r[j].0 - centre).powi(2) * no / (no - 1.0) - r[j].1)
            .collect();
        let (d, se) = mean_stderr(&terms);
        let env = (-rate * t).exp() * m2;
        distance.push(d);
        stderr.push(se);
        envelope.push(env);
        envelope_holds.push(d <= env + 3.0 * se);
    }
    let (lt, ld): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&distance)
        .filter(|(_, d)| **d > 0.0)
        .map(|(t, d)| (*t, d.ln()))
        .unzip();
    let fitted_rate = if lt.len() >= 2 { -linear_fit(&lt, &ld).0 } else { f64::NAN };
    let verdict = if envelope_holds.iter().all(|&b| b) {
        Verdict::Holds
    } else {
        Verdict::Violated
    };
    Ok(GapReport {
        times: times.to_vec(),
        distance,
        stderr,
        envelope,
        envelope_holds,
        fitted_rate,
        envelope_rate: rate,
        verdict,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyIdentityReport {
    /// `∫ (P_tφ)² dν`.
    pub flow_term: f64,
    /// `∫_0^t ∫ Σ_{|k|<=m_grad} <DP_sφ, e_k>² dν ds`.
    pub gradient_term: f64,
    /// Gradient term with `m_grad/2` modes subtracted from the full one.
    pub mode_tail: f64,
    /// Whether the tail is below 1% of the right side, enabling the lower check.
    pub two_sided: bool,
    pub report: InequalityReport,
}

/// `∫(P_tφ)² dν + ∫_0^t ∫ |DP_sφ|₂² dν ds = ∫ φ² dν` by nested Monte Carlo.
///
/// Directional derivatives use the pathwise representation
/// `<DP_sφ(x), e_k> = E[<Dφ(X_s), η^{e_k}(s)>]` on every step of the
/// grid; squares are debiased by the inner sample variance and the time
/// integral is the trapezoid rule on the step grid.
#[allow(clippy::too_many_arguments)]
pub fn energy_identity_check(
    nu: &EmpiricalMeasure,
    phi: &CylindricalFunction,
    spec: &NonlinearitySpec,
    t: f64,
    cfg: &TrajectoryConfig,
    m_grad: usize,
    outer: usize,
    inner: usize,
    seed: &SeedSpec,
) -> Result<EnergyIdentityReport> {
    check_span(nu, phi)?;
    if m_grad > cfg.n || nu.cutoff() != cfg.n {
        return Err(Error::InvalidArgument(format!(
            "need m_grad <= n and matching cutoffs, got m_grad = {m_grad}, n = {}, measure n = {}",
            cfg.n,
            nu.cutoff()
        )));
    }
    if inner < 2 || outer < 2 {
        return Err(Error::InvalidArgument("need >= 2 outer and inner replicas".into()));
    }
    let steps = steps_to(t, cfg)? as usize;
    let modes: Vec<i64> = (-(m_grad as i64)..=m_grad as i64).collect();
    let half = (m_grad / 2) as i64;
    let xs = outer_samples(nu, outer);
    let ri = inner as f64;
    let rows = replicate(xs.len(), |i| {
        let x = xs[i as usize];
        let mut it = Integrator::new(cfg, spec)?;
        let gen = inner_seed(seed, i as usize).generator();
        let nd = modes.len();
        let mut sum = vec![0.0; nd * (steps + 1)];
        let mut sumsq = vec![0.0; nd * (steps + 1)];
        let mut end = Vec::with_capacity(inner);
        for r in 0..inner as u64 {
            let mut s = PathState::initial(x.clone());
            let mut etas: Vec<FourierState> = modes.iter().map(|&k| FourierState::basis(cfg.n, k)).collect();
            for m in 0..=steps {
                if m > 0 {
                    // stream of inner replica r, step m - 1
                    it.draw(&gen, r * (steps as u64 + 1) + m as u64 - 1);
                    it.advance(&mut s, &mut etas, m as u64 - 1)?;
                }
                let d = phi.grad(&s.x);
                for (j, e) in etas.iter().enumerate() {
                    let c = d.dot(e);
                    sum[m * nd + j] += c;
                    sumsq[m * nd + j] += c * c;
                }
            }
            end.push(phi.eval(&s.x));
        }
        let sq_unbiased = |s: f64, ss: f64| {
            let mean = s / ri;
            let var = (ss - ri * mean * mean) / (ri - 1.0);
            mean * mean - var / ri
        };
        let mut full = vec![0.0; steps + 1];
        let mut low = vec![0.0; steps + 1];
        for m in 0..=steps {
            for (j, &k) in modes.iter().enumerate() {
                let v = sq_unbiased(sum[m * nd + j], sumsq[m * nd + j]);
                full[m] += v;
                if k.abs() <= half {
                    low[m] += v;
                }
            }
        }
        let trap = |f: &[f64]| {
            if steps == 0 {
                0.0
            } else {
                cfg.dt * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[steps]))
            }
        };
        let (em, ese) = mean_stderr(&end);
        let flow = if steps == 0 { em * em } else { em * em - ese * ese };
        Ok((flow, trap(&full), trap(&low), phi.eval(x).powi(2)))
    })?;
    let flow: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let grad: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let tail: Vec<f64> = rows.iter().map(|r| r.1 - r.2).collect();
    let rhs_v: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let lhs_v: Vec<f64> = flow.iter().zip(&grad).map(|(a, b)| a + b).collect();
    let (flow_term, _) = mean_stderr(&flow);
    let (gradient_term, _) = mean_stderr(&grad);
    let (mode_tail, _) = mean_stderr(&tail);
    let (lhs, lse) = mean_stderr(&lhs_v);
    let (rhs, rse) = mean_stderr(&rhs_v);
    let (_, cse) = mean_stderr(&diff(&lhs_v, &rhs_v, 1.0));
    let two_sided = mode_tail.abs() < 0.01 * rhs;
    let too_low = two_sided && lhs < rhs - (mode_tail.abs() + 3.0 * cse);
    let verdict = if lhs > rhs + 3.0 * cse || too_low {
        Verdict::Violated
    } else {
        Verdict::Holds
    };
    Ok(EnergyIdentityReport {
        flow_term,
        gradient_term,
        mode_tail,
        two_sided,
        report: InequalityReport {
            lhs,
            rhs,
            lhs_stderr: lse,
            rhs_stderr: rse,
            combined_stderr: cse,
            verdict,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCheck {
    /// `(P_dt φ(x) - φ(x)) / dt` from antithetic one-step pairs.
    pub difference_quotient: MCEstimate,
    pub k0: f64,
}

impl GeneratorCheck {
    pub fn error(&self) -> f64 {
        (self.difference_quotient.mean - self.k0).abs()
    }
}

/// One-step difference quotient of the semigroup against `K₀φ(x)`.
pub fn generator_consistency(
    phi: &CylindricalFunction,
    x: &FourierState,
    spec: &NonlinearitySpec,
    dt: f64,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<GeneratorCheck> {
    let cfg = TrajectoryConfig::new(x.cutoff(), dt, dt)?;
    let k0 = apply_k0(phi, x, spec)?;
    let f0 = phi.eval(x);
    let q = replicate(replicas, |r| {
        let mut it = Integrator::new(&cfg, spec)?;
        it.draw(&seed.with_replica(r).generator(), 0);
        let neg: Vec<f64> = it.normals().iter().map(|z| -z).collect();
        let mut a = PathState::initial(x.clone());
        it.advance(&mut a, &mut [], 0)?;
        it.set_normals(&neg);
        let mut b = PathState::initial(x.clone());
        it.advance(&mut b, &mut [], 0)?;
        Ok((0.5 * (phi.eval(&a.x) + phi.eval(&b.x)) - f0) / dt)
    })?;
    Ok(GeneratorCheck {
        difference_quotient: MCEstimate::from_samples(&q),
        k0,
    })
}
