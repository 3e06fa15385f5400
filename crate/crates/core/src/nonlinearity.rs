//! The drift nonlinearity `F: H -> H`, realised pointwise (Nemytskii) on a
//! dealiased grid, with its derivative and declared bounds.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{SeedSpec, StreamTag};
use crate::spectral::{apply_dxi, min_grid_size, FourierState, SpectralTransform};

/// Scalar maps available as Nemytskii nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum ScalarMap {
    /// `ε sin(u)`
    Sin { eps: f64 },
    /// `ε u / (1 + u²)`
    Rational { eps: f64 },
    /// `c u`
    Linear { c: f64 },
    /// `c u³`; its derivative is unbounded, so no finite `‖DF‖₀` is honest.
    Cubic { c: f64 },
}

impl ScalarMap {
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            ScalarMap::Sin { eps } => eps * u.sin(),
            ScalarMap::Rational { eps } => eps * u / (1.0 + u * u),
            ScalarMap::Linear { c } => c * u,
            ScalarMap::Cubic { c } => c * u * u * u,
        }
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            ScalarMap::Sin { eps } => eps * u.cos(),
            ScalarMap::Rational { eps } => {
                let d = 1.0 + u * u;
                eps * (1.0 - u * u) / (d * d)
            }
            ScalarMap::Linear { c } => c,
            ScalarMap::Cubic { c } => 3.0 * c * u * u,
        }
    }
}

impl fmt::Display for ScalarMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarMap::Sin { eps } => write!(f, "{eps}*sin(u)"),
            ScalarMap::Rational { eps } => write!(f, "{eps}*u/(1+u^2)"),
            ScalarMap::Linear { c } => write!(f, "{c}*u"),
            ScalarMap::Cubic { c } => write!(f, "{c}*u^3"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearityKind {
    Zero,
    Nemytskii(ScalarMap),
}

/// Which branch of the existence hypothesis a nonlinearity satisfies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisFlags {
    /// `‖F‖₀ < ∞`
    pub h1: bool,
    /// `‖DF‖₀ < 2`
    pub h2: bool,
    /// `F` is the Nemytskii map of a `C¹` scalar function with bounded derivative
    pub h3: bool,
}

impl HypothesisFlags {
    pub fn any(&self) -> bool {
        self.h1 || self.h2 || self.h3
    }
}

/// A nonlinearity together with its declared norm bounds.
///
/// `f_sup` is the bound on `|F(x)|₂` in H (for a bounded scalar `f` this is
/// `sqrt(2π) sup|f|`), `df_sup` the bound on the operator norm of `DF`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    pub kind: NonlinearityKind,
    pub f_sup: f64,
    pub df_sup: f64,
    pub hyp: HypothesisFlags,
}

const SQRT_2PI: f64 = 2.506_628_274_631_000_2;

impl NonlinearitySpec {
    /// Validates the declared flags against the declared bounds.
    pub fn new(kind: NonlinearityKind, f_sup: f64, df_sup: f64, hyp: HypothesisFlags) -> Result<Self> {
        if !(df_sup >= 0.0) || !df_sup.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "‖DF‖₀ must be finite and >= 0, got {df_sup}"
            )));
        }
        if !(f_sup >= 0.0) {
            return Err(Error::InvalidArgument(format!("‖F‖₀ must be >= 0, got {f_sup}")));
        }
        if hyp.h2 && df_sup >= 2.0 {
            return Err(Error::InvalidArgument(format!(
                "H2 requires ‖DF‖₀ < 2, declared {df_sup}"
            )));
        }
        if hyp.h1 && !f_sup.is_finite() {
            return Err(Error::InvalidArgument("H1 requires a finite ‖F‖₀".into()));
        }
        // f ≡ 0 counts as a C¹ scalar map
        if hyp.h3 && !matches!(kind, NonlinearityKind::Nemytskii(_) | NonlinearityKind::Zero) {
            return Err(Error::InvalidArgument("H3 requires a pointwise nonlinearity".into()));
        }
        Ok(Self { kind, f_sup, df_sup, hyp })
    }

    pub fn zero() -> Self {
        Self {
            kind: NonlinearityKind::Zero,
            f_sup: 0.0,
            df_sup: 0.0,
            hyp: HypothesisFlags { h1: true, h2: true, h3: true },
        }
    }

    /// `f(u) = ε sin u`: H1 and H3, plus H2 when `|ε| < 2`.
    pub fn eps_sin(eps: f64) -> Self {
        let a = eps.abs();
        Self {
            kind: NonlinearityKind::Nemytskii(ScalarMap::Sin { eps }),
            f_sup: a * SQRT_2PI,
            df_sup: a,
            hyp: HypothesisFlags { h1: true, h2: a < 2.0, h3: true },
        }
    }

    /// `f(u) = ε u/(1+u²)`: `sup|f| = |ε|/2`, `sup|f'| = |ε|`.
    pub fn rational(eps: f64) -> Self {
        let a = eps.abs();
        Self {
            kind: NonlinearityKind::Nemytskii(ScalarMap::Rational { eps }),
            f_sup: 0.5 * a * SQRT_2PI,
            df_sup: a,
            hyp: HypothesisFlags { h1: true, h2: a < 2.0, h3: true },
        }
    }

    /// `f(u) = c u` with `|c| < 2`, exercising the H2 branch alone (F unbounded).
    pub fn linear(c: f64) -> Result<Self> {
        Self::new(
            NonlinearityKind::Nemytskii(ScalarMap::Linear { c }),
            f64::INFINITY,
            c.abs(),
            HypothesisFlags { h1: false, h2: true, h3: false },
        )
    }

    pub fn scalar_map(&self) -> Option<ScalarMap> {
        match self.kind {
            NonlinearityKind::Zero => None,
            NonlinearityKind::Nemytskii(m) => Some(m),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, NonlinearityKind::Zero)
    }

    /// Short label used in reports and ledgers.
    pub fn label(&self) -> String {
        match self.kind {
            NonlinearityKind::Zero => "zero".into(),
            NonlinearityKind::Nemytskii(m) => m.to_string(),
        }
    }
}

/// Grid buffers for evaluating `F` and `DF` at cutoff `n`.
#[derive(Clone, Debug)]
pub struct NemytskiiWorkspace {
    transform: SpectralTransform,
    x_grid: Vec<f64>,
    work: Vec<f64>,
}

impl NemytskiiWorkspace {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        let transform = SpectralTransform::new(n, m)?;
        Ok(Self {
            transform,
            x_grid: vec![0.0; m],
            work: vec![0.0; m],
        })
    }

    pub fn cutoff(&self) -> usize {
        self.transform.cutoff()
    }

    pub fn grid_size(&self) -> usize {
        self.transform.grid_size()
    }

    /// Loads `x` onto the grid; later calls to `eval_loaded`/`df_loaded` use it.
    pub fn load(&mut self, x: &[f64]) {
        self.transform.synthesize(x, &mut self.x_grid);
    }

    /// `P_n f(x(·))` for the loaded `x`, written into `out`.
    pub fn eval_loaded(&mut self, map: &ScalarMap, out: &mut [f64]) {
        for (w, &u) in self.work.iter_mut().zip(&self.x_grid) {
            *w = map.value(u);
        }
        self.transform.analyze(&self.work, out);
    }

    /// `P_n (f'(x(·)) h(·))` for the loaded `x`, written into `out`.
    pub fn df_loaded(&mut self, map: &ScalarMap, h: &[f64], out: &mut [f64]) {
        self.transform.synthesize(h, &mut self.work);
        for (w, &u) in self.work.iter_mut().zip(&self.x_grid) {
            *w *= map.derivative(u);
        }
        let work = std::mem::take(&mut self.work);
        self.transform.analyze(&work, out);
        self.work = work;
    }

    /// Grid values of the loaded state.
    pub fn loaded_grid(&self) -> &[f64] {
        &self.x_grid
    }

    pub fn eval(&mut self, spec: &NonlinearitySpec, x: &FourierState) -> Result<FourierState> {
        self.check(x)?;
        let mut out = FourierState::zeros(x.cutoff());
        if let Some(map) = spec.scalar_map() {
            self.load(x.coeffs());
            self.eval_loaded(&map, out.coeffs_mut());
        }
        Ok(out)
    }

    pub fn apply_df(&mut self, spec: &NonlinearitySpec, x: &FourierState, h: &FourierState) -> Result<FourierState> {
        self.check(x)?;
        self.check(h)?;
        let mut out = FourierState::zeros(x.cutoff());
        if let Some(map) = spec.scalar_map() {
            self.load(x.coeffs());
            self.df_loaded(&map, h.coeffs(), out.coeffs_mut());
        }
        Ok(out)
    }

    fn check(&self, x: &FourierState) -> Result<()> {
        if x.cutoff() != self.cutoff() {
            return Err(Error::CutoffMismatch {
                left: x.cutoff(),
                right: self.cutoff(),
            });
        }
        Ok(())
    }
}

/// `F(x)`: the projection onto modes `|k| <= n` of `ξ ↦ f(x(ξ))`, sampled on `m` points.
pub fn eval_f(spec: &NonlinearitySpec, x: &FourierState, m: usize) -> Result<FourierState> {
    NemytskiiWorkspace::new(x.cutoff(), m)?.eval(spec, x)
}

/// `DF(x) h`: the projection of `ξ ↦ f'(x(ξ)) h(ξ)`.
pub fn apply_df(spec: &NonlinearitySpec, x: &FourierState, h: &FourierState, m: usize) -> Result<FourierState> {
    NemytskiiWorkspace::new(x.cutoff(), m)?.apply_df(spec, x, h)
}

/// `|⟨D_ξ F(x), x⟩|`, which vanishes for every pointwise `F` because
/// `f(x) x'` is the derivative of a periodic function.
pub fn gradient_structure_residual(spec: &NonlinearitySpec, x: &FourierState, m: usize) -> Result<f64> {
    let fx = eval_f(spec, x, m)?;
    Ok(apply_dxi(&fx).dot(x).abs())
}

/// Random test state with `N(0, scale²/(1+|k|))` coefficients.
pub fn random_state(n: usize, seed: &SeedSpec, index: u64, scale: f64) -> FourierState {
    let g = seed.generator();
    let mut x = FourierState::zeros(n);
    let nn = n as i64;
    for k in -nn..=nn {
        let sd = scale / (1.0 + k.unsigned_abs() as f64).sqrt();
        x.set(k, sd * g.normal(index, k, 1));
    }
    x
}

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzReport {
    pub samples: usize,
    pub max_ratio: f64,
    pub declared: f64,
}

/// Samples random pairs and checks `|F(x) - F(y)|₂ <= ‖DF‖₀ |x - y|₂ (1 + 1e-6)`.
///
/// Pairs are drawn at cutoff `n` with a range of amplitudes so that large
/// arguments of `f` are exercised.
pub fn verify_lipschitz(spec: &NonlinearitySpec, sample_count: usize, seed: &SeedSpec, n: usize) -> Result<LipschitzReport> {
    let mut ws = NemytskiiWorkspace::new(n, min_grid_size(n))?;
    let tagged = seed.with_tag(StreamTag::Subsampling);
    let mut max_ratio = 0.0f64;
    for i in 0..sample_count as u64 {
        let scale = 0.1 * 30f64.powf((i % 7) as f64 / 6.0);
        let x = random_state(n, &tagged, 2 * i, scale);
        let y = if i % 2 == 0 {
            random_state(n, &tagged, 2 * i + 1, scale)
        } else {
            // nearby pair probes the local derivative
            let mut y = x.clone();
            y.axpy(1e-3, &random_state(n, &tagged, 2 * i + 1, 1.0));
            y
        };
        let d = x.sub(&y).norm();
        if d == 0.0 {
            continue;
        }
        let diff = ws.eval(spec, &x)?.sub(&ws.eval(spec, &y)?).norm();
        max_ratio = max_ratio.max(diff / d);
    }
    if max_ratio > spec.df_sup * (1.0 + 1e-6) {
        return Err(Error::SpecInconsistency(format!(
            "observed Lipschitz ratio {max_ratio} exceeds declared ‖DF‖₀ = {}",
            spec.df_sup
        )));
    }
    Ok(LipschitzReport {
        samples: sample_count,
        max_ratio,
        declared: spec.df_sup,
    })
}

/// `2π`-periodic L² norm of a bounded scalar map, for reference in reports.
pub fn h_norm_of_constant(c: f64) -> f64 {
    c.abs() * (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const M: usize = 64;

    fn some_state(n: usize, idx: u64, scale: f64) -> FourierState {
        random_state(n, &SeedSpec::new(3, 0, StreamTag::Subsampling), idx, scale)
    }

    #[test]
    fn eval_examples() {
        let x = some_state(8, 0, 1.0);
        assert_eq!(eval_f(&NonlinearitySpec::zero(), &x, M).unwrap(), FourierState::zeros(8));
        let id = NonlinearitySpec::linear(1.0).unwrap();
        let e1 = FourierState::basis(8, 1);
        assert!(eval_f(&id, &e1, M).unwrap().sub(&e1).norm() < 1e-14);
        let s = NonlinearitySpec::eps_sin(1.0);
        assert!(eval_f(&s, &FourierState::zeros(8), M).unwrap().norm() == 0.0);
        assert!(matches!(eval_f(&s, &x, 32), Err(Error::Dealiasing { .. })));
    }

    #[test]
    fn df_examples() {
        let s = NonlinearitySpec::eps_sin(1.0);
        let e1 = FourierState::basis(8, 1);
        let out = apply_df(&s, &FourierState::zeros(8), &e1, M).unwrap();
        assert!(out.sub(&e1).norm() < 1e-14);
        let c = NonlinearitySpec::linear(0.7).unwrap();
        let x = some_state(8, 1, 2.0);
        let h = some_state(8, 2, 1.0);
        assert!(apply_df(&c, &x, &h, M).unwrap().sub(&h.scaled(0.7)).norm() < 1e-13);
    }

    #[test]
    fn df_operator_norm_bound() {
        for spec in [NonlinearitySpec::eps_sin(1.0), NonlinearitySpec::rational(0.5)] {
            let mut ws = NemytskiiWorkspace::new(8, M).unwrap();
            for i in 0..1000 {
                let x = some_state(8, 3 * i, 0.5 + (i % 5) as f64);
                let h = some_state(8, 3 * i + 1, 1.0);
                let lhs = ws.apply_df(&spec, &x, &h).unwrap().norm();
                assert!(lhs <= spec.df_sup * h.norm() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn df_is_directional_derivative() {
        let spec = NonlinearitySpec::eps_sin(0.8);
        let x = some_state(8, 10, 1.0);
        let h = some_state(8, 11, 1.0);
        let mut ws = NemytskiiWorkspace::new(8, M).unwrap();
        let fx = ws.eval(&spec, &x).unwrap();
        let dfh = ws.apply_df(&spec, &x, &h).unwrap();
        let mut err = |eps: f64| {
            let mut xe = x.clone();
            xe.axpy(eps, &h);
            let mut q = ws.eval(&spec, &xe).unwrap().sub(&fx);
            q.scale(1.0 / eps);
            q.sub(&dfh).norm()
        };
        let (e3, e4) = (err(1e-3), err(1e-4));
        let rate = (e3 / e4).log10();
        assert!((rate - 1.0).abs() < 0.1, "observed order {rate}");
    }

    #[test]
    fn gradient_structure_vanishes() {
        let x = FourierState::zeros(16);
        assert_eq!(gradient_structure_residual(&NonlinearitySpec::eps_sin(1.0), &x, 256).unwrap(), 0.0);
        for i in 0..20 {
            let x = some_state(16, 100 + i, 1.0);
            let r = gradient_structure_residual(&NonlinearitySpec::eps_sin(1.0), &x, 256).unwrap();
            assert!(r <= 1e-8 * (1.0 + x.norm_sq()), "sin residual {r}");
            let id = NonlinearitySpec::linear(1.0).unwrap();
            let r = gradient_structure_residual(&id, &x, 256).unwrap();
            assert!(r <= 1e-10, "identity residual {r}");
            // poles of u/(1+u^2) sit close to the real axis, so the grid
            // sum needs more points before aliasing drops below tolerance
            let rat = NonlinearitySpec::rational(0.5);
            let r = gradient_structure_residual(&rat, &x, 2048).unwrap();
            assert!(r <= 1e-8 * (1.0 + x.norm_sq()), "rational residual {r}");
        }
    }

    #[test]
    fn bounded_specs_respect_f_sup() {
        let mut ws = NemytskiiWorkspace::new(8, M).unwrap();
        for spec in [NonlinearitySpec::eps_sin(0.2), NonlinearitySpec::rational(0.5)] {
            for i in 0..200 {
                let x = some_state(8, 500 + i, 0.3 * (1 + i % 9) as f64);
                assert!(ws.eval(&spec, &x).unwrap().norm() <= spec.f_sup * (1.0 + 1e-12));
            }
        }
        assert_relative_eq!(NonlinearitySpec::eps_sin(1.0).f_sup, h_norm_of_constant(1.0), epsilon = 1e-15);
    }

    #[test]
    fn lipschitz_checks() {
        let seed = SeedSpec::new(1, 0, StreamTag::Subsampling);
        let r = verify_lipschitz(&NonlinearitySpec::zero(), 50, &seed, 8).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        let eps = 0.3;
        let r = verify_lipschitz(&NonlinearitySpec::eps_sin(eps), 200, &seed, 8).unwrap();
        assert!(r.max_ratio <= eps && r.max_ratio > 0.0);
        let cubic = NonlinearitySpec::new(
            NonlinearityKind::Nemytskii(ScalarMap::Cubic { c: 1.0 }),
            f64::INFINITY,
            1.0,
            HypothesisFlags::default(),
        )
        .unwrap();
        assert!(matches!(verify_lipschitz(&cubic, 200, &seed, 8), Err(Error::SpecInconsistency(_))));
    }

    #[test]
    fn flag_invariants_enforced() {
        let k = NonlinearityKind::Nemytskii(ScalarMap::Sin { eps: 3.0 });
        assert!(NonlinearitySpec::new(k, 1.0, 3.0, HypothesisFlags { h2: true, ..Default::default() }).is_err());
        assert!(NonlinearitySpec::new(k, f64::INFINITY, 3.0, HypothesisFlags { h1: true, ..Default::default() }).is_err());
        assert!(NonlinearitySpec::new(k, 1.0, f64::INFINITY, HypothesisFlags::default()).is_err());
        assert!(NonlinearitySpec::linear(2.5).is_err());
        assert!(!NonlinearitySpec::eps_sin(2.5).hyp.h2);
    }
}
