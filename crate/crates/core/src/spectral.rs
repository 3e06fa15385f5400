//! Real Fourier basis on the circle and the diagonal operators built on it.
//!
//! States are truncated to modes `k = -n..=n` of the orthonormal family
//!
//! ```text
//! e_0 = 1/sqrt(2π),  e_k = cos(kξ)/sqrt(π),  e_{-k} = sin(kξ)/sqrt(π)   (k > 0)
//! ```
//!
//! In this basis `A = D_ξ² - I` is diagonal with eigenvalue `-(1 + k²)` and
//! `D_ξ` rotates each pair `(k, -k)`: `(x_k, x_{-k}) -> (k x_{-k}, -k x_k)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constant in `|K(t)x|₂ <= κ e^{-t} t^{-1/2} |x|₂`. Over real `k`,
/// `k² e^{-2k²t}` peaks at `k² = 1/(2t)` with value `1/(2et)`, so
/// `κ = (2e)^{-1/2}`.
pub const KAPPA: f64 = 0.428_881_942_480_353_4;

/// Eigenvalue magnitude of `-A` on mode `k`.
#[inline]
pub fn lambda(k: i64) -> f64 {
    1.0 + (k * k) as f64
}

/// Truncated element of H: coefficients over modes `-n..=n`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierState {
    n: usize,
    coeffs: Vec<f64>,
}

impl fmt::Debug for FourierState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierState")
            .field("n", &self.n)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl FourierState {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            coeffs: vec![0.0; 2 * n + 1],
        }
    }

    /// Unit vector `e_k` in the span of modes `-n..=n`.
    pub fn basis(n: usize, k: i64) -> Self {
        let mut s = Self::zeros(n);
        s.set(k, 1.0);
        s
    }

    /// Builds a state from coefficients ordered `k = -n, ..., n`.
    pub fn from_coeffs(n: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != 2 * n + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients for n = {n}, got {}",
                2 * n + 1,
                coeffs.len()
            )));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "coefficient at k = {} is not finite",
                i as i64 - n as i64
            )));
        }
        Ok(Self { n, coeffs })
    }

    /// Builds a state from `(k, value)` pairs; modes not listed are zero.
    pub fn from_modes(n: usize, modes: &[(i64, f64)]) -> Self {
        let mut s = Self::zeros(n);
        for &(k, v) in modes {
            s.set(k, s.get(k) + v);
        }
        s
    }

    #[inline]
    pub fn cutoff(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficient of mode `k`; zero outside the span.
    #[inline]
    pub fn get(&self, k: i64) -> f64 {
        if k.unsigned_abs() as usize > self.n {
            0.0
        } else {
            self.coeffs[(k + self.n as i64) as usize]
        }
    }

    /// # Panics
    /// If `|k| > n`.
    #[inline]
    pub fn set(&mut self, k: i64, v: f64) {
        assert!(
            k.unsigned_abs() as usize <= self.n,
            "mode {k} outside cutoff {}",
            self.n
        );
        self.coeffs[(k + self.n as i64) as usize] = v;
    }

    /// Iterates `(k, x_k)` for `k = -n..=n`.
    pub fn modes(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let n = self.n as i64;
        self.coeffs.iter().enumerate().map(move |(i, &c)| (i as i64 - n, c))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n, "cutoff mismatch in inner product");
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `|x|₂`.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn scale(&mut self, a: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= a);
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut s = self.clone();
        s.scale(a);
        s
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        assert_eq!(self.n, other.n, "cutoff mismatch in axpy");
        self.coeffs
            .iter_mut()
            .zip(&other.coeffs)
            .for_each(|(s, o)| *s += a * o);
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut s = self.clone();
        s.axpy(1.0, other);
        s
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut s = self.clone();
        s.axpy(-1.0, other);
        s
    }

    /// Re-expresses the state with cutoff `n`, truncating or zero-padding.
    pub fn with_cutoff(&self, n: usize) -> Self {
        let mut out = Self::zeros(n);
        let m = n.min(self.n) as i64;
        for k in -m..=m {
            out.set(k, self.get(k));
        }
        out
    }

    /// Largest `|k|` carrying a nonzero coefficient (0 for the zero state).
    pub fn bandwidth(&self) -> usize {
        self.modes()
            .filter(|&(_, c)| c != 0.0)
            .map(|(k, _)| k.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }
}

/// Regularity index `σ >= 0` of the spaces `H^σ_#`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SobolevIndex(f64);

impl SobolevIndex {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Sobolev index must be a finite number >= 0, got {sigma}"
            )));
        }
        Ok(Self(sigma))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `(Σ_k (1+k²)^{σ/2} x_k²)^{1/2}`, the weighted norm with the weight
/// exponent `σ/2` applied inside the sum.
pub fn sobolev_norm(x: &FourierState, s: SobolevIndex) -> f64 {
    let half = 0.5 * s.value();
    x.modes()
        .map(|(k, c)| lambda(k).powf(half) * c * c)
        .sum::<f64>()
        .sqrt()
}

/// `|(-A)^{σ/2} x|₂ = (Σ_k (1+k²)^σ x_k²)^{1/2}`.
///
/// This is the norm compatible with the operator identity
/// `|(-A)^{σ/2}x|₂ = |x|_{2,σ}`; every regularity diagnostic uses it.
pub fn operator_sobolev_norm(x: &FourierState, s: SobolevIndex) -> f64 {
    let sigma = s.value();
    x.modes()
        .map(|(k, c)| lambda(k).powf(sigma) * c * c)
        .sum::<f64>()
        .sqrt()
}

/// `A x`, coefficientwise `-(1+k²) x_k`.
pub fn apply_a(x: &FourierState) -> FourierState {
    let mut out = x.clone();
    let n = x.cutoff() as i64;
    for (i, c) in out.coeffs_mut().iter_mut().enumerate() {
        *c *= -lambda(i as i64 - n);
    }
    out
}

/// `e^{tA} x`.
///
/// # Panics
/// If `t < 0`; the semigroup is only defined forward in time.
pub fn apply_semigroup(t: f64, x: &FourierState) -> FourierState {
    assert!(t >= 0.0, "semigroup time must be nonnegative, got {t}");
    let mut out = x.clone();
    if t == 0.0 {
        return out;
    }
    let n = x.cutoff() as i64;
    for (i, c) in out.coeffs_mut().iter_mut().enumerate() {
        *c *= (-lambda(i as i64 - n) * t).exp();
    }
    out
}

/// `D_ξ x` in the fixed rotation convention.
pub fn apply_dxi(x: &FourierState) -> FourierState {
    let mut out = FourierState::zeros(x.cutoff());
    dxi_into(x.coeffs(), out.coeffs_mut());
    out
}

/// Slice form of [`apply_dxi`]; `src` and `dst` are indexed `k + n`.
pub(crate) fn dxi_into(src: &[f64], dst: &mut [f64]) {
    debug_assert_eq!(src.len(), dst.len());
    let n = src.len() / 2;
    dst[n] = 0.0;
    for k in 1..=n {
        let kf = k as f64;
        let pos = src[n + k];
        let neg = src[n - k];
        dst[n + k] = kf * neg;
        dst[n - k] = -kf * pos;
    }
}

/// `K(t)x = D_ξ e^{tA} x`; rejects `t <= 0` where the kernel is singular.
pub fn kernel_k(t: f64, x: &FourierState) -> Result<FourierState> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kernel K(t) requires t > 0, got {t}"
        )));
    }
    Ok(apply_dxi(&apply_semigroup(t, x)))
}

/// Right-hand side of the kernel bound, `κ² t^{-1} e^{-2t}`.
pub fn kernel_bound_sq(t: f64) -> f64 {
    kernel_bound_sq_with(KAPPA * KAPPA, t)
}

/// `c t^{-1} e^{-2t}` for an arbitrary candidate constant `c = κ²`.
pub fn kernel_bound_sq_with(c: f64, t: f64) -> f64 {
    c * (-2.0 * t).exp() / t
}

/// Times on which `sup_k k² e^{-2(1+k²)t} <= c t^{-1} e^{-2t}` fails, with
/// the two sides.
pub fn kernel_bound_violations(c: f64, times: &[f64]) -> Vec<(f64, f64, f64)> {
    times
        .iter()
        .filter_map(|&t| {
            let (sup, bound) = (kernel_sup_sq(t), kernel_bound_sq_with(c, t));
            (sup > bound).then_some((t, sup, bound))
        })
        .collect()
}

/// `sup_{k ∈ ℤ} k² e^{-2(1+k²)t}`; the integer maximiser sits next to
/// `k* = (2t)^{-1/2}`, so scanning up to a few multiples of it is exact.
pub fn kernel_sup_sq(t: f64) -> f64 {
    assert!(t > 0.0);
    let kstar = (0.5 / t).sqrt();
    let kmax = (4.0 * kstar).ceil() as i64 + 2;
    (0..=kmax)
        .map(|k| {
            let kf = k as f64;
            kf * kf * (-2.0 * (1.0 + kf * kf) * t).exp()
        })
        .fold(0.0, f64::max)
}

/// `P_n x`: zeroes every mode with `|k| > n`. The cutoff of the result is
/// that of `x`.
pub fn project(x: &FourierState, n: usize) -> FourierState {
    let mut out = x.clone();
    let cut = x.cutoff();
    if n >= cut {
        return out;
    }
    let c = out.coeffs_mut();
    for k in (n + 1)..=cut {
        c[cut + k] = 0.0;
        c[cut - k] = 0.0;
    }
    out
}

/// Point values on the uniform grid `ξ_j = 2πj/m`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub m: usize,
    pub values: Vec<f64>,
}

impl GridField {
    /// `(2π/m) Σ_j v_j²`, the discrete L² norm squared.
    pub fn l2_norm_sq(&self) -> f64 {
        2.0 * PI / self.m as f64 * self.values.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Smallest admissible grid for cutoff `n`: a power of two `>= 2(2n+1)`.
pub fn min_grid_size(n: usize) -> usize {
    (2 * (2 * n + 1)).next_power_of_two()
}

pub(crate) fn check_grid(n: usize, m: usize) -> Result<()> {
    let required = 2 * (2 * n + 1);
    if m < required || !m.is_power_of_two() {
        return Err(Error::Dealiasing {
            m,
            n,
            required: required.next_power_of_two(),
        });
    }
    Ok(())
}

/// Cached FFT plans and scratch for transforms between cutoff `n` and grid `m`.
pub struct SpectralTransform {
    n: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl fmt::Debug for SpectralTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralTransform")
            .field("n", &self.n)
            .field("m", &self.m)
            .finish()
    }
}

impl Clone for SpectralTransform {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            m: self.m,
            forward: Arc::clone(&self.forward),
            inverse: Arc::clone(&self.inverse),
            buf: self.buf.clone(),
            scratch: self.scratch.clone(),
        }
    }
}

const SQRT_PI: f64 = 1.772_453_850_905_516;
const SQRT_2PI: f64 = 2.506_628_274_631_000_2;

impl SpectralTransform {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        check_grid(n, m)?;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Ok(Self {
            n,
            m,
            forward,
            inverse,
            buf: vec![Complex::new(0.0, 0.0); m],
            scratch: vec![Complex::new(0.0, 0.0); scratch_len],
        })
    }

    pub fn cutoff(&self) -> usize {
        self.n
    }

    pub fn grid_size(&self) -> usize {
        self.m
    }

    /// Synthesises point values of `coeffs` (indexed `k + n`) into `out`.
    pub fn synthesize(&mut self, coeffs: &[f64], out: &mut [f64]) {
        let n = self.n;
        let m = self.m;
        debug_assert_eq!(coeffs.len(), 2 * n + 1);
        debug_assert_eq!(out.len(), m);
        self.buf.fill(Complex::new(0.0, 0.0));
        self.buf[0] = Complex::new(coeffs[n] / SQRT_2PI, 0.0);
        let half = 0.5 / SQRT_PI;
        for k in 1..=n {
            let c = Complex::new(coeffs[n + k] * half, -coeffs[n - k] * half);
            self.buf[k] = c;
            self.buf[m - k] = c.conj();
        }
        self.inverse
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.re;
        }
    }

    /// Projects point values onto modes `-n..=n` (discrete Fourier analysis).
    pub fn analyze(&mut self, values: &[f64], coeffs: &mut [f64]) {
        let n = self.n;
        let m = self.m;
        debug_assert_eq!(values.len(), m);
        debug_assert_eq!(coeffs.len(), 2 * n + 1);
        for (b, &v) in self.buf.iter_mut().zip(values) {
            *b = Complex::new(v, 0.0);
        }
        self.forward
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        let inv_m = 1.0 / m as f64;
        coeffs[n] = SQRT_2PI * self.buf[0].re * inv_m;
        let two = 2.0 * SQRT_PI * inv_m;
        for k in 1..=n {
            coeffs[n + k] = two * self.buf[k].re;
            coeffs[n - k] = -two * self.buf[k].im;
        }
    }

    pub fn to_grid(&mut self, x: &FourierState) -> Result<GridField> {
        if x.cutoff() != self.n {
            return Err(Error::CutoffMismatch {
                left: x.cutoff(),
                right: self.n,
            });
        }
        let mut values = vec![0.0; self.m];
        self.synthesize(x.coeffs(), &mut values);
        Ok(GridField { m: self.m, values })
    }

    pub fn from_grid(&mut self, g: &GridField) -> Result<FourierState> {
        if g.m != self.m || g.values.len() != self.m {
            return Err(Error::InvalidArgument(format!(
                "grid of size {} passed to a transform planned for m = {}",
                g.values.len(),
                self.m
            )));
        }
        let mut out = FourierState::zeros(self.n);
        self.analyze(&g.values, out.coeffs_mut());
        Ok(out)
    }
}

/// Point values of `x` on a grid of `m` points (`m` a power of two, `m >= 2(2n+1)`).
pub fn to_grid(x: &FourierState, m: usize) -> Result<GridField> {
    SpectralTransform::new(x.cutoff(), m)?.to_grid(x)
}

/// Fourier coefficients `|k| <= n` of a grid field.
pub fn from_grid(g: &GridField, n: usize) -> Result<FourierState> {
    SpectralTransform::new(n, g.m)?.from_grid(g)
}
