//! Mittag-Leffler series and the Henry (singular Gronwall) envelope.

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};

const REL_TAIL: f64 = 1e-16;
const QUIET_TERMS: usize = 20;
const MAX_TERMS: usize = 200_000;

/// `E_β(z) = Σ_{n≥0} z^{nβ} / Γ(nβ + 1)` for `β > 0`, `z >= 0`.
///
/// Terms are formed in log space, so intermediate powers never overflow.
/// Summation stops once the series is past its largest term and twenty
/// consecutive terms each fall below `1e-16` of the partial sum.
pub fn mittag_leffler(beta: f64, z: f64) -> Result<f64> {
    check_args(beta, z)?;
    if z == 0.0 {
        return Ok(1.0);
    }
    sum_series(z, beta, |n| {
        let p = n as f64 * beta;
        p * z.ln() - ln_gamma(p + 1.0)
    }, 0)
}

/// `E'_β(z) = Σ_{n≥1} z^{nβ-1} / Γ(nβ)`, the termwise derivative of the
/// same series. At `z = 0` it is infinite for `β < 1`.
pub fn mittag_leffler_derivative(beta: f64, z: f64) -> Result<f64> {
    check_args(beta, z)?;
    if z == 0.0 {
        return if beta < 1.0 {
            Err(Error::Range(format!("E'_{beta}(0) is unbounded")))
        } else if beta == 1.0 {
            Ok(1.0)
        } else {
            Ok(0.0)
        };
    }
    sum_series(z, beta, |n| {
        let p = n as f64 * beta;
        (p - 1.0) * z.ln() - ln_gamma(p)
    }, 1)
}

fn check_args(beta: f64, z: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Mittag-Leffler index must be positive, got {beta}"
        )));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Mittag-Leffler argument must be finite and >= 0, got {z}"
        )));
    }
    Ok(())
}

fn sum_series(z: f64, beta: f64, log_term: impl Fn(usize) -> f64, first: usize) -> Result<f64> {
    let mut sum = 0.0f64;
    let mut quiet = 0usize;
    for n in first..MAX_TERMS {
        let lt = log_term(n);
        if lt > f64::MAX.ln() {
            return Err(Error::Range(format!(
                "E_{beta}({z}) overflows f64"
            )));
        }
        let term = lt.exp();
        sum += term;
        if !sum.is_finite() {
            return Err(Error::Range(format!("E_{beta}({z}) overflows f64")));
        }
        // terms are unimodal in n with the peak near nβ ≈ z
        let past_peak = n as f64 * beta > z;
        if past_peak && term < REL_TAIL * sum {
            quiet += 1;
            if quiet >= QUIET_TERMS {
                return Ok(sum);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Range(format!(
        "E_{beta}({z}) did not converge in {MAX_TERMS} terms"
    )))
}

/// Parameters of `u(t) <= a + b ∫_0^t (t-s)^{β-1} u(s) ds`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HenryParams {
    pub a: f64,
    pub b: f64,
    pub beta: f64,
}

impl HenryParams {
    pub fn new(a: f64, b: f64, beta: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0 && beta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Henry parameters need a, b >= 0 and beta > 0 (got a = {a}, b = {b}, beta = {beta})"
            )));
        }
        Ok(Self { a, b, beta })
    }

    /// `θ = (b Γ(β))^{1/β}`.
    pub fn theta(&self) -> f64 {
        (self.b * gamma(self.beta)).powf(1.0 / self.beta)
    }
}

/// `a E_β(θ t)`: the comparison curve for constant forcing.
pub fn henry_envelope(p: &HenryParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "envelope time must be >= 0, got {t}"
        )));
    }
    if p.a == 0.0 {
        return Ok(0.0);
    }
    Ok(p.a * mittag_leffler(p.beta, p.theta() * t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::erf::erfc;
    use std::f64::consts::{E, PI};

    /// Plain forward summation of the first `terms` series terms.
    fn series_oracle(beta: f64, z: f64, terms: usize) -> f64 {
        (0..terms)
            .map(|n| {
                let p = n as f64 * beta;
                z.powf(p) / gamma(p + 1.0)
            })
            .sum()
    }

    #[test]
    fn exponential_case() {
        for z in [0.0, 0.5, 1.0, 2.0] {
            assert_relative_eq!(mittag_leffler(1.0, z).unwrap(), z.exp(), max_relative = 1e-12);
        }
        assert_relative_eq!(mittag_leffler(1.0, 1.0).unwrap(), E, max_relative = 1e-14);
    }

    #[test]
    fn half_index_matches_erfc_and_direct_series() {
        // E_{1/2}(z) = e^z erfc(-sqrt z), evaluated to 30 digits offline
        const FROZEN: [(f64, f64); 6] = [
            (1.0, 5.008_980_080_762_283),
            (0.01, 1.123_643_354_199_209_5),
            (0.3, 2.107_699_203_837_270_5),
            (2.0, 14.441_908_195_414_959),
            (7.5, 3_615.890_444_144_571_4),
            (20.0, 970_330_390.696_366_6),
        ];
        assert_eq!(mittag_leffler(0.5, 0.0).unwrap(), 1.0);
        assert_relative_eq!(series_oracle(0.5, 1.0, 60), FROZEN[0].1, max_relative = 1e-14);
        for (z, want) in FROZEN {
            assert_relative_eq!(mittag_leffler(0.5, z).unwrap(), want, max_relative = 1e-12);
            // statrs erfc carries about 1e-11 relative error
            assert_relative_eq!(z.exp() * erfc(-z.sqrt()), want, max_relative = 1e-10);
        }
    }

    #[test]
    fn large_argument_reports_range_error() {
        assert!(matches!(mittag_leffler(1.0, 800.0), Err(Error::Range(_))));
        assert!(mittag_leffler(1.0, 700.0).is_ok());
        assert!(mittag_leffler(0.5, -1.0).is_err());
        assert!(mittag_leffler(0.0, 1.0).is_err());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &(beta, z) in &[(0.5, 0.7), (0.5, 3.0), (1.0, 1.5), (1.5, 2.0)] {
            let h = 1e-5;
            let fd = (mittag_leffler(beta, z + h).unwrap() - mittag_leffler(beta, z - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(mittag_leffler_derivative(beta, z).unwrap(), fd, max_relative = 1e-7);
        }
        assert!(mittag_leffler_derivative(0.5, 0.0).is_err());
        assert_eq!(mittag_leffler_derivative(1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn small_argument_asymptotics() {
        let z = 1e-6;
        let r = mittag_leffler_derivative(0.5, z).unwrap() * gamma(0.5) * z.sqrt();
        assert!((r - 1.0).abs() < 0.01, "ratio {r}");
    }

    #[test]
    fn envelope_examples() {
        for beta in [0.5, 1.0, 1.7] {
            let p = HenryParams::new(1.0, 0.0, beta).unwrap();
            for t in [0.0, 0.3, 5.0] {
                assert_eq!(henry_envelope(&p, t).unwrap(), 1.0);
            }
            let q = HenryParams::new(2.0, 3.3, beta).unwrap();
            assert_eq!(henry_envelope(&q, 0.0).unwrap(), 2.0);
        }
        let p = HenryParams::new(1.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(p.theta(), PI, max_relative = 1e-13);
        let want = series_oracle(0.5, PI, 200);
        assert_relative_eq!(henry_envelope(&p, 1.0).unwrap(), want, max_relative = 1e-12);
        assert!(HenryParams::new(-1.0, 0.0, 0.5).is_err());
        assert!(HenryParams::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn envelope_monotone() {
        let mut prev = 0.0;
        for i in 0..40 {
            let t = i as f64 * 0.1;
            let v = henry_envelope(&HenryParams::new(1.0, 0.8, 0.5).unwrap(), t).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let t = 1.3;
        let base = henry_envelope(&HenryParams::new(1.0, 0.5, 0.5).unwrap(), t).unwrap();
        assert!(henry_envelope(&HenryParams::new(1.5, 0.5, 0.5).unwrap(), t).unwrap() >= base);
        assert!(henry_envelope(&HenryParams::new(1.0, 0.9, 0.5).unwrap(), t).unwrap() >= base);
    }

    #[test]
    fn discrete_gronwall_stays_under_envelope() {
        for &beta in &[0.5, 1.0] {
            let (a, b) = (1.0, 0.8);
            let p = HenryParams::new(a, b, beta).unwrap();
            let dt = 1e-3;
            let steps = 2000;
            let mut u = Vec::with_capacity(steps + 1);
            for m in 0..=steps {
                let tm = m as f64 * dt;
                let s: f64 = u
                    .iter()
                    .enumerate()
                    .map(|(j, uj): (usize, &f64)| (tm - j as f64 * dt).powf(beta - 1.0) * uj * dt)
                    .sum();
                let um = a + b * s;
                assert!(um <= henry_envelope(&p, tm).unwrap() * 1.02, "beta {beta}, step {m}");
                u.push(um);
            }
        }
    }
}
