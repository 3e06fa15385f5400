//! Closed forms for the linear case `F = 0`, used as independent references
//! by the Monte Carlo checks.
//!
//! Under the invariant law of the linear system the coefficients are
//! independent `N(0, v_k)` with `v_k = 1/(2(1+k²))`, so every ν-integral of a
//! cylindrical function reduces to a one-dimensional Gaussian expectation,
//! which Gauss-Hermite quadrature evaluates to machine precision.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::kolmogorov::CylindricalFunction;
use crate::noise::{innovation_variance, stationary_variance};
use crate::spectral::{apply_semigroup, lambda, FourierState};

/// Gauss-Hermite rule for the standard normal weight.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// `order`-point rule from the Golub-Welsch eigenproblem of the Jacobi
    /// matrix of the probabilists' Hermite polynomials.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let mut j = DMatrix::<f64>::zeros(order, order);
        for i in 1..order {
            let b = (i as f64).sqrt();
            j[(i, i - 1)] = b;
            j[(i - 1, i)] = b;
        }
        let eig = SymmetricEigen::new(j);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// `E g(σ Z)` with `Z ~ N(0, 1)`.
    pub fn expect(&self, sigma: f64, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(sigma * x))
            .sum()
    }
}

fn rule() -> GaussHermite {
    GaussHermite::new(96)
}

/// Variance of `<x, h>` under the linear invariant law: `Σ h_k² v_k`.
pub fn stationary_pairing_variance(h: &FourierState) -> f64 {
    h.modes().map(|(k, c)| c * c * stationary_variance(k)).sum()
}

/// Exact `P_t φ(x)` for `F = 0`:
/// `shift + a e^{-Σ h_k² q_k(t)/2} T(<e^{tA}x, h>)`.
pub fn ou_pt_cylindrical(phi: &CylindricalFunction, x: &FourierState, t: f64) -> f64 {
    let damp = (-0.5 * phi.h.modes().map(|(k, c)| c * c * innovation_variance(k, t)).sum::<f64>()).exp();
    phi.shift + phi.amplitude * damp * phi.trig.value(phi.phase(&apply_semigroup(t, x)))
}

/// Exact `D P_t φ(x)` for `F = 0`, at the cutoff of `x`.
pub fn ou_grad_pt_cylindrical(phi: &CylindricalFunction, x: &FourierState, t: f64) -> FourierState {
    let damp = (-0.5 * phi.h.modes().map(|(k, c)| c * c * innovation_variance(k, t)).sum::<f64>()).exp();
    let u = phi.phase(&apply_semigroup(t, x));
    apply_semigroup(t, &phi.h.with_cutoff(x.cutoff())).scaled(phi.amplitude * damp * phi.trig.derivative(u))
}

/// `∫ g(φ(x)) dν` for the linear invariant law.
pub fn ou_nu_expect(phi: &CylindricalFunction, g: impl Fn(f64) -> f64) -> f64 {
    let s = stationary_pairing_variance(&phi.h).sqrt();
    rule().expect(s, |u| g(phi.shift + phi.amplitude * phi.trig.value(u)))
}

/// `∫ |Dφ|₂² dν`.
pub fn ou_dirichlet_energy(phi: &CylindricalFunction) -> f64 {
    let s = stationary_pairing_variance(&phi.h).sqrt();
    let h2 = phi.h.norm_sq();
    rule().expect(s, |u| (phi.amplitude * phi.trig.derivative(u)).powi(2) * h2)
}

/// `∫ φ K₀φ dν` for `F = 0`. With `u = <x, h>` and `v = <x, A h>` jointly
/// Gaussian, `E[g(u) v] = β E[g(u) u]` where `β = Cov(u, v)/Var(u)` and
/// `Cov(u, v) = -|h|₂²/2`.
pub fn ou_phi_k0_phi(phi: &CylindricalFunction) -> f64 {
    let var = stationary_pairing_variance(&phi.h);
    let h2 = phi.h.norm_sq();
    let beta = -0.5 * h2 / var;
    let (a, b, tr) = (phi.amplitude, phi.shift, phi.trig);
    rule().expect(var.sqrt(), |u| {
        let f = b + a * tr.value(u);
        f * (0.5 * a * tr.second(u) * h2 + a * tr.derivative(u) * beta * u)
    })
}

/// `Var_ν φ`.
pub fn ou_variance(phi: &CylindricalFunction) -> f64 {
    let m = ou_nu_expect(phi, |f| f);
    ou_nu_expect(phi, |f| (f - m).powi(2))
}

/// `Ent_ν(φ²) = ∫ φ² log φ² dν - (∫ φ² dν) log ∫ φ² dν`.
pub fn ou_entropy_sq(phi: &CylindricalFunction) -> f64 {
    let m = ou_nu_expect(phi, |f| f * f);
    ou_nu_expect(phi, |f| {
        let f2 = f * f;
        if f2 > 0.0 {
            f2 * f2.ln()
        } else {
            0.0
        }
    }) - m * m.ln()
}

/// `∫ (P_tφ - φ̄)² dν` for `F = 0`: `<e^{tA}x, h>` is Gaussian with
/// variance `Σ e^{-2λ_k t} h_k² v_k`.
pub fn ou_gap_distance(phi: &CylindricalFunction, t: f64) -> f64 {
    let damp = (-0.5 * phi.h.modes().map(|(k, c)| c * c * innovation_variance(k, t)).sum::<f64>()).exp();
    let s = phi
        .h
        .modes()
        .map(|(k, c)| (-2.0 * lambda(k) * t).exp() * c * c * stationary_variance(k))
        .sum::<f64>()
        .sqrt();
    let g = rule();
    let mean = g.expect(s, |u| phi.amplitude * damp * phi.trig.value(u));
    g.expect(s, |u| (phi.amplitude * damp * phi.trig.value(u) - mean).powi(2))
}

/// The three terms of the energy identity for `F = 0`:
/// `(∫(P_tφ)² dν, ∫_0^t ∫|DP_sφ|² dν ds, ∫φ² dν)`.
pub fn ou_energy_identity(phi: &CylindricalFunction, t: f64) -> (f64, f64, f64) {
    let g = rule();
    let parts = |s: f64| {
        let damp = (-0.5 * phi.h.modes().map(|(k, c)| c * c * innovation_variance(k, s)).sum::<f64>()).exp();
        let sd = phi
            .h
            .modes()
            .map(|(k, c)| (-2.0 * lambda(k) * s).exp() * c * c * stationary_variance(k))
            .sum::<f64>()
            .sqrt();
        let eh2: f64 = phi.h.modes().map(|(k, c)| (-2.0 * lambda(k) * s).exp() * c * c).sum();
        let sq = g.expect(sd, |u| (phi.shift + phi.amplitude * damp * phi.trig.value(u)).powi(2));
        let grad = g.expect(sd, |u| (phi.amplitude * damp * phi.trig.derivative(u)).powi(2)) * eh2;
        (sq, grad)
    };
    // composite Simpson on a smooth integrand
    let intervals = 2000;
    let h = t / intervals as f64;
    let integral = if t > 0.0 {
        (0..=intervals)
            .map(|i| {
                let w = if i == 0 || i == intervals {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * parts(i as f64 * h).1
            })
            .sum::<f64>()
            * h
            / 3.0
    } else {
        0.0
    };
    (parts(t).0, integral, parts(0.0).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kolmogorov::Trig;
    use approx::assert_relative_eq;

    #[test]
    fn hermite_moments() {
        let g = GaussHermite::new(40);
        assert_relative_eq!(g.expect(1.0, |_| 1.0), 1.0, epsilon = 1e-13);
        assert_relative_eq!(g.expect(2.0, |u| u * u), 4.0, epsilon = 1e-12);
        assert_relative_eq!(g.expect(1.0, |u| u.powi(4)), 3.0, epsilon = 1e-12);
        // E cos(σZ) = e^{-σ²/2}
        assert_relative_eq!(g.expect(0.7, f64::cos), (-0.245f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn mode_zero_quasi_linear_saturates_the_gap() {
        let eps: f64 = 0.05;
        let phi = CylindricalFunction::new(Trig::Sin, FourierState::basis(4, 0).scaled(eps))
            .unwrap()
            .scaled(1.0 / eps);
        let x = eps * eps;
        assert_relative_eq!(ou_variance(&phi), -(-x).exp_m1() / (2.0 * x), max_relative = 1e-12);
        assert_relative_eq!(ou_dirichlet_energy(&phi), (1.0 + (-x).exp()) / 2.0, max_relative = 1e-12);
        let ratio = 0.5 * ou_dirichlet_energy(&phi) / ou_variance(&phi);
        assert!((1.0..1.0 + 1e-5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn energy_identity_closes_in_closed_form() {
        let phi = CylindricalFunction::new(Trig::Cos, FourierState::from_modes(4, &[(0, 0.6), (1, 0.9), (-3, 0.4)]))
            .unwrap()
            .shifted(0.3);
        for t in [0.0, 0.3, 1.0, 4.0] {
            let (a, b, c) = ou_energy_identity(&phi, t);
            assert_relative_eq!(a + b, c, max_relative = 1e-10);
        }
    }

    #[test]
    fn ibpf_in_closed_form() {
        let phi = CylindricalFunction::new(Trig::Sin, FourierState::from_modes(4, &[(1, 0.8), (2, -0.5)])).unwrap();
        assert_relative_eq!(ou_phi_k0_phi(&phi), -0.5 * ou_dirichlet_energy(&phi), max_relative = 1e-12);
        let c = CylindricalFunction::new(Trig::Cos, FourierState::from_modes(4, &[(0, 1.3)])).unwrap().shifted(-0.4);
        assert_relative_eq!(ou_phi_k0_phi(&c), -0.5 * ou_dirichlet_energy(&c), max_relative = 1e-12);
    }

    #[test]
    fn gap_distance_limits() {
        let phi = CylindricalFunction::new(Trig::Cos, FourierState::from_modes(4, &[(1, 0.7)])).unwrap();
        assert_relative_eq!(ou_gap_distance(&phi, 0.0), ou_variance(&phi), max_relative = 1e-12);
        assert!(ou_gap_distance(&phi, 5.0) < 1e-6);
    }

    #[test]
    fn closed_form_pt_at_time_zero_and_gradient() {
        let phi = CylindricalFunction::new(Trig::Cos, FourierState::from_modes(4, &[(0, 0.3), (2, 1.1)])).unwrap();
        let x = FourierState::from_modes(4, &[(0, 1.0), (2, -0.4), (3, 2.0)]);
        assert_relative_eq!(ou_pt_cylindrical(&phi, &x, 0.0), phi.eval(&x), epsilon = 1e-15);
        let t = 0.4;
        let g = ou_grad_pt_cylindrical(&phi, &x, t);
        for k in [0i64, 2, 3] {
            let e = 1e-6;
            let mut xp = x.clone();
            xp.set(k, x.get(k) + e);
            let mut xm = x.clone();
            xm.set(k, x.get(k) - e);
            let fd = (ou_pt_cylindrical(&phi, &xp, t) - ou_pt_cylindrical(&phi, &xm, t)) / (2.0 * e);
            assert!((fd - g.get(k)).abs() < 1e-9, "k = {k}");
        }
    }
}
