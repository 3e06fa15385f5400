//! One function per check suite, each turning core reports into rows.

use serde::{Deserialize, Serialize};
use spectral_ergo::bounds::mittag_leffler;
use spectral_ergo::dynamics::{
    apriori_energy_check, derivative_envelope_check, differentiability_check, galerkin_convergence, simulate_path_every,
};
use spectral_ergo::ergodics::{invariance_residual, mode_variances, moment_estimate};
use spectral_ergo::exec::replicate;
use spectral_ergo::kolmogorov::{
    energy_identity_check, ibpf_residual, log_sobolev_check, poincare_check, spectral_gap_decay, test_battery,
};
use spectral_ergo::noise::{stationary_variance, StreamTag};
use spectral_ergo::nonlinearity::random_state;
use spectral_ergo::oracle;
use spectral_ergo::semigroup_mc::{bismut_elworthy_grad, gradient_comparison, irreducibility_probe, strong_feller_multi};
use spectral_ergo::spectral::{kernel_bound_sq_with, kernel_sup_sq, KAPPA};
use spectral_ergo::{
    CylindricalFunction, EmpiricalMeasure, FourierState, InequalityReport, NonlinearitySpec, Observable, SeedSpec,
    TrajectoryConfig, Verdict,
};

use crate::config::{ExperimentConfig, Suite};
use crate::error::{HarnessError, HarnessResult};

/// `1/(4√e)`, the constant printed for the kernel bound.
pub const STATED_KERNEL_CONSTANT: f64 = 0.151_632_664_928_158_34;

/// `e · erfc(-1)`, frozen from a 30-digit evaluation.
pub const ML_HALF_AT_ONE: f64 = 5.008_980_080_762_283;

/// One verdict line of a suite ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub suite: Suite,
    pub check: String,
    /// Short name of the property under test.
    pub property: String,
    pub param: String,
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    pub verdict: Verdict,
}

impl CheckRow {
    fn new(suite: Suite, check: impl Into<String>, property: &str, param: impl Into<String>) -> Self {
        Self {
            suite,
            check: check.into(),
            property: property.into(),
            param: param.into(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            stderr: 0.0,
            verdict: Verdict::Inconclusive,
        }
    }

    fn values(mut self, lhs: f64, rhs: f64, stderr: f64, verdict: Verdict) -> Self {
        self.lhs = lhs;
        self.rhs = rhs;
        self.stderr = stderr;
        self.verdict = verdict;
        self
    }

    fn report(self, r: &InequalityReport) -> Self {
        self.values(r.lhs, r.rhs, r.combined_stderr, r.verdict)
    }
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Holds
    } else {
        Verdict::Violated
    }
}

/// Shared inputs of a run.
pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub spec: NonlinearitySpec,
    pub traj: TrajectoryConfig,
    pub nu: Option<EmpiricalMeasure>,
}

impl Context<'_> {
    /// Initial state on modes `|k| <= 4`.
    pub fn initial_state(&self) -> FourierState {
        low_modes(random_state(self.traj.n, &self.ic_seed(), 0, 1.0), 4)
    }

    /// Unit directions on modes `|k| <= 4`.
    pub fn directions(&self, count: usize) -> Vec<FourierState> {
        (0..count as u64)
            .map(|i| {
                let h = low_modes(random_state(self.traj.n, &self.ic_seed(), 1 + i, 1.0), 4);
                h.scaled(1.0 / h.norm())
            })
            .collect()
    }

    fn ic_seed(&self) -> SeedSpec {
        SeedSpec::new(self.cfg.monte_carlo.seed, 0, StreamTag::InitialCondition)
    }

    fn battery(&self) -> Vec<CylindricalFunction> {
        let c = &self.cfg.checks;
        let seed = self.cfg.seed_for(Suite::Ibpf).with_tag(StreamTag::InitialCondition);
        test_battery(c.battery, self.traj.n, c.battery_modes, &seed)
    }

    fn nu(&self) -> HarnessResult<&EmpiricalMeasure> {
        self.nu
            .as_ref()
            .ok_or_else(|| HarnessError::Config("this suite needs an invariant measure".into()))
    }
}

fn low_modes(mut x: FourierState, m: i64) -> FourierState {
    for k in -(x.cutoff() as i64)..=x.cutoff() as i64 {
        if k.abs() > m {
            x.set(k, 0.0);
        }
    }
    x
}

/// `sin(<x, εe₀>)/ε`, whose Poincaré ratio under the linear invariant law is
/// `1 + O(ε⁴)`.
pub fn quasi_linear_mode_zero(n: usize, eps: f64) -> CylindricalFunction {
    CylindricalFunction::sin(FourierState::basis(n, 0).scaled(eps))
        .expect("nonzero direction")
        .scaled(1.0 / eps)
}

/// `log`-spaced grid of `count` points on `[a, b]`.
pub fn log_grid(a: f64, b: f64, count: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..count)
        .map(|i| (la + (lb - la) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Kernel bound with the printed constant and with the sharp one.
pub fn kernel_rows(times: &[f64]) -> Vec<CheckRow> {
    [("stated_constant", STATED_KERNEL_CONSTANT), ("sharp_constant", KAPPA * KAPPA)]
        .iter()
        .map(|&(name, c)| {
            let ratios: Vec<f64> = times.iter().map(|&t| kernel_sup_sq(t) / kernel_bound_sq_with(c, t)).collect();
            let bad = ratios.iter().filter(|&&r| r > 1.0).count();
            let worst = ratios.iter().copied().fold(0.0, f64::max);
            CheckRow::new(Suite::KernelBound, name, "kernel-bound", format!("c={c:.17e};violations={bad}/{}", times.len()))
                .values(worst, 1.0, 0.0, verdict(bad == 0))
        })
        .collect()
}

fn mittag_leffler_rows() -> HarnessResult<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let half = mittag_leffler(0.5, 1.0)?;
    rows.push(
        CheckRow::new(Suite::MittagLeffler, "half_at_one", "mittag-leffler", "beta=0.5;z=1;tol=1e-10")
            .values(half, ML_HALF_AT_ONE, 0.0, verdict((half - ML_HALF_AT_ONE).abs() <= 1e-10)),
    );
    for z in [0.0, 0.5, 1.0, 2.0] {
        let v = mittag_leffler(1.0, z)?;
        rows.push(
            CheckRow::new(Suite::MittagLeffler, format!("exp_at_{z}"), "mittag-leffler", format!("beta=1;z={z};tol=1e-12"))
                .values(v, f64::exp(z), 0.0, verdict((v - f64::exp(z)).abs() <= 1e-12)),
        );
    }
    Ok(rows)
}

/// Runs one suite.
pub fn run(suite: Suite, ctx: &Context) -> HarnessResult<Vec<CheckRow>> {
    let wrap = |e: spectral_ergo::Error| HarnessError::Suite {
        suite: suite.name(),
        source: e,
    };
    run_inner(suite, ctx).map_err(|e| match e {
        HarnessError::Core(c) => wrap(c),
        other => other,
    })
}

fn run_inner(suite: Suite, ctx: &Context) -> HarnessResult<Vec<CheckRow>> {
    let c = &ctx.cfg.checks;
    let mc = &ctx.cfg.monte_carlo;
    let (spec, traj) = (&ctx.spec, &ctx.traj);
    let seed = ctx.cfg.seed_for(suite);
    let x0 = ctx.initial_state();
    let mut rows = Vec::new();
    match suite {
        Suite::KernelBound => rows = kernel_rows(&log_grid(1e-3, 10.0, 50)),
        Suite::MittagLeffler => rows = mittag_leffler_rows()?,
        Suite::Ed3 => {
            let h = &ctx.directions(1)[0];
            let fd = differentiability_check(&x0, h, &[1e-2, 1e-3], traj, spec, mc.replicas, &seed)?;
            let ratio = fd[0].residual / fd[1].residual;
            rows.push(
                CheckRow::new(suite, "second_order_residual", "differentiability", "eps=1e-2,1e-3;range=[5,20]")
                    .values(ratio, 10.0, 0.0, verdict((5.0..=20.0).contains(&ratio))),
            );
        }
        Suite::Ed4 => {
            let r = derivative_envelope_check(&x0, &ctx.directions(c.directions), traj, spec, mc.replicas, &seed, 0.05)?;
            rows.push(
                CheckRow::new(suite, "envelope", "derivative-flow-bound", format!("violations={}/{}", r.violations, r.checked))
                    .values(r.max_ratio, 1.0 + r.slack, 0.0, verdict(r.violations == 0)),
            );
        }
        Suite::Galerkin => {
            let t = galerkin_convergence(&x0, &c.galerkin_levels, traj, spec, mc.replicas, &seed)?;
            for r in &t.rows {
                rows.push(
                    CheckRow::new(suite, format!("n={}", r.n), "galerkin-error", format!("n_ref={};t={}", t.n_ref, r.t_at_sup))
                        .values(r.sup_mean_sq_err, f64::NAN, r.stderr, Verdict::Inconclusive),
                );
            }
            rows.push(
                CheckRow::new(suite, "strictly_decreasing", "galerkin-convergence", "margin=2stderr")
                    .values(f64::NAN, f64::NAN, 0.0, verdict(t.strictly_decreasing(2.0))),
            );
        }
        Suite::Energy => {
            let eps = c.energy_epsilon;
            let reports = replicate(mc.replicas, |r| {
                let rec = simulate_path_every(&x0, traj, spec, &seed.with_replica(r), 1)?;
                apriori_energy_check(&rec, spec, eps)
            })?;
            for (i, row) in reports[0].rows.iter().enumerate() {
                let worst = reports.iter().map(|r| r.rows[i].max_ratio).fold(0.0, f64::max);
                let bad: usize = reports.iter().map(|r| r.rows[i].violations).sum();
                let name = format!("{:?}", row.form).to_lowercase();
                rows.push(
                    CheckRow::new(suite, name, "energy-estimate", format!("epsilon={eps};violations={bad}"))
                        .values(worst, 1.0 + reports[0].slack, 0.0, verdict(bad == 0)),
                );
            }
        }
        Suite::BismutElworthy => {
            let h = &ctx.directions(1)[0];
            let phi = Observable::cylindrical(ctx.battery()[0].clone());
            for &t in &c.times {
                let g = gradient_comparison(&phi, &x0, h, t, c.fd_eps, traj, spec, mc.replicas, &seed)?;
                rows.push(
                    CheckRow::new(suite, format!("vs_finite_difference_t={t}"), "bismut-elworthy", format!("fd_eps={}", c.fd_eps))
                        .values(g.bismut_elworthy.mean, g.finite_difference.mean, g.difference.stderr, verdict(g.agrees(3.0, 1e-3))),
                );
                if spec.is_zero() {
                    let e0 = FourierState::basis(traj.n, 0);
                    let b = bismut_elworthy_grad(&Observable::mode(0), &e0, &e0, t, traj, spec, mc.replicas, &seed)?;
                    rows.push(
                        CheckRow::new(suite, format!("mode_zero_t={t}"), "bismut-elworthy", "closed form e^-t")
                            .values(b.mean, (-t).exp(), b.stderr, verdict(b.agrees_with((-t).exp(), 3.0, 0.0))),
                    );
                }
            }
        }
        Suite::Feller => {
            let battery = ctx.battery();
            let pair_seed = seed.with_tag(StreamTag::InitialCondition);
            for i in 0..c.feller_pairs as u64 {
                let x = low_modes(random_state(traj.n, &pair_seed, 2 * i, 1.0), 4);
                let d = random_state(traj.n, &pair_seed, 2 * i + 1, 1.0);
                let mut y = x.clone();
                y.axpy(c.feller_distance / d.norm(), &d);
                let phi = Observable::cylindrical(battery[i as usize % battery.len()].clone());
                for r in strong_feller_multi(&phi, &x, &y, &c.times, traj, spec, mc.replicas, &seed.with_replica(i))? {
                    rows.push(
                        CheckRow::new(
                            suite,
                            format!("pair={i};t={}", r.t),
                            "strong-feller",
                            format!("printed_exponent_rhs={:.16e}", r.rhs_printed_exponent),
                        )
                        .values(r.lhs, r.rhs, r.stderr, verdict(r.holds)),
                    );
                }
            }
        }
        Suite::Irreducible => {
            let z = FourierState::zeros(traj.n);
            let p = irreducibility_probe(&x0, &z, c.probe_radius, traj.t_final, traj, spec, mc.replicas, &seed)?;
            rows.push(
                CheckRow::new(
                    suite,
                    "ball_at_origin",
                    "irreducibility",
                    format!("eps={};hits={}/{};wilson=[{:.6},{:.6}]", c.probe_radius, p.hits, p.trials, p.wilson.0, p.wilson.1),
                )
                .values(p.fraction, 0.0, 0.0, p.verdict),
            );
        }
        Suite::Moments => {
            let nu = ctx.nu()?;
            let v: Vec<f64> = (-(nu.cutoff() as i64)..=nu.cutoff() as i64).map(stationary_variance).collect();
            let s: f64 = v.iter().sum();
            let wick = [s, s * s + 2.0 * v.iter().map(|x| x * x).sum::<f64>()];
            for order in [2u32, 4, 6, 8] {
                let m = moment_estimate(nu, order)?;
                let row = CheckRow::new(suite, format!("order={order}"), "moment", "split-half");
                rows.push(if spec.is_zero() && order <= 4 {
                    let want = wick[order as usize / 2 - 1];
                    row.values(m.value, want, m.stderr, verdict(m.stable && (m.value - want).abs() <= 3.0 * m.stderr))
                } else {
                    row.values(m.value, f64::NAN, m.stderr, verdict(m.stable && m.value.is_finite()))
                });
            }
            if spec.is_zero() {
                for r in mode_variances(nu, 8) {
                    let want = stationary_variance(r.k);
                    rows.push(
                        CheckRow::new(suite, format!("mode_variance_k={}", r.k), "invariant-law", "")
                            .values(r.variance, want, r.stderr, verdict((r.variance - want).abs() <= 3.0 * r.stderr)),
                    );
                }
            }
        }
        Suite::Invariance => {
            let nu = ctx.nu()?;
            for (i, phi) in ctx.battery().into_iter().take(3).enumerate() {
                let r = invariance_residual(nu, &Observable::cylindrical(phi), c.times[0], traj, spec, mc.replicas, &seed.with_replica(i as u64))?;
                rows.push(
                    CheckRow::new(suite, format!("phi={i}"), "invariance", format!("t={};samples={}", c.times[0], r.samples))
                        .values(r.residual, 0.0, r.stderr, verdict(r.within)),
                );
            }
        }
        Suite::Ibpf => {
            let nu = ctx.nu()?;
            for (i, phi) in ctx.battery().iter().enumerate() {
                let r = ibpf_residual(nu, phi, spec)?;
                rows.push(CheckRow::new(suite, format!("phi={i}"), "integration-by-parts", "").report(&r));
                if spec.is_zero() {
                    let want = oracle::ou_phi_k0_phi(phi);
                    rows.push(
                        CheckRow::new(suite, format!("phi={i};quadrature"), "integration-by-parts", "gauss-hermite")
                            .values(r.lhs, want, r.lhs_stderr, verdict((r.lhs - want).abs() <= 3.0 * r.lhs_stderr)),
                    );
                }
            }
        }
        Suite::Poincare => {
            let nu = ctx.nu()?;
            for (i, phi) in ctx.battery().iter().enumerate() {
                let r = poincare_check(nu, phi, spec)?;
                rows.push(CheckRow::new(suite, format!("phi={i}"), "poincare", "").report(&r));
            }
            if spec.is_zero() {
                let q = quasi_linear_mode_zero(traj.n, 0.05);
                let exact = 0.5 * oracle::ou_dirichlet_energy(&q) / oracle::ou_variance(&q);
                rows.push(
                    CheckRow::new(suite, "saturation_quadrature", "poincare", "rhs/lhs in [1,1.05]")
                        .values(exact, 1.0, 0.0, verdict((1.0..=1.05).contains(&exact))),
                );
                let r = poincare_check(nu, &q, spec)?;
                rows.push(CheckRow::new(suite, "saturation_monte_carlo", "poincare", "").report(&r));
            }
        }
        Suite::Logsob => {
            let nu = ctx.nu()?;
            for (i, phi) in ctx.battery().into_iter().enumerate() {
                let phi = phi.shifted(2.0);
                let r = log_sobolev_check(nu, &phi, spec)?;
                rows.push(
                    CheckRow::new(suite, format!("phi={i}"), "log-sobolev", format!("shift=2;floored={}", r.floored))
                        .report(&r.report),
                );
            }
        }
        Suite::Gap => {
            let nu = ctx.nu()?;
            let mut phis = vec![quasi_linear_mode_zero(traj.n, 0.05)];
            phis.extend(ctx.battery().into_iter().take(2));
            for (i, phi) in phis.iter().enumerate() {
                let g = spectral_gap_decay(nu, phi, spec, &c.gap_times, traj, mc.outer, mc.inner, &seed.with_replica(i as u64))?;
                let ok = g.verdict == Verdict::Holds && g.fitted_rate >= 0.95 * g.envelope_rate;
                rows.push(
                    CheckRow::new(
                        suite,
                        format!("phi={i}"),
                        "spectral-gap",
                        format!("envelope_holds={}/{}", g.envelope_holds.iter().filter(|&&b| b).count(), g.times.len()),
                    )
                    .values(g.fitted_rate, g.envelope_rate, 0.0, verdict(ok)),
                );
            }
        }
        Suite::Pf2 => {
            let nu = ctx.nu()?;
            let n = traj.n;
            let mut phis = vec![CylindricalFunction::sin(FourierState::from_modes(n, &[(0, 0.6), (1, 0.5), (-1, -0.4)]))?];
            if spec.is_zero() {
                phis.push(quasi_linear_mode_zero(n, 0.05));
            }
            for (i, phi) in phis.iter().enumerate() {
                let r = energy_identity_check(nu, phi, spec, c.pf2_time, traj, c.m_grad, mc.outer, mc.inner, &seed.with_replica(i as u64))?;
                rows.push(
                    CheckRow::new(
                        suite,
                        format!("phi={i}"),
                        "energy-identity",
                        format!("t={};m_grad={};tail={:.16e};two_sided={}", c.pf2_time, c.m_grad, r.mode_tail, r.two_sided),
                    )
                    .report(&r.report),
                );
            }
        }
    }
    Ok(rows)
}
