//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! below. Criteria listed in `UNATTAINABLE` are reported as they come out
//! and must keep failing; every other criterion must pass.

use std::time::Instant;

use spectral_ergo::bounds::mittag_leffler;
use spectral_ergo::dynamics::{
    apriori_energy_check, derivative_envelope_check, differentiability_check, galerkin_convergence,
    simulate_path_every, EnergyForm,
};
use spectral_ergo::ergodics::{default_burn_in, krylov_bogoliubov, mode_variances, moment_estimate};
use spectral_ergo::exec::replicate;
use spectral_ergo::kolmogorov::{
    energy_identity_check, ibpf_residual, log_sobolev_check, poincare_check, spectral_gap_decay, test_battery,
};
use spectral_ergo::noise::{stationary_variance, StreamTag};
use spectral_ergo::nonlinearity::random_state;
use spectral_ergo::oracle;
use spectral_ergo::semigroup_mc::{bismut_elworthy_grad, gradient_comparison, strong_feller_multi};
use spectral_ergo::{
    CylindricalFunction, EmpiricalMeasure, FourierState, NonlinearitySpec, Observable, SeedSpec, TrajectoryConfig,
    Verdict,
};
use spectral_ergo_cli::config::ExperimentConfig;
use spectral_ergo_cli::suites::{kernel_rows, log_grid, quasi_linear_mode_zero};
use spectral_ergo_cli::{replay, run_suite};

/// The stated kernel constant is too small for t below about 0.6.
const UNATTAINABLE: &[usize] = &[1];

const K_SIGMA: f64 = 3.0;
const ED4_SLACK: f64 = 0.05;
const ED3_RATIO: (f64, f64) = (5.0, 20.0);
const GALERKIN_MARGIN: f64 = 2.0;
const ESS_MIN: f64 = 1e4;
const BE_FLOOR: f64 = 1e-3;
const ENERGY_SLACK: f64 = 0.05;
const SATURATION: (f64, f64) = (1.0, 1.05);
const OU_GAP_RATE: f64 = 2.0;
const OU_GAP_TOL: f64 = 0.05;
const SIN_GAP_RATE_MIN: f64 = 2.0 * (1.0 - 0.25) * 0.95;
const TAIL_FRACTION: f64 = 0.01;
const ML_HALF_TOL: f64 = 1e-10;
const ML_EXP_TOL: f64 = 1e-12;
const ML_HALF_AT_ONE: f64 = 5.008_980_080_762_283;

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn seed(criterion: u64) -> SeedSpec {
    SeedSpec::path(0xacce_0000 + criterion, 0)
}

fn low_modes(mut x: FourierState, m: i64) -> FourierState {
    let n = x.cutoff() as i64;
    for k in -n..=n {
        if k.abs() > m {
            x.set(k, 0.0);
        }
    }
    x
}

fn start(n: usize, criterion: u64) -> FourierState {
    low_modes(random_state(n, &seed(criterion).with_tag(StreamTag::InitialCondition), 0, 1.0), 4)
}

fn directions(n: usize, count: usize, criterion: u64) -> Vec<FourierState> {
    let s = seed(criterion).with_tag(StreamTag::InitialCondition);
    (1..=count as u64)
        .map(|i| {
            let h = low_modes(random_state(n, &s, i, 1.0), 4);
            h.scaled(1.0 / h.norm())
        })
        .collect()
}

fn battery(count: usize, n: usize, criterion: u64) -> Vec<CylindricalFunction> {
    test_battery(count, n, 4, &seed(criterion).with_tag(StreamTag::InitialCondition))
}

fn measure(spec: &NonlinearitySpec, n: usize, dt: f64, t_final: f64, tag: u64) -> EmpiricalMeasure {
    let (burn_in, _) = default_burn_in(spec);
    let cfg = TrajectoryConfig::new(n, dt, t_final).unwrap();
    krylov_bogoliubov(&FourierState::zeros(n), &cfg, spec, t_final, burn_in.ceil(), 0.5, 8, &seed(100 + tag)).unwrap()
}

struct Measures {
    ou64: EmpiricalMeasure,
    ou16: EmpiricalMeasure,
    ou8: EmpiricalMeasure,
    sin_half16: EmpiricalMeasure,
    sin_one16: EmpiricalMeasure,
    sin_half8: EmpiricalMeasure,
}

impl Measures {
    fn build() -> Self {
        let zero = NonlinearitySpec::zero();
        Self {
            ou64: measure(&zero, 64, 0.05, 3000.0, 0),
            ou16: measure(&zero, 16, 0.05, 1000.0, 1),
            ou8: measure(&zero, 8, 0.05, 1000.0, 2),
            sin_half16: measure(&NonlinearitySpec::eps_sin(0.5), 16, 2e-3, 400.0, 3),
            sin_one16: measure(&NonlinearitySpec::eps_sin(1.0), 16, 5e-3, 400.0, 4),
            sin_half8: measure(&NonlinearitySpec::eps_sin(0.5), 8, 1e-2, 400.0, 5),
        }
    }
}

fn kernel_bound() -> Outcome {
    let clock = Instant::now();
    let rows = kernel_rows(&log_grid(1e-3, 10.0, 50));
    let elapsed = clock.elapsed().as_secs_f64();
    let stated = &rows[0];
    outcome(
        stated.verdict == Verdict::Holds && elapsed < 1.0,
        format!("{}; worst ratio {:.4}; {elapsed:.3}s", stated.param, stated.lhs),
    )
}

fn derivative_flow_bound() -> Outcome {
    let spec = NonlinearitySpec::eps_sin(1.0);
    let cfg = TrajectoryConfig::new(64, 1e-3, 2.0).unwrap();
    let r = derivative_envelope_check(&start(64, 2), &directions(64, 5, 2), &cfg, &spec, 100, &seed(2), ED4_SLACK).unwrap();
    outcome(
        r.violations == 0,
        format!("violations {}/{}, max |η|/envelope {:.4}, rate {}", r.violations, r.checked, r.max_ratio, r.rate),
    )
}

fn differentiability() -> Outcome {
    let spec = NonlinearitySpec::eps_sin(1.0);
    let cfg = TrajectoryConfig::new(64, 1e-3, 1.0).unwrap();
    let h = &directions(64, 1, 3)[0];
    let rows = differentiability_check(&start(64, 3), h, &[1e-2, 1e-3], &cfg, &spec, 20, &seed(3)).unwrap();
    let ratio = rows[0].residual / rows[1].residual;
    outcome(
        (ED3_RATIO.0..=ED3_RATIO.1).contains(&ratio),
        format!("residuals {:.3e} -> {:.3e}, factor {ratio:.3}", rows[0].residual, rows[1].residual),
    )
}

fn galerkin() -> Outcome {
    let spec = NonlinearitySpec::eps_sin(0.5);
    let cfg = TrajectoryConfig::new(64, 1e-3, 1.0).unwrap();
    let t = galerkin_convergence(&start(64, 4), &[8, 16, 32], &cfg, &spec, 1000, &seed(4)).unwrap();
    let errs: Vec<String> = t.rows.iter().map(|r| format!("n={} {:.3e}±{:.1e}", r.n, r.sup_mean_sq_err, r.stderr)).collect();
    outcome(t.strictly_decreasing(GALERKIN_MARGIN), format!("{} (ref {})", errs.join(", "), t.n_ref))
}

fn ou_ground_truth(m: &Measures) -> Outcome {
    let nu = &m.ou64;
    let ess = nu.effective_sample_size(|x| x.get(0));
    let variances = mode_variances(nu, 8);
    let worst = variances
        .iter()
        .map(|r| (r.variance - stationary_variance(r.k)).abs() / r.stderr)
        .fold(0.0, f64::max);
    let v: Vec<f64> = (-64..=64).map(stationary_variance).collect();
    let s: f64 = v.iter().sum();
    let wick = [s, s * s + 2.0 * v.iter().map(|x| x * x).sum::<f64>()];
    let mut moments_ok = true;
    let mut z = Vec::new();
    for (i, order) in [2u32, 4].into_iter().enumerate() {
        let r = moment_estimate(nu, order).unwrap();
        let dev = (r.value - wick[i]).abs() / r.stderr;
        moments_ok &= dev <= K_SIGMA;
        z.push(format!("m{order} {:.4} vs {:.4} ({dev:.2}σ)", r.value, wick[i]));
    }
    outcome(
        ess >= ESS_MIN && worst <= K_SIGMA && moments_ok,
        format!("ESS {ess:.0}, worst mode variance {worst:.2}σ, {}", z.join(", ")),
    )
}

fn bismut_elworthy() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    let zero = NonlinearitySpec::zero();
    let cfg = TrajectoryConfig::new(16, 1e-2, 1.0).unwrap();
    let e0 = FourierState::basis(16, 0);
    for t in [0.5, 1.0] {
        let g = bismut_elworthy_grad(&Observable::mode(0), &e0, &e0, t, &cfg, &zero, 10_000, &seed(6)).unwrap();
        let ok = g.agrees_with((-t).exp(), K_SIGMA, 0.0);
        pass &= ok;
        notes.push(format!("OU t={t}: {:.4}±{:.4} vs {:.4}", g.mean, g.stderr, (-t).exp()));
    }
    let spec = NonlinearitySpec::eps_sin(0.5);
    let cfg = TrajectoryConfig::new(16, 5e-3, 1.0).unwrap();
    let phi = Observable::cylindrical(battery(1, 16, 6)[0].clone());
    let x = start(16, 6);
    let h = &directions(16, 1, 6)[0];
    for t in [0.5, 1.0] {
        let g = gradient_comparison(&phi, &x, h, t, 1e-3, &cfg, &spec, 10_000, &seed(6).with_replica(1)).unwrap();
        pass &= g.agrees(K_SIGMA, BE_FLOOR);
        notes.push(format!(
            "sin t={t}: {:.4} vs fd {:.4} (diff {:.1e}±{:.1e})",
            g.bismut_elworthy.mean, g.finite_difference.mean, g.difference.mean, g.difference.stderr
        ));
    }
    outcome(pass, notes.join("; "))
}

fn strong_feller() -> Outcome {
    let spec = NonlinearitySpec::eps_sin(1.0);
    let cfg = TrajectoryConfig::new(16, 5e-3, 1.0).unwrap();
    let phis = battery(20, 16, 7);
    let s = seed(7).with_tag(StreamTag::InitialCondition);
    let mut checked = 0;
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let x = low_modes(random_state(16, &s, 100 + 2 * i, 1.0), 4);
        let d = random_state(16, &s, 101 + 2 * i, 1.0);
        let mut y = x.clone();
        y.axpy(0.1 / d.norm(), &d);
        let phi = Observable::cylindrical(phis[i as usize].clone());
        for r in strong_feller_multi(&phi, &x, &y, &[0.5, 1.0], &cfg, &spec, 500, &seed(7).with_replica(i)).unwrap() {
            checked += 1;
            bad += usize::from(!r.holds);
            worst = worst.max(r.lhs / r.rhs);
        }
    }
    outcome(bad == 0, format!("violations {bad}/{checked}, max lhs/rhs {worst:.4}"))
}

fn energy_estimates() -> Outcome {
    let cases = [
        (NonlinearitySpec::rational(1.0), EnergyForm::BoundedF),
        (NonlinearitySpec::linear(0.5).unwrap(), EnergyForm::SmallLipschitz),
        (NonlinearitySpec::eps_sin(1.0), EnergyForm::Pointwise),
    ];
    let cfg = TrajectoryConfig::new(64, 1e-3, 1.0).unwrap();
    let x0 = start(64, 8);
    let mut pass = true;
    let mut notes = Vec::new();
    for (i, (spec, form)) in cases.iter().enumerate() {
        let s = seed(8).with_replica(i as u64);
        let rows = replicate(100, |r| {
            let rec = simulate_path_every(&x0, &cfg, spec, &s.with_replica(1000 * i as u64 + r), 1)?;
            let rep = apriori_energy_check(&rec, spec, 0.5)?;
            Ok(rep.rows.into_iter().find(|row| row.form == *form).expect("form applies to its spec"))
        })
        .unwrap();
        let bad: usize = rows.iter().map(|r| r.violations).sum();
        let worst = rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
        pass &= bad == 0 && worst <= 1.0 + ENERGY_SLACK;
        notes.push(format!("{form:?}: violations {bad}, max ratio {worst:.4}"));
    }
    outcome(pass, notes.join("; "))
}

fn ibpf(m: &Measures) -> Outcome {
    let mut bad = 0;
    let mut quad_bad = 0;
    let mut worst: f64 = 0.0;
    for (nu, spec) in [(&m.ou64, NonlinearitySpec::zero()), (&m.sin_half16, NonlinearitySpec::eps_sin(0.5))] {
        for phi in battery(10, nu.cutoff(), 9) {
            let r = ibpf_residual(nu, &phi, &spec).unwrap();
            let dev = (r.lhs - r.rhs).abs() / r.combined_stderr;
            worst = worst.max(dev);
            bad += usize::from(dev > K_SIGMA);
            if spec.is_zero() {
                let want = oracle::ou_phi_k0_phi(&phi);
                quad_bad += usize::from((r.lhs - want).abs() > K_SIGMA * r.lhs_stderr);
            }
        }
    }
    outcome(
        bad == 0 && quad_bad == 0,
        format!("outside 3σ: {bad}/20, worst {worst:.2}σ; quadrature mismatches {quad_bad}/10"),
    )
}

fn poincare(m: &Measures) -> Outcome {
    let spec = NonlinearitySpec::eps_sin(1.0);
    let mut bad = 0;
    for phi in battery(20, 16, 10) {
        bad += usize::from(poincare_check(&m.sin_one16, &phi, &spec).unwrap().verdict != Verdict::Holds);
    }
    let q = quasi_linear_mode_zero(64, 0.05);
    let ratio = 0.5 * oracle::ou_dirichlet_energy(&q) / oracle::ou_variance(&q);
    let r = poincare_check(&m.ou64, &q, &NonlinearitySpec::zero()).unwrap();
    let mc_agrees = (r.rhs - ratio * r.lhs).abs() <= K_SIGMA * r.combined_stderr;
    outcome(
        bad == 0 && (SATURATION.0..=SATURATION.1).contains(&ratio) && mc_agrees,
        format!(
            "violations {bad}/20; saturation rhs/lhs {ratio:.9} (quadrature), {:.4} (Monte Carlo)",
            r.rhs / r.lhs
        ),
    )
}

fn spectral_gap(m: &Measures) -> Outcome {
    let times = [0.25, 0.5, 0.75, 1.0];
    let zero = NonlinearitySpec::zero();
    let cfg = TrajectoryConfig::new(16, 0.25, 1.0).unwrap();
    let q = quasi_linear_mode_zero(16, 0.05);
    let g = spectral_gap_decay(&m.ou16, &q, &zero, &times, &cfg, 1000, 1000, &seed(11)).unwrap();
    let ou_ok = (g.fitted_rate - OU_GAP_RATE).abs() <= OU_GAP_TOL * OU_GAP_RATE;
    let mut notes = vec![format!("OU rate {:.4}", g.fitted_rate)];
    let spec = NonlinearitySpec::eps_sin(1.0);
    let cfg = TrajectoryConfig::new(16, 5e-3, 1.0).unwrap();
    let mut phis = vec![quasi_linear_mode_zero(16, 0.05)];
    phis.extend(battery(2, 16, 11));
    let mut sin_ok = true;
    for (i, phi) in phis.iter().enumerate() {
        let g = spectral_gap_decay(&m.sin_one16, phi, &spec, &times, &cfg, 200, 100, &seed(11).with_replica(1 + i as u64)).unwrap();
        sin_ok &= g.verdict == Verdict::Holds && g.fitted_rate >= SIN_GAP_RATE_MIN;
        notes.push(format!("sin φ{i} rate {:.4} envelope {:?}", g.fitted_rate, g.verdict));
    }
    outcome(ou_ok && sin_ok, notes.join(", "))
}

fn energy_identity(m: &Measures) -> Outcome {
    let phi = CylindricalFunction::sin(FourierState::from_modes(8, &[(0, 0.6), (1, 0.5), (-1, -0.4)])).unwrap();
    let cfg = TrajectoryConfig::new(8, 1e-2, 1.0).unwrap();
    let zero = NonlinearitySpec::zero();
    let r = energy_identity_check(&m.ou8, &phi, &zero, 1.0, &cfg, 8, 100, 64, &seed(12)).unwrap();
    let (flow, grad, _) = oracle::ou_energy_identity(&phi, 1.0);
    let ou_dev = (r.report.lhs - (flow + grad)).abs() / r.report.lhs_stderr;
    let spec = NonlinearitySpec::eps_sin(0.5);
    let s = energy_identity_check(&m.sin_half8, &phi, &spec, 1.0, &cfg, 8, 100, 64, &seed(12).with_replica(1)).unwrap();
    let tail = s.mode_tail.abs() / s.report.rhs;
    outcome(
        ou_dev <= K_SIGMA && s.two_sided && s.report.verdict == Verdict::Holds && tail < TAIL_FRACTION,
        format!(
            "OU lhs {:.4} vs closed form {:.4} ({ou_dev:.2}σ); sin lhs {:.4} rhs {:.4} {:?}, tail {:.2e} of rhs",
            r.report.lhs,
            flow + grad,
            s.report.lhs,
            s.report.rhs,
            s.report.verdict,
            tail
        ),
    )
}

fn log_sobolev(m: &Measures) -> Outcome {
    let spec = NonlinearitySpec::eps_sin(1.0);
    let mut bad = 0;
    for phi in battery(20, 16, 13) {
        let r = log_sobolev_check(&m.sin_one16, &phi.shifted(2.0), &spec).unwrap();
        bad += usize::from(r.report.verdict != Verdict::Holds);
    }
    let mut worst: f64 = 0.0;
    for phi in battery(5, 64, 13) {
        let phi = phi.shifted(2.0);
        let r = log_sobolev_check(&m.ou64, &phi, &NonlinearitySpec::zero()).unwrap();
        worst = worst.max((r.report.lhs - oracle::ou_entropy_sq(&phi)).abs() / r.report.lhs_stderr);
    }
    outcome(
        bad == 0 && worst <= K_SIGMA,
        format!("violations {bad}/20; worst entropy deviation from quadrature {worst:.2}σ"),
    )
}

fn mittag_leffler_values() -> Outcome {
    let half = mittag_leffler(0.5, 1.0).unwrap();
    let mut pass = (half - ML_HALF_AT_ONE).abs() <= ML_HALF_TOL;
    let mut worst: f64 = 0.0;
    for z in [0.0f64, 0.5, 1.0, 2.0] {
        let err = (mittag_leffler(1.0, z).unwrap() - z.exp()).abs();
        worst = worst.max(err);
        pass &= err <= ML_EXP_TOL;
    }
    outcome(pass, format!("E_1/2(1) error {:.1e}, worst E_1 error {worst:.1e}", (half - ML_HALF_AT_ONE).abs()))
}

fn determinism() -> Outcome {
    let cfg = ExperimentConfig::from_toml(
        r#"
config_version = 1
workers = 1
suites = ["ed4", "galerkin", "feller", "bismut_elworthy", "moments", "ibpf", "gap"]

[nonlinearity]
kind = "sin"
eps = 0.5

[discretization]
n = 8
dt = 0.01
t_final = 1.0

[monte_carlo]
replicas = 64
outer = 20
inner = 10

[measure]
chains = 4
t_final = 60.0

[checks]
feller_pairs = 3
"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = run_suite(&cfg, &dir.path().join("w1")).unwrap();
    let mut mismatches = Vec::new();
    for workers in [2, 4] {
        let r = replay(&first, &dir.path().join(format!("w{workers}")), Some(workers)).unwrap();
        mismatches.extend(r.mismatches.into_iter().map(|f| format!("{f}@{workers}")));
    }
    let csv = first.artifacts.iter().filter(|a| a.file.ends_with(".csv")).count();
    outcome(
        mismatches.is_empty() && csv > 0,
        format!("{csv} CSV ledgers over worker counts 1, 2, 4; mismatches {mismatches:?}"),
    )
}

fn main() {
    let measures = Measures::build();
    let criteria: Vec<Criterion> = vec![
        ("kernel bound, stated constant", Box::new(kernel_bound)),
        ("derivative-flow envelope", Box::new(derivative_flow_bound)),
        ("second-order differentiability", Box::new(differentiability)),
        ("Galerkin convergence", Box::new(galerkin)),
        ("linear invariant law", Box::new(|| ou_ground_truth(&measures))),
        ("Bismut-Elworthy gradient", Box::new(bismut_elworthy)),
        ("strong Feller modulus", Box::new(strong_feller)),
        ("energy estimates", Box::new(energy_estimates)),
        ("integration by parts", Box::new(|| ibpf(&measures))),
        ("Poincare inequality", Box::new(|| poincare(&measures))),
        ("spectral gap decay", Box::new(|| spectral_gap(&measures))),
        ("energy identity", Box::new(|| energy_identity(&measures))),
        ("log-Sobolev inequality", Box::new(|| log_sobolev(&measures))),
        ("Mittag-Leffler values", Box::new(mittag_leffler_values)),
        ("replay determinism", Box::new(determinism)),
    ];
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        let clock = Instant::now();
        let o = check();
        println!(
            "{} {id:>2} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            clock.elapsed().as_secs_f64()
        );
        passed += usize::from(o.pass);
        if o.pass == UNATTAINABLE.contains(&id) {
            unexpected.push(id);
        }
    }
    println!("{passed}/{} criteria pass; recorded as unattainable: {UNATTAINABLE:?}", criteria.len());
    if !unexpected.is_empty() {
        eprintln!("criteria with unexpected outcome: {unexpected:?}");
        std::process::exit(1);
    }
}
