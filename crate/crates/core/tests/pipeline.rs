use proptest::prelude::*;
use spectral_ergo::dynamics::simulate_path;
use spectral_ergo::ergodics::{krylov_bogoliubov, mode_variances};
use spectral_ergo::kolmogorov::{ibpf_residual, poincare_check, test_battery};
use spectral_ergo::noise::{stationary_variance, StreamTag};
use spectral_ergo::semigroup_mc::estimate_pt;
use spectral_ergo::{EmpiricalMeasure, FourierState, NonlinearitySpec, Observable, SeedSpec, TrajectoryConfig, Verdict};

fn sampled_measure(spec: &NonlinearitySpec) -> EmpiricalMeasure {
    let cfg = TrajectoryConfig::new(8, 0.01, 200.0).unwrap();
    krylov_bogoliubov(&FourierState::zeros(8), &cfg, spec, 200.0, 10.0, 0.5, 4, &SeedSpec::path(3, 0)).unwrap()
}

#[test]
fn time_average_feeds_the_dirichlet_form_checks() {
    let spec = NonlinearitySpec::eps_sin(0.5);
    let nu = sampled_measure(&spec);
    assert_eq!(nu.len(), 4 * 380);
    for phi in test_battery(4, 8, 3, &SeedSpec::new(5, 0, StreamTag::InitialCondition)) {
        assert_eq!(ibpf_residual(&nu, &phi, &spec).unwrap().verdict, Verdict::Holds);
        assert_eq!(poincare_check(&nu, &phi, &spec).unwrap().verdict, Verdict::Holds);
    }
}

#[test]
fn saved_measure_is_identical_after_reload() {
    let nu = sampled_measure(&NonlinearitySpec::zero());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nu.bin");
    nu.save(&path).unwrap();
    let back = EmpiricalMeasure::load(&path).unwrap();
    assert_eq!(back.samples(), nu.samples());
    assert_eq!(back.meta, nu.meta);
    let v = mode_variances(&back, 2);
    for r in v {
        let want = stationary_variance(r.k);
        assert!((r.variance - want).abs() < 4.0 * r.stderr, "k = {}: {} vs {want}", r.k, r.variance);
    }
}

#[test]
fn mean_of_a_mode_relaxes_at_its_eigenvalue() {
    let zero = NonlinearitySpec::zero();
    let cfg = TrajectoryConfig::new(8, 0.05, 1.0).unwrap();
    let x = FourierState::basis(8, 2).scaled(3.0);
    let e = estimate_pt(&Observable::mode(2), &x, 1.0, &cfg, &zero, 4000, &SeedSpec::path(9, 0)).unwrap();
    let want = 3.0 * (-5.0f64).exp();
    assert!(e.agrees_with(want, 4.0, 0.0), "{} ± {} vs {want}", e.mean, e.stderr);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn paths_depend_only_on_the_seed(master in 0u64..1_000, eps in 0.0f64..1.5) {
        let spec = NonlinearitySpec::eps_sin(eps);
        let cfg = TrajectoryConfig::new(8, 0.01, 0.2).unwrap();
        let x0 = FourierState::basis(8, 1);
        let a = simulate_path(&x0, &cfg, &spec, &SeedSpec::path(master, 0)).unwrap();
        let b = simulate_path(&x0, &cfg, &spec, &SeedSpec::path(master, 0)).unwrap();
        prop_assert_eq!(a.states.last().unwrap().x.coeffs(), b.states.last().unwrap().x.coeffs());
        let c = simulate_path(&x0, &cfg, &spec, &SeedSpec::path(master, 1)).unwrap();
        prop_assert_ne!(a.states.last().unwrap().x.coeffs(), c.states.last().unwrap().x.coeffs());
    }
}
