//! Runs the examples on reduced inputs so that they stay in working order.

#[path = "../examples/custom_prior.rs"]
mod custom_prior;
#[path = "../examples/gradient_flow.rs"]
mod gradient_flow;
#[path = "../examples/mirror_descent_gap.rs"]
mod mirror_descent_gap;
#[path = "../examples/model_io.rs"]
mod model_io;
#[path = "../examples/multiplier_bisection.rs"]
mod multiplier_bisection;
#[path = "../examples/rate_diagnostics.rs"]
mod rate_diagnostics;
#[path = "../examples/sparse_solve.rs"]
mod sparse_solve;

use qnpg::{Family, RateVerdict, SynthSpec};

#[test]
fn multiplier_bisection_solves_every_map() {
    assert!(multiplier_bisection::run_example().unwrap() <= 1e-12);
}

#[test]
fn sparse_solve_agrees_with_dense() {
    let (rel, steps) =
        sparse_solve::run_example(&SynthSpec::new(200, 10, 20, 0.99, 2), 1e-3).unwrap();
    assert!(rel <= 1e-8, "relative difference {rel:e}");
    assert!(steps <= 50, "{steps} Krylov steps");
}

#[test]
fn gradient_flow_is_monotone() {
    let (drop, err) = gradient_flow::run_example(1, 1e-2, 1500).unwrap();
    assert!(drop <= 1e-9, "objective dropped by {drop:e}");
    assert!(err <= 1e-4, "final error {err:e}");
}

#[test]
fn rate_diagnostics_separates_quadratic_and_linear() {
    let [q, l, _, md] = rate_diagnostics::run_example(&SynthSpec::new(40, 6, 5, 0.9, 1)).unwrap();
    assert_eq!(q, RateVerdict::Quadratic);
    assert_eq!(l, RateVerdict::Linear);
    assert_eq!(md, RateVerdict::Linear);
}

#[test]
fn model_io_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert!(model_io::run_example(dir.path(), &SynthSpec::new(30, 5, 4, 0.9, 4)).unwrap());
    for name in ["model.mdp", "model.json", "trace.csv", "policy.csv"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn custom_prior_damped_steps_are_slower() {
    let counts = custom_prior::run_example(&SynthSpec::new(20, 4, 4, 0.9, 3)).unwrap();
    assert!(counts.windows(2).all(|w| w[0].1 < w[1].1), "{counts:?}");
}

#[test]
fn mirror_descent_needs_more_iterations() {
    let (qn, md) =
        mirror_descent_gap::run_example(Family::Kl, 1e-6, &SynthSpec::new(30, 5, 4, 0.9, 5))
            .unwrap();
    assert!(md > qn, "qn {qn}, md {md}");
}
