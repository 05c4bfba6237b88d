//! Policy evaluation with Bi-CGSTAB against a dense LU factorization.
//!
//! Evaluates the uniform policy of the synthetic model with both linear
//! solvers and reports the Krylov step count, the refinement steps and the
//! relative difference of the two value functions.
//!
//! ```text
//! cargo run --release --example sparse_solve -- [states]
//! ```

use qnpg::{
    generate_synthetic, policy_transition, value_function, weight_vector, Family,
    LinearSolverConfig, Policy, RegularizerSpec, SynthSpec,
};

/// Returns the relative value difference and the largest Bi-CGSTAB step count.
pub fn run_example(spec: &SynthSpec, tau: f64) -> qnpg::Result<(f64, usize)> {
    let model = generate_synthetic(spec)?;
    let (ns, na) = (model.num_states, model.num_actions);
    let policy = Policy::uniform(ns, na);
    let reg = RegularizerSpec::uniform(Family::Kl, ns, na);
    let p_pi = policy_transition(&model, &policy)?;
    println!(
        "{ns} states, {na} actions, P_pi has {} nonzeros",
        p_pi.nnz()
    );

    let iterative = LinearSolverConfig {
        tol: 1e-12,
        ..LinearSolverConfig::bicgstab()
    };
    let (v_dense, dense) =
        value_function(&model, &policy, &reg, tau, &LinearSolverConfig::dense())?;
    let (v_iter, krylov) = value_function(&model, &policy, &reg, tau, &iterative)?;
    let diff = v_dense
        .iter()
        .zip(&v_iter)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = v_dense.iter().map(|x| x.abs()).fold(0.0, f64::max);
    println!(
        "value, dense:     residual {:.2e}, {} refinement steps",
        dense.residual, dense.refinement_steps
    );
    println!(
        "value, bicgstab:  residual {:.2e}, {} steps, {} refinement steps",
        krylov.residual, krylov.steps, krylov.refinement_steps
    );
    println!(
        "max |v_dense - v_bicgstab| / max |v| = {:.2e}",
        diff / scale
    );

    let ones = vec![1.0; ns];
    let (w, report) = weight_vector(&model, &policy, &ones, &iterative)?;
    let w_max = w.iter().copied().fold(0.0, f64::max);
    println!(
        "weights w:        {} steps, max w {w_max:.4}, sum w {:.4}",
        report.steps,
        w.iter().sum::<f64>()
    );
    Ok((diff / scale, krylov.steps.max(report.steps)))
}

#[allow(dead_code)]
fn main() -> qnpg::Result<()> {
    let states = std::env::args()
        .nth(1)
        .map_or(200, |s| s.parse().expect("state count"));
    let spec = SynthSpec::new(states, 50, 20.min(states), 0.99, 0);
    run_example(&spec, 1e-3)?;
    Ok(())
}
