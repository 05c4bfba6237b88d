//! A non-uniform prior and damped steps.
//!
//! The regularizer pulls the policy towards the prior `mu`; with a larger
//! `tau` the optimum stays closer to it. A learning rate `eta < 1` damps the
//! step and the iteration converges linearly instead of quadratically.
//!
//! ```text
//! cargo run --release --example custom_prior
//! ```

use qnpg::{
    first_order_residual, generate_synthetic, solve, Family, Policy, RegularizerSpec, SolverConfig,
    SynthSpec, Table,
};

/// Returns the iteration counts for each learning rate.
pub fn run_example(spec: &SynthSpec) -> qnpg::Result<Vec<(f64, usize)>> {
    let model = generate_synthetic(spec)?;
    let (ns, na) = (model.num_states, model.num_actions);
    // Prior favouring low action indices: mu[a] proportional to 1 / (a + 1).
    let norm: f64 = (1..=na).map(|a| 1.0 / a as f64).sum();
    let row: Vec<f64> = (1..=na).map(|a| 1.0 / (a as f64 * norm)).collect();
    let prior = Table::from_rows(&vec![row; ns])?;
    let reg = RegularizerSpec::with_prior(Family::Alpha(0.5), prior.clone())?;

    let mut counts = Vec::new();
    for eta in [1.0, 0.5, 0.1] {
        let config = SolverConfig {
            tau: 0.1,
            eta,
            max_iters: 1000,
            ..SolverConfig::default()
        };
        let (policy, trace) = solve(&model, &reg, &config, &Policy::uniform(ns, na))?;
        let residual = first_order_residual(&model, &policy, &reg, &config)?;
        let dist = policy.table().frobenius_distance(&prior);
        println!(
            "eta {eta:>4}: {:>4} iterations, residual {residual:.1e}, |pi - mu| {dist:.4}",
            trace.iterations()
        );
        counts.push((eta, trace.iterations()));
    }
    Ok(counts)
}

#[allow(dead_code)]
fn main() -> qnpg::Result<()> {
    run_example(&SynthSpec::new(50, 8, 5, 0.95, 3))?;
    Ok(())
}
