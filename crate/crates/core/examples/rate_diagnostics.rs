//! Convergence-rate diagnostics on constructed and measured error sequences.
//!
//! Ratios `ln e_{k+1} / ln e_k` near 2 indicate quadratic convergence and
//! ratios near 1 linear convergence.
//!
//! ```text
//! cargo run --release --example rate_diagnostics
//! ```

use qnpg::{
    convergence_diagnostics, diagnose_errors, generate_synthetic, solve, solve_md_baseline,
    BaselineRate, Family, Policy, RateVerdict, RegularizerSpec, SolverConfig, SynthSpec,
};

/// Returns the verdicts for the quadratic sequence, the linear sequence, the
/// quasi-Newton run and the mirror descent run.
pub fn run_example(spec: &SynthSpec) -> qnpg::Result<[RateVerdict; 4]> {
    let quadratic: Vec<f64> = (0..5).map(|k| 10f64.powf(-(2f64.powi(k)))).collect();
    let linear: Vec<f64> = (1..12).map(|k| 10f64.powi(-k)).collect();
    let dq = diagnose_errors(&quadratic, 1e-300)?;
    let dl = diagnose_errors(&linear, 1e-300)?;
    println!("10^(-2^k): {} {:.3?}", dq.verdict, dq.ratios);
    println!("10^(-k):   {} {:.3?}", dl.verdict, dl.last_ratios(3));

    let model = generate_synthetic(spec)?;
    let (ns, na) = (model.num_states, model.num_actions);
    let reg = RegularizerSpec::uniform(Family::Kl, ns, na);
    let init = Policy::uniform(ns, na);
    let config = SolverConfig {
        record_snapshots: true,
        ..SolverConfig::default()
    };
    let (policy, trace) = solve(&model, &reg, &config, &init)?;
    let dqn = convergence_diagnostics(&trace, &policy)?;
    println!(
        "quasi-Newton, {} iterations: {}",
        trace.iterations(),
        dqn.verdict
    );
    for row in &dqn.rows {
        println!(
            "  iter {:>2}  err {:.3e}  ln|ln e| {}  ratio {}",
            row.iter,
            row.err_frob,
            row.log_log_err.map_or("-".into(), |x| format!("{x:.4}")),
            row.ratio.map_or("-".into(), |x| format!("{x:.4}"))
        );
    }

    let md_config = SolverConfig {
        eps_tol: 1e-6,
        max_iters: 100_000,
        ..config
    };
    let run = solve_md_baseline(&model, &reg, &md_config, BaselineRate::Auto, &init)?;
    let dmd = convergence_diagnostics(&run.trace, &run.policy)?;
    println!(
        "mirror descent, {} iterations: {} (last ratios {:.4?})",
        run.trace.iterations(),
        dmd.verdict,
        dmd.last_ratios(2)
    );
    Ok([dq.verdict, dl.verdict, dqn.verdict, dmd.verdict])
}

#[allow(dead_code)]
fn main() -> qnpg::Result<()> {
    run_example(&SynthSpec::default())?;
    Ok(())
}
