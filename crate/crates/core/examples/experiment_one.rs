//! Quasi-Newton runs on the 200-state, 50-action synthetic model for each
//! regularizer, with iteration counts, optimality residuals and the
//! quadratic-rate diagnostic.
//!
//! ```text
//! cargo run --release --example experiment_one -- [seed]
//! ```

use std::time::Instant;

use qnpg::{
    convergence_diagnostics, first_order_residual, generate_synthetic, solve, Family, Policy,
    RegularizerSpec, SolverConfig, SynthSpec,
};

pub fn run_example(seed: u64) -> qnpg::Result<()> {
    let model = generate_synthetic(&SynthSpec::default().with_seed(seed))?;
    let (ns, na) = (model.num_states, model.num_actions);
    let config = SolverConfig {
        record_snapshots: true,
        ..SolverConfig::default()
    };
    println!(
        "model: {ns} states, {na} actions, gamma {}, seed {seed}",
        model.discount
    );
    for family in [
        Family::Kl,
        Family::ReverseKl,
        Family::Hellinger,
        Family::Alpha(-3.0),
    ] {
        let spec = RegularizerSpec::uniform(family, ns, na);
        let start = Instant::now();
        let (policy, trace) = solve(&model, &spec, &config, &Policy::uniform(ns, na))?;
        let elapsed = start.elapsed();
        let residual = first_order_residual(&model, &policy, &spec, &config)?;
        println!(
            "{family:>10}: {} iterations in {:.0} ms, first-order residual {residual:.2e}",
            trace.iterations(),
            elapsed.as_secs_f64() * 1e3,
        );
        match convergence_diagnostics(&trace, &policy) {
            Ok(diag) => {
                println!("    rate: {} (ratios {:.3?})", diag.verdict, diag.ratios);
                for (rec, row) in trace.records.iter().zip(diag.rows.iter().skip(1)) {
                    println!(
                        "    iter {:>2}  xi {:.3e}  E {:.12}  err {:.3e}  ratio {}",
                        rec.iter,
                        rec.xi,
                        rec.objective,
                        row.err_frob,
                        row.ratio.map_or("-".to_string(), |r| format!("{r:.3}"))
                    );
                }
            }
            Err(err) => println!("    rate: {err}"),
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> qnpg::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .map_or(0, |s| s.parse().expect("seed"));
    run_example(seed)
}
