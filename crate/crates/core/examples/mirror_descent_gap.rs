//! Quasi-Newton against constant-rate mirror descent on the synthetic model.
//!
//! Both methods take the same dual-coordinate step; mirror descent scales it
//! by `beta w_pi[s]` with a constant `beta`, the quasi-Newton method by one.
//! The baseline uses the largest stable constant, `1 / max_s w[s]`.
//!
//! ```text
//! cargo run --release --example mirror_descent_gap -- [family] [tol]
//! ```

use qnpg::{
    generate_synthetic, solve, solve_md_baseline, BaselineRate, Family, Policy, RegularizerSpec,
    SolverConfig, SynthSpec,
};

pub fn run_example(family: Family, tol: f64, spec: &SynthSpec) -> qnpg::Result<(usize, usize)> {
    let model = generate_synthetic(spec)?;
    let (ns, na) = (model.num_states, model.num_actions);
    let reg = RegularizerSpec::uniform(family, ns, na);
    let init = Policy::uniform(ns, na);
    let qn_config = SolverConfig {
        eps_tol: tol,
        ..SolverConfig::default()
    };
    let (_, qn_trace) = solve(&model, &reg, &qn_config, &init)?;

    let md_config = SolverConfig {
        eps_tol: tol,
        max_iters: 200_000,
        ..SolverConfig::default()
    };
    let run = solve_md_baseline(&model, &reg, &md_config, BaselineRate::Auto, &init)?;
    let (qn_iters, md_iters) = (qn_trace.iterations(), run.trace.iterations());
    println!("{family} on {ns}x{na}, tol {tol:e}");
    println!("  quasi-Newton:   {qn_iters} iterations");
    println!(
        "  mirror descent: {md_iters} iterations (beta {:.4e}, converged {})",
        run.beta, run.trace.converged
    );
    println!("  ratio {:.1}", md_iters as f64 / qn_iters as f64);
    Ok((qn_iters, md_iters))
}

#[allow(dead_code)]
fn main() -> qnpg::Result<()> {
    let mut args = std::env::args().skip(1);
    let family = args.next().map_or(Ok(Family::Kl), |s| s.parse())?;
    let tol = args.next().map_or(1e-6, |s| s.parse().expect("tolerance"));
    run_example(family, tol, &SynthSpec::default())?;
    Ok(())
}
