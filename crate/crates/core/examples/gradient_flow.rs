//! Forward Euler integration of the continuous quasi-Newton flow.
//!
//! On a small random model the objective increases monotonically along the
//! flow and the policy approaches the fixed point of the discrete iteration
//! at a linear rate.
//!
//! ```text
//! cargo run --release --example gradient_flow -- [seed] [dt] [steps]
//! ```

use qnpg::{
    flow_euler_observed, generate_synthetic, solve, Family, FlowConfig, Policy, RegularizerSpec,
    SolverConfig, SynthSpec,
};

/// Returns the largest decrease of the objective between consecutive samples
/// and the final distance to the fixed point.
pub fn run_example(seed: u64, dt: f64, steps: usize) -> qnpg::Result<(f64, f64)> {
    let model = generate_synthetic(&SynthSpec::new(4, 3, 2, 0.9, seed))?;
    let reg = RegularizerSpec::uniform(Family::Hellinger, 4, 3);
    let config = SolverConfig {
        tau: 1.0,
        ..SolverConfig::default()
    };
    let init = Policy::uniform(4, 3);
    let (target, _) = solve(&model, &reg, &config, &init)?;

    let every = (steps / 10).max(1);
    let mut step = 0;
    let result = flow_euler_observed(
        &model,
        &reg,
        &config,
        &FlowConfig::new(dt, steps),
        &init,
        |t, e, pi| {
            if step % every == 0 {
                let err = pi.table().frobenius_distance(target.table());
                println!("t {t:8.3}  E {e:.12}  |pi - pi*| {err:.3e}");
            }
            step += 1;
        },
    )?;
    let worst_drop = result
        .samples
        .windows(2)
        .map(|w| w[0].1 - w[1].1)
        .fold(f64::NEG_INFINITY, f64::max);
    let final_err = result.policy.table().frobenius_distance(target.table());
    println!(
        "largest per-step decrease {worst_drop:.2e}, halved steps {}",
        result.halved_steps
    );
    Ok((worst_drop, final_err))
}

#[allow(dead_code)]
fn main() -> qnpg::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));
    let dt = args.next().map_or(1e-3, |s| s.parse().expect("dt"));
    let steps = args.next().map_or(10_000, |s| s.parse().expect("steps"));
    run_example(seed, dt, steps)?;
    Ok(())
}
