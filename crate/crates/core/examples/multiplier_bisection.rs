//! The per-state multiplier equation `sum_a mu_a psi(c + x_a) = 1`.
//!
//! Solves one equation for each built-in family and for a hand-written map,
//! printing the root, the residual and the resulting probability row.
//!
//! ```text
//! cargo run --example multiplier_bisection
//! ```

use qnpg::simplex::{CustomMap, MultiplierProblem};
use qnpg::Family;

/// Returns the largest residual over all solved equations.
pub fn run_example() -> qnpg::Result<f64> {
    let mu = [0.25; 4];
    // Shifts spanning several orders of magnitude, as produced by small tau.
    let shifts = vec![0.0, 3.5, 120.0, 2500.0];
    let mut worst: f64 = 0.0;
    for family in [
        Family::Kl,
        Family::ReverseKl,
        Family::Hellinger,
        Family::Alpha(-3.0),
    ] {
        let problem = MultiplierProblem::new(&mu, shifts.clone(), &family)?;
        let sol = problem.solve(1e-14)?;
        let mut row = vec![0.0; mu.len()];
        problem.row_from(&sol, &mut row);
        println!(
            "{family:>10}: c = {:.6e}, residual {:.1e}, {} steps, row [{}]",
            sol.root,
            sol.residual,
            sol.steps,
            fmt_row(&row)
        );
        worst = worst.max(sol.residual);
    }

    // psi(y) = 1 / (1 + y)^3 on (-1, inf), the map of a power divergence.
    let cubic = CustomMap {
        psi: |y: f64| (1.0 + y).powi(-3),
        inverse: |x: f64| x.powf(-1.0 / 3.0) - 1.0,
        lower_bound: -1.0,
    };
    let problem = MultiplierProblem::new(&mu, shifts, &cubic)?;
    let sol = problem.solve(1e-14)?;
    let mut row = vec![0.0; mu.len()];
    problem.row_from(&sol, &mut row);
    println!(
        "{:>10}: c = {:.6e}, residual {:.1e}, {} steps, row [{}]",
        "custom",
        sol.root,
        sol.residual,
        sol.steps,
        fmt_row(&row)
    );
    Ok(worst.max(sol.residual))
}

fn fmt_row(row: &[f64]) -> String {
    row.iter()
        .map(|p| format!("{p:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[allow(dead_code)]
fn main() -> qnpg::Result<()> {
    run_example()?;
    Ok(())
}
