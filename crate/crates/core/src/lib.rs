//! Quasi-Newton policy iteration for f-divergence regularized tabular MDPs.
//!
//! The solver maximizes `E(pi) = e^T (I - gamma P_pi)^{-1} (r_pi - tau h_pi)`
//! where `h_pi[s] = sum_a mu[s][a] phi(pi[s][a] / mu[s][a])` is an
//! f-divergence from a prior `mu`. Preconditioning the policy gradient with a
//! diagonal approximation of the Hessian gives an update that is linear in
//! the dual coordinates `theta = phi'(pi/mu)`; with the KL divergence it is
//! the regularized natural policy gradient step, and for reverse KL,
//! Hellinger and alpha-divergences the per-state normalizing multiplier is
//! found by bisection. At unit learning rate the iteration converges
//! quadratically.
//!
//! Modules:
//!
//! * [`mdp`]: model, policy-induced quantities, value and weight solves,
//!   objective and its directional derivative.
//! * [`linsolve`]: Bi-CGSTAB and dense LU.
//! * [`regularizer`]: the divergence family (`phi`, `psi`, entropy, dual
//!   coordinates).
//! * [`simplex`]: the per-state multiplier equation.
//! * [`qn`]: the quasi-Newton iteration and optimality residual.
//! * [`baseline`]: constant-rate explicit mirror descent.
//! * [`flow`]: Euler integration of the continuous flow.
//! * [`diagnostics`]: convergence-rate diagnostics.
//! * [`synth`], [`io`]: synthetic models and file formats.
//! * [`cli`]: the `qnpg` command line.
//!
//! ```
//! use qnpg::{generate_synthetic, solve, Family, Policy, RegularizerSpec, SolverConfig, SynthSpec};
//!
//! let model = generate_synthetic(&SynthSpec::new(20, 4, 5, 0.9, 1)).unwrap();
//! let spec = RegularizerSpec::uniform(Family::Hellinger, 20, 4);
//! let config = SolverConfig { tau: 0.01, ..SolverConfig::default() };
//! let (policy, trace) = solve(&model, &spec, &config, &Policy::uniform(20, 4)).unwrap();
//! assert!(trace.converged);
//! policy.check().unwrap();
//! ```

// `!(x > 0.0)` is used deliberately so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cli;
mod compensated;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod io;
pub mod linsolve;
pub mod mdp;
pub mod qn;
pub mod regularizer;
pub mod simplex;
pub mod sparse;
pub mod synth;
pub mod table;

pub use baseline::{md_baseline_step, solve_md_baseline, BaselineRate, BaselineRun};
pub use diagnostics::{
    convergence_diagnostics, diagnose_errors, ConvergenceDiagnostics, RateVerdict,
};
pub use error::{Error, Result};
pub use flow::{flow_euler, flow_euler_observed, FlowConfig, FlowResult};
pub use io::{read_model, write_model, write_trace};
pub use mdp::{
    directional_derivative, objective, policy_reward, policy_transition, validate_model,
    value_function, weight_vector, LinearSolverConfig, LinearSolverKind, MdpModel,
    ValueSolveReport,
};
pub use qn::{
    first_order_residual, general_update_step, kl_update_step, solve, update_step, IterationRecord,
    IterationTrace, SolverConfig, WeightSpec,
};
pub use regularizer::{Family, RegularizerSpec, ThetaTable};
pub use simplex::MultiplierProblem;
pub use synth::{generate_synthetic, SynthSpec};
pub use table::{Policy, Table};
