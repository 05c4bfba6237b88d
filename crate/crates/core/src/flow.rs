//! Forward-Euler integration of the continuous quasi-Newton flow
//!
//! ```text
//! d pi[s][a] / dt = mu / phi''(pi/mu) * (r - tau phi'(pi/mu) - [(I - gamma P^a) v]_s + c_s) / tau
//! ```
//!
//! The multiplier `c_s` keeps the flow tangent to the simplex:
//! `c_s = -(sum_a u_a g_a) / (sum_a u_a)` with `u_a = mu/phi''(pi/mu)` and
//! `g_a` the bracket without `c_s`. Along the exact flow `E` is
//! non-decreasing.

use crate::error::{Error, Result};
use crate::mdp::{centered_value_function, dot, MdpModel};
use crate::qn::SolverConfig;
use crate::regularizer::RegularizerSpec;
use crate::table::{Policy, Table};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    pub dt: f64,
    pub num_steps: usize,
    /// A step that leaves the open simplex is retried with half the step
    /// size, at most this many times.
    pub max_halvings: usize,
}

impl FlowConfig {
    pub fn new(dt: f64, num_steps: usize) -> Self {
        Self {
            dt,
            num_steps,
            max_halvings: 40,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    /// `(t, E(pi(t)))`, starting at `t = 0`, one sample per step.
    pub samples: Vec<(f64, f64)>,
    pub policy: Policy,
    /// Steps that needed at least one halving.
    pub halved_steps: usize,
}

/// Velocity of the flow at `policy`, and the objective there.
pub fn flow_velocity(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    config: &SolverConfig,
    weight_e: &[f64],
) -> Result<(Table, f64)> {
    let tau = config.tau;
    let cv = centered_value_function(model, policy, spec, tau, &config.linear)?;
    let adv = cv.advantage_gaps(model);
    let na = model.num_actions;
    let mut vel = Table::zeros(model.num_states, na);
    let mut u = vec![0.0; na];
    let mut g = vec![0.0; na];
    for s in 0..model.num_states {
        for a in 0..na {
            let mu = spec.mu(s, a);
            let x = policy.prob(s, a) / mu;
            u[a] = mu / spec.family.phi_second(x)?;
            g[a] = adv.get(s, a) - tau * spec.family.phi_prime(x)?;
        }
        let c = -dot(&u, &g) / u.iter().sum::<f64>();
        for (a, out) in vel.row_mut(s).iter_mut().enumerate() {
            *out = u[a] * (g[a] + c) / tau;
        }
    }
    Ok((vel, cv.objective(weight_e)))
}

/// Integrates the flow for `flow.num_steps` Euler steps from `initial`.
pub fn flow_euler(
    model: &MdpModel,
    spec: &RegularizerSpec,
    config: &SolverConfig,
    flow: &FlowConfig,
    initial: &Policy,
) -> Result<FlowResult> {
    flow_euler_observed(model, spec, config, flow, initial, |_, _, _| {})
}

/// [`flow_euler`] that also hands every sampled state `(t, E, pi(t))` to
/// `observe`, including the initial and the final one.
pub fn flow_euler_observed<F>(
    model: &MdpModel,
    spec: &RegularizerSpec,
    config: &SolverConfig,
    flow: &FlowConfig,
    initial: &Policy,
    mut observe: F,
) -> Result<FlowResult>
where
    F: FnMut(f64, f64, &Policy),
{
    if !(flow.dt > 0.0) {
        return Err(Error::Config(format!(
            "dt must be positive, got {}",
            flow.dt
        )));
    }
    config.validate()?;
    model.validate()?;
    initial.check()?;
    let e = config.weight_e.resolve(model.num_states)?;

    let mut pi = initial.clone();
    let mut t = 0.0;
    let mut samples = Vec::with_capacity(flow.num_steps + 1);
    let mut halved_steps = 0;
    for _ in 0..flow.num_steps {
        let (vel, objective) = flow_velocity(model, &pi, spec, config, &e)?;
        observe(t, objective, &pi);
        samples.push((t, objective));
        let mut dt = flow.dt;
        let mut halvings = 0;
        let next = loop {
            if let Some(next) = euler_candidate(&pi, &vel, dt) {
                break next;
            }
            halvings += 1;
            if halvings > flow.max_halvings {
                return Err(Error::StepSize { t, halvings });
            }
            dt *= 0.5;
        };
        halved_steps += usize::from(halvings > 0);
        pi = next;
        t += dt;
    }
    let cv = centered_value_function(model, &pi, spec, config.tau, &config.linear)?;
    observe(t, cv.objective(&e), &pi);
    samples.push((t, cv.objective(&e)));
    Ok(FlowResult {
        samples,
        policy: pi,
        halved_steps,
    })
}

/// `pi + dt vel` with rows renormalized, or `None` if an entry leaves the
/// open simplex.
fn euler_candidate(pi: &Policy, vel: &Table, dt: f64) -> Option<Policy> {
    let mut out = pi.table().clone();
    for s in 0..out.rows() {
        let row = out.row_mut(s);
        for (p, d) in row.iter_mut().zip(vel.row(s)) {
            *p += dt * d;
            if !(*p > 0.0) {
                return None;
            }
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
    }
    Some(Policy::from_table_unchecked(out))
}
