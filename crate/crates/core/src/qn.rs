//! Quasi-Newton policy iteration.
//!
//! Each iteration evaluates `v_pi` and moves the dual coordinates
//! `theta = phi'(pi/mu)` toward the Newton target:
//!
//! ```text
//! theta[s][a] <- eta (r[s][a] - [(I - gamma P^a) v]_s + c_s) / tau + (1 - eta) theta[s][a]
//! ```
//!
//! with `c_s` fixed by `sum_a pi[s][a] = 1`. For KL the multiplier is
//! eliminated in closed form, which gives the regularized natural policy
//! gradient step `pi <- mu^eta pi^(1-eta) exp(eta q / tau)` (normalized).
//! For the other families the multiplier is found by bisection, see
//! [`crate::simplex`].

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
#[cfg(test)]
use crate::mdp::value_function;
use crate::mdp::{centered_value_function, LinearSolverConfig, MdpModel};
use crate::regularizer::RegularizerSpec;
use crate::simplex::MultiplierProblem;
use crate::table::{Policy, Table, POLICY_FLOOR};

/// State weights `e` of the objective `e^T v_pi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum WeightSpec {
    Ones,
    Custom(Vec<f64>),
}

impl WeightSpec {
    pub fn resolve(&self, num_states: usize) -> Result<Vec<f64>> {
        match self {
            WeightSpec::Ones => Ok(vec![1.0; num_states]),
            WeightSpec::Custom(e) => {
                if e.len() != num_states {
                    return Err(Error::Config(format!(
                        "weight_e has {} entries, model has {num_states} states",
                        e.len()
                    )));
                }
                if e.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                    return Err(Error::Config("weight_e must be strictly positive".into()));
                }
                Ok(e.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Regularization coefficient, `> 0`.
    pub tau: f64,
    /// Learning rate in `(0, 1]`.
    pub eta: f64,
    /// Stop once the relative policy change is at most this.
    pub eps_tol: f64,
    pub max_iters: usize,
    /// Residual tolerance of the multiplier bisection.
    pub bisect_tol: f64,
    pub linear: LinearSolverConfig,
    pub weight_e: WeightSpec,
    /// Keep a copy of every iterate in the trace.
    pub record_snapshots: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            eta: 1.0,
            eps_tol: 1e-12,
            max_iters: 100,
            bisect_tol: 1e-14,
            linear: LinearSolverConfig::default(),
            weight_e: WeightSpec::Ones,
            record_snapshots: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Config(format!(
                "eta must lie in (0, 1], got {}",
                self.eta
            )));
        }
        if !(self.eps_tol > 0.0) {
            return Err(Error::Config("eps_tol must be positive".into()));
        }
        if !(self.bisect_tol > 0.0) {
            return Err(Error::Config("bisect_tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// One iteration of a policy iteration run.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iter: usize,
    /// `||pi_new - pi||_F / ||pi||_F`.
    pub xi: f64,
    /// `E` at the iterate whose value function drove this update.
    pub objective: f64,
    /// Bi-CGSTAB steps spent on this iteration's linear solves.
    pub solve_steps: usize,
    pub wall_ms: f64,
    /// The new iterate, when snapshots are recorded.
    pub snapshot: Option<Policy>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    /// Starting policy, when snapshots are recorded.
    pub initial: Option<Policy>,
    pub converged: bool,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn total_solve_steps(&self) -> usize {
        self.records.iter().map(|r| r.solve_steps).sum()
    }

    /// Iterates in order, starting with the initial policy if it was kept.
    pub fn snapshots(&self) -> impl Iterator<Item = &Policy> {
        self.initial
            .iter()
            .chain(self.records.iter().filter_map(|r| r.snapshot.as_ref()))
    }
}

/// Learning rate for each state.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Rates<'a> {
    Uniform(f64),
    PerState(&'a [f64]),
}

impl Rates<'_> {
    #[inline]
    fn at(&self, s: usize) -> f64 {
        match self {
            Rates::Uniform(eta) => *eta,
            Rates::PerState(etas) => etas[s],
        }
    }
}

fn check_inputs(model: &MdpModel, policy: &Policy, spec: &RegularizerSpec) -> Result<()> {
    spec.check_policy_shape(policy)?;
    if policy.num_states() != model.num_states || policy.num_actions() != model.num_actions {
        return Err(Error::Dimension("policy and model shapes differ".into()));
    }
    Ok(())
}

/// Advantages from a caller-supplied value vector.
pub(crate) fn advantages_of(model: &MdpModel, v: &[f64]) -> Result<Table> {
    if v.len() != model.num_states {
        return Err(Error::Dimension(
            "value vector must have |S| entries".into(),
        ));
    }
    Ok(model.advantage_gaps(v))
}

fn row_max(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Closed-form KL row update in log space. Advantages are measured from the
/// row maximum before dividing by `tau`, so the large common part never
/// enters the logits.
fn kl_row(
    spec: &RegularizerSpec,
    s: usize,
    pi: &[f64],
    adv: &[f64],
    eta: f64,
    tau: f64,
    out: &mut [f64],
) {
    let top = row_max(adv);
    for (a, o) in out.iter_mut().enumerate() {
        let mut logit = eta * spec.mu(s, a).ln() + eta * (adv[a] - top) / tau;
        if eta < 1.0 {
            logit += (1.0 - eta) * pi[a].max(POLICY_FLOOR).ln();
        }
        *o = logit;
    }
    let max = row_max(out);
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o = (*o / sum).max(POLICY_FLOOR);
    }
}

/// General row update: solve the multiplier equation for the shifts
/// `x_a = -(1 - eta) phi'(pi/mu) - (eta/tau)(q_a - v_s)`, each shifted by the
/// same per-row constant, which the multiplier absorbs.
#[allow(clippy::too_many_arguments)]
fn general_row(
    spec: &RegularizerSpec,
    s: usize,
    pi: &[f64],
    adv: &[f64],
    eta: f64,
    tau: f64,
    bisect_tol: f64,
    out: &mut [f64],
) -> Result<()> {
    let top = row_max(adv);
    let shifts: Vec<f64> = (0..pi.len())
        .map(|a| {
            let mut x = (eta / tau) * (top - adv[a]);
            if eta < 1.0 {
                x -= (1.0 - eta) * spec.dual_coordinate(s, a, pi[a]);
            }
            x
        })
        .collect();
    let problem = MultiplierProblem::new(spec.prior().row(s), shifts, &spec.family)?;
    let sol = problem.solve(bisect_tol)?;
    problem.row_from(&sol, out);
    // The bisection leaves the row sum within `bisect_tol` of one. Off the
    // simplex, the value function moves at first order (by about the row
    // sum error times `v`), so the row is put back on it exactly.
    let sum: f64 = out.iter().sum();
    for o in out.iter_mut() {
        *o = (*o / sum).max(POLICY_FLOOR);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn update_policy(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    tau: f64,
    rates: Rates<'_>,
    bisect_tol: f64,
    adv: &Table,
    closed_form_kl: bool,
) -> Result<Policy> {
    check_inputs(model, policy, spec)?;
    let na = model.num_actions;
    let mut out = Table::zeros(model.num_states, na);
    out.as_mut_slice()
        .par_chunks_mut(na)
        .enumerate()
        .try_for_each(|(s, row)| {
            let eta = rates.at(s);
            if closed_form_kl {
                kl_row(spec, s, policy.row(s), adv.row(s), eta, tau, row);
                Ok(())
            } else {
                general_row(
                    spec,
                    s,
                    policy.row(s),
                    adv.row(s),
                    eta,
                    tau,
                    bisect_tol,
                    row,
                )
            }
        })?;
    Ok(Policy::from_table_unchecked(out))
}

/// Closed-form KL step
/// `pi <- mu^eta pi^(1-eta) exp(eta (r + gamma P^a v) / tau)`, normalized per
/// state. `value_v` must be the value function of `policy`.
pub fn kl_update_step(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    config: &SolverConfig,
    value_v: &[f64],
) -> Result<Policy> {
    if !spec.family.is_kl() {
        return Err(Error::Config(format!(
            "closed-form step needs the kl family, got {}",
            spec.family
        )));
    }
    config.validate()?;
    update_policy(
        model,
        policy,
        spec,
        config.tau,
        Rates::Uniform(config.eta),
        config.bisect_tol,
        &advantages_of(model, value_v)?,
        true,
    )
}

/// Quasi-Newton step for any family, with the per-state multiplier found by
/// bisection. `value_v` must be the value function of `policy`.
pub fn general_update_step(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    config: &SolverConfig,
    value_v: &[f64],
) -> Result<Policy> {
    config.validate()?;
    update_policy(
        model,
        policy,
        spec,
        config.tau,
        Rates::Uniform(config.eta),
        config.bisect_tol,
        &advantages_of(model, value_v)?,
        false,
    )
}

/// One quasi-Newton step, closed form for KL and bisection otherwise.
pub fn update_step(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    config: &SolverConfig,
    value_v: &[f64],
) -> Result<Policy> {
    if spec.family.is_kl() {
        kl_update_step(model, policy, spec, config, value_v)
    } else {
        general_update_step(model, policy, spec, config, value_v)
    }
}

fn step_with_advantages(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    config: &SolverConfig,
    adv: &Table,
) -> Result<Policy> {
    update_policy(
        model,
        policy,
        spec,
        config.tau,
        Rates::Uniform(config.eta),
        config.bisect_tol,
        adv,
        spec.family.is_kl(),
    )
}

/// Runs quasi-Newton iterations from `initial` until the relative policy
/// change drops to `eps_tol`.
///
/// On hitting `max_iters` returns [`Error::MaxItersExceeded`] carrying the
/// trace and the last iterate.
pub fn solve(
    model: &MdpModel,
    spec: &RegularizerSpec,
    config: &SolverConfig,
    initial: &Policy,
) -> Result<(Policy, IterationTrace)> {
    config.validate()?;
    model.validate()?;
    initial.check()?;
    let e = config.weight_e.resolve(model.num_states)?;

    let mut trace = IterationTrace {
        initial: config.record_snapshots.then(|| initial.clone()),
        ..IterationTrace::default()
    };
    let mut pi = initial.clone();
    for iter in 1..=config.max_iters {
        let start = Instant::now();
        let cv = centered_value_function(model, &pi, spec, config.tau, &config.linear)?;
        let gaps = cv.advantage_gaps(model);
        let next = step_with_advantages(model, &pi, spec, config, &gaps)?;
        let xi = pi.relative_change(&next);
        trace.records.push(IterationRecord {
            iter,
            xi,
            objective: cv.objective(&e),
            solve_steps: cv.report.steps,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            snapshot: config.record_snapshots.then(|| next.clone()),
        });
        pi = next;
        if xi <= config.eps_tol {
            trace.converged = true;
            return Ok((pi, trace));
        }
    }
    Err(Error::MaxItersExceeded {
        trace: Box::new(trace),
        policy: Box::new(pi),
    })
}

/// Largest violation of the first-order optimality condition
///
/// ```text
/// r[s][a] - tau phi'(pi/mu) - [(I - gamma P^a) v]_s + c_s = 0
/// ```
///
/// with `c_s` chosen per state to minimize the squared row residual. Entries
/// held at [`POLICY_FLOOR`] have no resolvable dual coordinate; for them
/// only a positive residual (a floored action that should gain mass) counts.
pub fn first_order_residual(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    config: &SolverConfig,
) -> Result<f64> {
    let adv = centered_value_function(model, policy, spec, config.tau, &config.linear)?
        .advantage_gaps(model);
    let mut worst: f64 = 0.0;
    let mut g = vec![0.0; model.num_actions];
    for s in 0..model.num_states {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (a, ga) in g.iter_mut().enumerate() {
            let p = policy.prob(s, a);
            *ga = adv.get(s, a) - config.tau * spec.dual_coordinate(s, a, p);
            if p > POLICY_FLOOR {
                sum += *ga;
                count += 1;
            }
        }
        let c = if count > 0 { -sum / count as f64 } else { 0.0 };
        for (a, &ga) in g.iter().enumerate() {
            let r = ga + c;
            let violation = if policy.prob(s, a) > POLICY_FLOOR {
                r.abs()
            } else {
                r.max(0.0)
            };
            worst = worst.max(violation);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizer::Family;

    fn bandit(rewards: &[f64]) -> MdpModel {
        let n = rewards.len();
        MdpModel::from_dense(&[vec![vec![1.0]; n]], &[rewards.to_vec()], 0.5).unwrap()
    }

    fn zero_discount(rewards: &[f64]) -> MdpModel {
        let mut m = bandit(rewards);
        m.discount = 1e-300;
        m
    }

    #[test]
    fn kl_bandit_step_is_softmax() {
        let m = zero_discount(&[1.0, 0.0]);
        let spec = RegularizerSpec::uniform(Family::Kl, 1, 2);
        let cfg = SolverConfig {
            tau: 1.0,
            ..SolverConfig::default()
        };
        let pi = Policy::uniform(1, 2);
        let (v, _) = value_function(&m, &pi, &spec, cfg.tau, &cfg.linear).unwrap();
        let next = kl_update_step(&m, &pi, &spec, &cfg, &v).unwrap();
        let e = 1f64.exp();
        assert!((next.prob(0, 0) - e / (e + 1.0)).abs() < 1e-12);
        assert!((next.prob(0, 0) - 0.731058578).abs() < 1e-9);
        assert!((next.prob(0, 1) - 0.268941421).abs() < 1e-9);
    }

    #[test]
    fn equal_rewards_keep_uniform() {
        let m = bandit(&[0.3, 0.3, 0.3]);
        for fam in [
            Family::Kl,
            Family::ReverseKl,
            Family::Hellinger,
            Family::Alpha(-3.0),
        ] {
            let spec = RegularizerSpec::uniform(fam, 1, 3);
            let cfg = SolverConfig {
                tau: 0.1,
                ..SolverConfig::default()
            };
            let pi = Policy::uniform(1, 3);
            let (v, _) = value_function(&m, &pi, &spec, cfg.tau, &cfg.linear).unwrap();
            let next = update_step(&m, &pi, &spec, &cfg, &v).unwrap();
            for a in 0..3 {
                assert!((next.prob(0, a) - 1.0 / 3.0).abs() < 1e-13, "{fam}");
            }
            let res = first_order_residual(&m, &pi, &spec, &cfg).unwrap();
            assert!(res < 1e-12, "{fam}: {res}");
        }
    }

    #[test]
    fn alpha_bandit_row_solves_multiplier() {
        let m = zero_discount(&[1.0, 0.0]);
        let spec = RegularizerSpec::uniform(Family::Alpha(-3.0), 1, 2);
        let cfg = SolverConfig {
            tau: 1.0,
            ..SolverConfig::default()
        };
        let pi = Policy::uniform(1, 2);
        let (v, _) = value_function(&m, &pi, &spec, cfg.tau, &cfg.linear).unwrap();
        let next = general_update_step(&m, &pi, &spec, &cfg, &v).unwrap();
        // pi_a = mu (2 (c + x_a))^{-1/2}, x_a = -(r_a - v): the ratio
        // (mu/pi_0)^2 - (mu/pi_1)^2 = 2 (x_0 - x_1) = -2
        let (p0, p1) = (next.prob(0, 0), next.prob(0, 1));
        let lhs = (0.5 / p0).powi(2) - (0.5 / p1).powi(2);
        assert!((lhs + 2.0).abs() < 1e-10, "{lhs}");
        assert!((p0 + p1 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn kl_step_rejects_other_families() {
        let m = bandit(&[1.0, 0.0]);
        let spec = RegularizerSpec::uniform(Family::Hellinger, 1, 2);
        let err = kl_update_step(
            &m,
            &Policy::uniform(1, 2),
            &spec,
            &SolverConfig::default(),
            &[0.0],
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn bandit_converges_to_softmax() {
        let m = zero_discount(&[1.0, 0.0]);
        let spec = RegularizerSpec::uniform(Family::Kl, 1, 2);
        let cfg = SolverConfig {
            tau: 1.0,
            ..SolverConfig::default()
        };
        let (pi, trace) = solve(&m, &spec, &cfg, &Policy::uniform(1, 2)).unwrap();
        assert!(trace.converged);
        assert!(trace.iterations() <= 2);
        let e = 1f64.exp();
        assert!((pi.prob(0, 0) - e / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn max_iters_carries_trace() {
        let m = bandit(&[1.0, 0.0]);
        let spec = RegularizerSpec::uniform(Family::Hellinger, 1, 2);
        let cfg = SolverConfig {
            tau: 0.1,
            max_iters: 1,
            eta: 0.5,
            ..SolverConfig::default()
        };
        match solve(&m, &spec, &cfg, &Policy::uniform(1, 2)) {
            Err(Error::MaxItersExceeded { trace, policy }) => {
                assert_eq!(trace.iterations(), 1);
                policy.check().unwrap();
            }
            other => panic!("expected MaxItersExceeded, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let bad_eta = SolverConfig {
            eta: 1.5,
            ..SolverConfig::default()
        };
        assert!(bad_eta.validate().is_err());
        let bad_tau = SolverConfig {
            tau: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad_tau.validate().is_err());
        assert!(WeightSpec::Custom(vec![1.0, -1.0]).resolve(2).is_err());
        assert!(WeightSpec::Custom(vec![1.0]).resolve(2).is_err());
    }
}
