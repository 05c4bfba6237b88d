//! Explicit mirror descent with a constant learning rate, for comparison.
//!
//! Mirror descent on `-E` with the Bregman divergence of
//! `tau sum mu phi(pi/mu)` takes the same dual-coordinate step as the
//! quasi-Newton method, but with the per-state rate `beta w_pi[s]` in place of
//! `eta`. The quasi-Newton method is the adaptive choice `beta_s = 1/w_pi[s]`.
//! A constant `beta` must satisfy `beta max_s w_pi[s] <= 1`; larger values are
//! clamped to that bound.

use std::time::Instant;

use crate::error::{Error, Result};
#[cfg(test)]
use crate::mdp::value_function;
use crate::mdp::{centered_value_function, weight_vector, MdpModel};
use crate::qn::{
    advantages_of, update_policy, IterationRecord, IterationTrace, Rates, SolverConfig,
};
use crate::regularizer::RegularizerSpec;
use crate::table::{Policy, Table};

/// How the constant learning rate is picked.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BaselineRate {
    Fixed(f64),
    /// `1 / max_s w[s]` at the initial policy: the largest stable constant.
    Auto,
}

/// `(beta', clamped)` with `beta' = min(beta, 1 / max_s w[s])`.
pub fn effective_beta(beta: f64, weight_w: &[f64]) -> (f64, bool) {
    let w_max = weight_w.iter().copied().fold(0.0, f64::max);
    let cap = 1.0 / w_max;
    if beta > cap {
        (cap, true)
    } else {
        (beta, false)
    }
}

/// One mirror descent step with per-state rate `beta w[s]`. `value_v` and
/// `weight_w` must belong to `policy`. Returns the new policy and whether
/// `beta` had to be clamped.
pub fn md_baseline_step(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    beta: f64,
    config: &SolverConfig,
    value_v: &[f64],
    weight_w: &[f64],
) -> Result<(Policy, bool)> {
    if !(beta > 0.0) {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    if weight_w.len() != model.num_states {
        return Err(Error::Dimension(
            "weight vector must have |S| entries".into(),
        ));
    }
    let adv = advantages_of(model, value_v)?;
    md_step_with_advantages(model, policy, spec, beta, config, &adv, weight_w)
}

fn md_step_with_advantages(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    beta: f64,
    config: &SolverConfig,
    adv: &Table,
    weight_w: &[f64],
) -> Result<(Policy, bool)> {
    let (beta, clamped) = effective_beta(beta, weight_w);
    let rates: Vec<f64> = weight_w.iter().map(|w| (beta * w).min(1.0)).collect();
    let next = update_policy(
        model,
        policy,
        spec,
        config.tau,
        Rates::PerState(&rates),
        config.bisect_tol,
        adv,
        spec.family.is_kl(),
    )?;
    Ok((next, clamped))
}

/// Result of a baseline run.
#[derive(Clone, Debug)]
pub struct BaselineRun {
    pub policy: Policy,
    pub trace: IterationTrace,
    /// The constant rate actually requested each iteration.
    pub beta: f64,
    /// Iterations in which `beta` exceeded `1 / max w` and was clamped.
    pub clamped_iterations: usize,
}

/// Runs the constant-rate baseline until the relative policy change drops to
/// `config.eps_tol`. On hitting `max_iters` the run is returned with
/// `trace.converged == false` rather than as an error, since baselines are
/// expected to be slow.
pub fn solve_md_baseline(
    model: &MdpModel,
    spec: &RegularizerSpec,
    config: &SolverConfig,
    rate: BaselineRate,
    initial: &Policy,
) -> Result<BaselineRun> {
    config.validate()?;
    model.validate()?;
    initial.check()?;
    let e = config.weight_e.resolve(model.num_states)?;

    let mut trace = IterationTrace {
        initial: config.record_snapshots.then(|| initial.clone()),
        ..IterationTrace::default()
    };
    let mut pi = initial.clone();
    let mut beta = match rate {
        BaselineRate::Fixed(b) => b,
        BaselineRate::Auto => f64::NAN,
    };
    let mut clamped_iterations = 0;
    for iter in 1..=config.max_iters {
        let start = Instant::now();
        let cv = centered_value_function(model, &pi, spec, config.tau, &config.linear)?;
        let (w, report_w) = weight_vector(model, &pi, &e, &config.linear)?;
        if beta.is_nan() {
            beta = 1.0 / w.iter().copied().fold(0.0, f64::max);
        }
        let (next, clamped) = md_step_with_advantages(
            model,
            &pi,
            spec,
            beta,
            config,
            &cv.advantage_gaps(model),
            &w,
        )?;
        clamped_iterations += usize::from(clamped);
        let xi = pi.relative_change(&next);
        trace.records.push(IterationRecord {
            iter,
            xi,
            objective: cv.objective(&e),
            solve_steps: cv.report.steps + report_w.steps,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            snapshot: config.record_snapshots.then(|| next.clone()),
        });
        pi = next;
        if xi <= config.eps_tol {
            trace.converged = true;
            break;
        }
    }
    Ok(BaselineRun {
        policy: pi,
        trace,
        beta,
        clamped_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qn::general_update_step;
    use crate::regularizer::Family;

    #[test]
    fn clamp_rule() {
        assert_eq!(effective_beta(0.1, &[2.0, 4.0]), (0.1, false));
        assert_eq!(effective_beta(1.0, &[2.0, 4.0]), (0.25, true));
    }

    #[test]
    fn uniform_weights_reduce_to_quasi_newton() {
        // every state has w = 1/(1 - gamma) when P_pi = I
        let gamma = 0.8;
        let m = MdpModel::from_dense(
            &[
                vec![vec![1.0, 0.0], vec![1.0, 0.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            &[vec![1.0, 0.2], vec![0.3, 0.9]],
            gamma,
        )
        .unwrap();
        let spec = RegularizerSpec::uniform(Family::Hellinger, 2, 2);
        let cfg = SolverConfig {
            tau: 0.2,
            ..SolverConfig::default()
        };
        let pi = Policy::uniform(2, 2);
        let (v, _) = value_function(&m, &pi, &spec, cfg.tau, &cfg.linear).unwrap();
        let (w, _) = weight_vector(&m, &pi, &[1.0, 1.0], &cfg.linear).unwrap();
        assert!(w.iter().all(|x| (x - 5.0).abs() < 1e-12));
        let (md, clamped) = md_baseline_step(&m, &pi, &spec, 1.0 / w[0], &cfg, &v, &w).unwrap();
        assert!(!clamped);
        let qn = general_update_step(&m, &pi, &spec, &cfg, &v).unwrap();
        for (a, b) in md.table().as_slice().iter().zip(qn.table().as_slice()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetric_model_stays_uniform() {
        let m = MdpModel::from_dense(
            &[vec![vec![0.5, 0.5]; 3], vec![vec![0.5, 0.5]; 3]],
            &[vec![0.4; 3], vec![0.4; 3]],
            0.9,
        )
        .unwrap();
        let spec = RegularizerSpec::uniform(Family::ReverseKl, 2, 3);
        let cfg = SolverConfig {
            tau: 0.05,
            eps_tol: 1e-10,
            ..SolverConfig::default()
        };
        let run =
            solve_md_baseline(&m, &spec, &cfg, BaselineRate::Auto, &Policy::uniform(2, 3)).unwrap();
        assert!(run.trace.converged);
        for s in 0..2 {
            for a in 0..3 {
                assert!((run.policy.prob(s, a) - 1.0 / 3.0).abs() < 1e-13);
            }
        }
    }
}
