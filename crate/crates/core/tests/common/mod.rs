//! Shared fixtures and independent reference computations for the
//! integration tests. Nothing here calls into the solver internals: the
//! references are written directly from the defining formulas.

#![allow(dead_code)]

use qnpg::{Family, MdpModel, Policy, Table};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct TestRng(ChaCha8Rng);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform on `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// A strictly positive probability vector bounded away from zero.
    pub fn simplex(&mut self, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| self.range(0.05, 1.0)).collect();
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|x| x / sum).collect()
    }
}

/// Dense random model with full-support transitions.
pub fn random_model(rng: &mut TestRng, ns: usize, na: usize, discount: f64) -> MdpModel {
    let transitions: Vec<Vec<Vec<f64>>> = (0..ns)
        .map(|_| (0..na).map(|_| rng.simplex(ns)).collect())
        .collect();
    let rewards: Vec<Vec<f64>> = (0..ns)
        .map(|_| (0..na).map(|_| rng.range(-1.0, 1.0)).collect())
        .collect();
    let model = MdpModel::from_dense(&transitions, &rewards, discount).unwrap();
    model.validate().unwrap();
    model
}

pub fn random_policy(rng: &mut TestRng, ns: usize, na: usize) -> Policy {
    let rows: Vec<Vec<f64>> = (0..ns).map(|_| rng.simplex(na)).collect();
    Policy::from_rows(&rows).unwrap()
}

/// Random tangent with zero row sums, scaled so that `pi +- eps` stays inside
/// the simplex.
pub fn random_tangent(rng: &mut TestRng, policy: &Policy) -> Table {
    let (ns, na) = (policy.num_states(), policy.num_actions());
    let mut t = Table::zeros(ns, na);
    for s in 0..ns {
        let raw: Vec<f64> = (0..na).map(|_| rng.range(-1.0, 1.0)).collect();
        let mean = raw.iter().sum::<f64>() / na as f64;
        let min_p = policy.row(s).iter().copied().fold(f64::INFINITY, f64::min);
        for a in 0..na {
            t.set(s, a, 0.5 * min_p * (raw[a] - mean));
        }
    }
    t
}

/// Dense `P[s][a][t]`.
pub fn dense_transitions(model: &MdpModel) -> Vec<Vec<Vec<f64>>> {
    let ns = model.num_states;
    let mut p = vec![vec![vec![0.0; ns]; model.num_actions]; ns];
    for (a, m) in model.transitions.iter().enumerate() {
        for (s, row) in m.to_dense().into_iter().enumerate() {
            p[s][a] = row;
        }
    }
    p
}

/// `P_pi[s][t] = sum_a pi[s][a] P[s][a][t]` by a plain triple loop.
pub fn oracle_p_pi(model: &MdpModel, policy: &Policy) -> Vec<Vec<f64>> {
    let p = dense_transitions(model);
    let ns = model.num_states;
    let mut out = vec![vec![0.0; ns]; ns];
    for s in 0..ns {
        for a in 0..model.num_actions {
            for t in 0..ns {
                out[s][t] += policy.prob(s, a) * p[s][a][t];
            }
        }
    }
    out
}

/// The divergence generator written out per family.
pub fn oracle_phi(family: Family, x: f64) -> f64 {
    match family {
        Family::Kl => x * x.ln(),
        Family::ReverseKl => -x.ln(),
        Family::Hellinger => 4.0 * (1.0 - x.sqrt()),
        Family::Alpha(a) => 4.0 / (1.0 - a * a) * (1.0 - x.powf((1.0 + a) / 2.0)),
    }
}

/// `r_pi - tau h_pi` for a uniform prior.
pub fn oracle_reward(model: &MdpModel, policy: &Policy, family: Family, tau: f64) -> Vec<f64> {
    let na = model.num_actions;
    let mu = 1.0 / na as f64;
    (0..model.num_states)
        .map(|s| {
            (0..na)
                .map(|a| {
                    let p = policy.prob(s, a);
                    p * model.rewards.get(s, a) - tau * mu * oracle_phi(family, p / mu)
                })
                .sum()
        })
        .collect()
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// `I - gamma M` (or its transpose).
fn resolvent_matrix(m: &[Vec<f64>], gamma: f64, transpose: bool) -> Vec<Vec<f64>> {
    let n = m.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let entry = if transpose { m[j][i] } else { m[i][j] };
                    f64::from(u8::from(i == j)) - gamma * entry
                })
                .collect()
        })
        .collect()
}

pub fn oracle_value(model: &MdpModel, policy: &Policy, family: Family, tau: f64) -> Vec<f64> {
    let p = oracle_p_pi(model, policy);
    let b = oracle_reward(model, policy, family, tau);
    gauss_solve(resolvent_matrix(&p, model.discount, false), b)
}

pub fn oracle_weights(model: &MdpModel, policy: &Policy, e: &[f64]) -> Vec<f64> {
    let p = oracle_p_pi(model, policy);
    gauss_solve(resolvent_matrix(&p, model.discount, true), e.to_vec())
}

/// Value by fixed-point iteration `v <- b + gamma P_pi v`.
pub fn value_iteration(
    model: &MdpModel,
    policy: &Policy,
    family: Family,
    tau: f64,
    sweeps: usize,
) -> Vec<f64> {
    let p = oracle_p_pi(model, policy);
    let b = oracle_reward(model, policy, family, tau);
    let mut v = vec![0.0; b.len()];
    for _ in 0..sweeps {
        v = (0..b.len())
            .map(|s| b[s] + model.discount * p[s].iter().zip(&v).map(|(x, y)| x * y).sum::<f64>())
            .collect();
    }
    v
}

/// `q[s][a] = r[s][a] + gamma sum_t P[s][a][t] v[t]`.
pub fn oracle_q(model: &MdpModel, v: &[f64]) -> Vec<Vec<f64>> {
    let p = dense_transitions(model);
    (0..model.num_states)
        .map(|s| {
            (0..model.num_actions)
                .map(|a| {
                    model.rewards.get(s, a)
                        + model.discount * p[s][a].iter().zip(v).map(|(x, y)| x * y).sum::<f64>()
                })
                .collect()
        })
        .collect()
}

/// Closed-form KL step with a uniform prior,
/// `pi' ~ mu^eta pi^(1-eta) exp(eta q / tau)`, evaluated with a max shift.
pub fn oracle_kl_step(model: &MdpModel, policy: &Policy, tau: f64, eta: f64) -> Vec<Vec<f64>> {
    let v = oracle_value(model, policy, Family::Kl, tau);
    let q = oracle_q(model, &v);
    let mu = 1.0 / model.num_actions as f64;
    q.iter()
        .enumerate()
        .map(|(s, row)| {
            let logits: Vec<f64> = row
                .iter()
                .enumerate()
                .map(|(a, qa)| {
                    eta * mu.ln() + (1.0 - eta) * policy.prob(s, a).ln() + eta * qa / tau
                })
                .collect();
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let z: f64 = w.iter().sum();
            w.iter().map(|x| x / z).collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}
