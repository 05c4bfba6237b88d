//! Finite MDP model and the quantities a policy induces on it: the state
//! transition matrix `P_pi`, the regularized reward `r_pi - tau h_pi`, the
//! value `v_pi = (I - gamma P_pi)^{-1}(r_pi - tau h_pi)`, the state weights
//! `w_pi = (I - gamma P_pi^T)^{-1} e`, the objective `E = e^T v_pi` and its
//! directional derivative along simplex tangents.

use serde::{Deserialize, Serialize};

use crate::compensated::Dd;
use crate::error::{Error, Result};
use crate::linsolve::{bicgstab, DenseLu};
use crate::regularizer::RegularizerSpec;
use crate::sparse::CsrMatrix;
use crate::table::{Policy, Table};

/// Row-sum tolerance for transition rows and tangent rows.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Where a model came from, when it was generated rather than loaded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub seed: u64,
    pub support_size: u64,
    /// Identifier of the random stream, e.g. `chacha20-le64-v1`.
    pub rng: String,
}

/// A finite MDP `(S, A, P, r, gamma)`. Transitions are stored as one CSR
/// matrix per action, `transitions[a][s][t] = P(t | s, a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpModel {
    pub num_states: usize,
    pub num_actions: usize,
    pub transitions: Vec<CsrMatrix>,
    pub rewards: Table,
    pub discount: f64,
    #[serde(default)]
    pub generator: Option<GeneratorInfo>,
}

impl MdpModel {
    /// Builds a model from dense `P[s][a][t]` and `r[s][a]`. Does not validate.
    pub fn from_dense(
        transitions: &[Vec<Vec<f64>>],
        rewards: &[Vec<f64>],
        discount: f64,
    ) -> Result<Self> {
        let num_states = transitions.len();
        let num_actions = transitions.first().map_or(0, Vec::len);
        let mut per_action = Vec::with_capacity(num_actions);
        for a in 0..num_actions {
            let rows: Vec<Vec<f64>> = transitions
                .iter()
                .map(|sa| {
                    sa.get(a)
                        .cloned()
                        .ok_or_else(|| Error::Dimension("ragged transition tensor".into()))
                })
                .collect::<Result<_>>()?;
            if rows.iter().any(|r| r.len() != num_states) {
                return Err(Error::Dimension(
                    "transition rows must have |S| entries".into(),
                ));
            }
            per_action.push(CsrMatrix::from_dense(&rows)?);
        }
        let rewards = Table::from_rows(rewards)?;
        if rewards.rows() != num_states || rewards.cols() != num_actions {
            return Err(Error::Dimension("reward table must be |S| x |A|".into()));
        }
        Ok(Self {
            num_states,
            num_actions,
            transitions: per_action,
            rewards,
            discount,
            generator: None,
        })
    }

    /// Checks the discount range, nonnegativity and row sums of every
    /// transition row.
    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::DiscountRange(self.discount));
        }
        if self.num_states == 0 || self.num_actions == 0 {
            return Err(Error::Dimension(
                "model needs at least one state and action".into(),
            ));
        }
        if self.transitions.len() != self.num_actions {
            return Err(Error::Dimension(format!(
                "{} transition matrices for {} actions",
                self.transitions.len(),
                self.num_actions
            )));
        }
        if self.rewards.rows() != self.num_states || self.rewards.cols() != self.num_actions {
            return Err(Error::Dimension("reward table must be |S| x |A|".into()));
        }
        if let Some(&r) = self.rewards.as_slice().iter().find(|r| !r.is_finite()) {
            return Err(Error::Domain {
                what: "reward",
                value: r,
            });
        }
        for (a, p) in self.transitions.iter().enumerate() {
            if p.nrows != self.num_states || p.ncols != self.num_states {
                return Err(Error::Dimension(format!(
                    "transition matrix {a} is not |S| x |S|"
                )));
            }
            for s in 0..self.num_states {
                let mut sum = 0.0;
                for (t, v) in p.row(s) {
                    if !(v >= 0.0) {
                        return Err(Error::NegativeProbability {
                            state: s,
                            action: a,
                            target: t,
                            value: v,
                        });
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::RowSum {
                        state: s,
                        action: a,
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.num_states() != self.num_states || policy.num_actions() != self.num_actions {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, model is {}x{}",
                policy.num_states(),
                policy.num_actions(),
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }

    /// Advantages `q[s][a] - v[s]`.
    pub fn advantages(&self, v: &[f64]) -> Table {
        let mut adv = self.q_values(v);
        for s in 0..self.num_states {
            for x in adv.row_mut(s) {
                *x -= v[s];
            }
        }
        adv
    }

    /// Advantage gaps `A[s][a] - max_b A[s][b]` from a plain value vector.
    /// Every consumer of advantages is invariant to per-state constants, and
    /// the gaps are what small `tau` amplifies, so they are formed before the
    /// final rounding.
    pub(crate) fn advantage_gaps(&self, v: &[f64]) -> Table {
        let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
        let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
        self.precise_advantage_gaps(&centered, &vec![0.0; v.len()])
    }

    /// Advantage gaps for `v = hi + lo`, accumulated in double-double and
    /// rounded once at the end.
    pub(crate) fn precise_advantage_gaps(&self, hi: &[f64], lo: &[f64]) -> Table {
        let (ns, na) = (self.num_states, self.num_actions);
        let mut adv = vec![Dd::default(); ns * na];
        for (a, p) in self.transitions.iter().enumerate() {
            for s in 0..ns {
                let mut pv = Dd::default();
                for (t, w) in p.row(s) {
                    pv = pv.add_prod_dd(
                        w,
                        Dd {
                            hi: hi[t],
                            lo: lo[t],
                        },
                    );
                }
                adv[s * na + a] = pv.scale(self.discount).add(self.rewards.get(s, a)).add_dd(
                    Dd {
                        hi: hi[s],
                        lo: lo[s],
                    }
                    .neg(),
                );
            }
        }
        let mut gaps = Table::zeros(ns, na);
        for s in 0..ns {
            let row = &adv[s * na..(s + 1) * na];
            let top = row.iter().copied().fold(row[0], |m, x| {
                if x.add_dd(m.neg()).value() > 0.0 {
                    x
                } else {
                    m
                }
            });
            for (g, x) in gaps.row_mut(s).iter_mut().zip(row) {
                *g = x.add_dd(top.neg()).value();
            }
        }
        gaps
    }

    /// `q[s][a] = r[s][a] + gamma (P^a v)[s]`.
    pub fn q_values(&self, v: &[f64]) -> Table {
        let mut q = self.rewards.clone();
        let mut pv = vec![0.0; self.num_states];
        for (a, p) in self.transitions.iter().enumerate() {
            p.mul_vec(v, &mut pv);
            for (s, &x) in pv.iter().enumerate() {
                let cur = q.get(s, a);
                q.set(s, a, cur + self.discount * x);
            }
        }
        q
    }
}

/// Free-function form of [`MdpModel::validate`].
pub fn validate_model(model: &MdpModel) -> Result<()> {
    model.validate()
}

/// `(P_pi)[s][t] = sum_a pi[s][a] P[s][a][t]`.
pub fn policy_transition(model: &MdpModel, policy: &Policy) -> Result<CsrMatrix> {
    model.check_policy(policy)?;
    let n = model.num_states;
    let mut acc = vec![0.0; n];
    let mut touched = vec![false; n];
    let mut cols = Vec::new();
    let mut rows = Vec::with_capacity(n);
    for s in 0..n {
        cols.clear();
        for (a, p) in model.transitions.iter().enumerate() {
            let weight = policy.prob(s, a);
            for (t, v) in p.row(s) {
                if !touched[t] {
                    touched[t] = true;
                    cols.push(t);
                }
                acc[t] += weight * v;
            }
        }
        cols.sort_unstable();
        let row: Vec<(usize, f64)> = cols
            .iter()
            .map(|&t| {
                touched[t] = false;
                (t, std::mem::take(&mut acc[t]))
            })
            .collect();
        rows.push(row);
    }
    CsrMatrix::from_rows(n, &rows)
}

/// `r_pi - tau h_pi`.
pub fn policy_reward(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    tau: f64,
) -> Result<Vec<f64>> {
    model.check_policy(policy)?;
    let reward = (0..model.num_states).map(|s| {
        policy
            .row(s)
            .iter()
            .zip(model.rewards.row(s))
            .map(|(p, r)| p * r)
            .sum::<f64>()
    });
    if tau == 0.0 {
        return Ok(reward.collect());
    }
    let h = spec.entropy(policy)?;
    Ok(reward.zip(h).map(|(r, h)| r - tau * h).collect())
}

/// Which linear solver backs the policy evaluation systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinearSolverKind {
    /// Dense LU up to `dense_threshold` states, Bi-CGSTAB above.
    Auto,
    Dense,
    BiCgStab,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSolverConfig {
    pub kind: LinearSolverKind,
    /// Relative residual target for Bi-CGSTAB.
    pub tol: f64,
    /// Bi-CGSTAB step cap; `None` means `10 |S|`.
    pub max_iters: Option<usize>,
    pub dense_threshold: usize,
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        Self {
            kind: LinearSolverKind::Auto,
            tol: 1e-12,
            max_iters: None,
            dense_threshold: 1024,
        }
    }
}

impl LinearSolverConfig {
    pub fn dense() -> Self {
        Self {
            kind: LinearSolverKind::Dense,
            ..Self::default()
        }
    }

    pub fn bicgstab() -> Self {
        Self {
            kind: LinearSolverKind::BiCgStab,
            ..Self::default()
        }
    }

    fn resolve(&self, n: usize) -> SolverKind {
        match self.kind {
            LinearSolverKind::Dense => SolverKind::Dense,
            LinearSolverKind::BiCgStab => SolverKind::BiCgStab,
            LinearSolverKind::Auto if n <= self.dense_threshold => SolverKind::Dense,
            LinearSolverKind::Auto => SolverKind::BiCgStab,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    Dense,
    BiCgStab,
}

/// What a single linear solve did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueSolveReport {
    pub solver_kind: SolverKind,
    /// Bi-CGSTAB steps of the main solve; 0 for dense solves.
    pub steps: usize,
    /// Bi-CGSTAB steps spent on refinement solves; 0 for dense solves.
    pub refinement_steps: usize,
    /// Relative residual of the main solve.
    pub residual: f64,
}

/// `I - gamma P_pi` (or its transpose), prepared for repeated solves.
enum Resolvent<'a> {
    Dense(DenseLu),
    Iterative {
        p_pi: &'a CsrMatrix,
        discount: f64,
        transposed: bool,
        tol: f64,
        max_iters: usize,
    },
}

impl<'a> Resolvent<'a> {
    fn new(
        p_pi: &'a CsrMatrix,
        discount: f64,
        transposed: bool,
        cfg: &LinearSolverConfig,
    ) -> Result<Self> {
        let n = p_pi.nrows;
        Ok(match cfg.resolve(n) {
            SolverKind::Dense => {
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    m[i * n + i] = 1.0;
                }
                for s in 0..n {
                    for (t, v) in p_pi.row(s) {
                        let idx = if transposed { t * n + s } else { s * n + t };
                        m[idx] -= discount * v;
                    }
                }
                Resolvent::Dense(DenseLu::new(n, &m)?)
            }
            SolverKind::BiCgStab => Resolvent::Iterative {
                p_pi,
                discount,
                transposed,
                tol: cfg.tol,
                max_iters: cfg.max_iters.unwrap_or(10 * n),
            },
        })
    }

    fn kind(&self) -> SolverKind {
        match self {
            Resolvent::Dense(_) => SolverKind::Dense,
            Resolvent::Iterative { .. } => SolverKind::BiCgStab,
        }
    }

    fn apply(&self, p_pi: &CsrMatrix, discount: f64, transposed: bool, x: &[f64], y: &mut [f64]) {
        if transposed {
            p_pi.mul_vec_transposed(x, y);
        } else {
            p_pi.mul_vec(x, y);
        }
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - discount * *yi;
        }
    }

    /// Returns the solution and the number of Bi-CGSTAB steps taken.
    fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, usize)> {
        match self {
            Resolvent::Dense(lu) => Ok((lu.solve(b)?, 0)),
            Resolvent::Iterative {
                p_pi,
                discount,
                transposed,
                tol,
                max_iters,
            } => {
                let apply =
                    |x: &[f64], y: &mut [f64]| self.apply(p_pi, *discount, *transposed, x, y);
                let sol = bicgstab(apply, b, *tol, *max_iters)?;
                Ok((sol.x, sol.steps))
            }
        }
    }

    /// Relative residual `||b - A x|| / ||b||` in plain arithmetic.
    fn residual(
        &self,
        p_pi: &CsrMatrix,
        discount: f64,
        transposed: bool,
        x: &[f64],
        b: &[f64],
    ) -> f64 {
        let mut ax = vec![0.0; x.len()];
        self.apply(p_pi, discount, transposed, x, &mut ax);
        let r: f64 = ax
            .iter()
            .zip(b)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt();
        let b_norm = dot(b, b).sqrt();
        if b_norm == 0.0 {
            r
        } else {
            r / b_norm
        }
    }
}

/// Solves `(I - gamma P_pi) x = b`, or the transposed system, in plain
/// arithmetic.
fn solve_resolvent(
    p_pi: &CsrMatrix,
    discount: f64,
    b: &[f64],
    transposed: bool,
    cfg: &LinearSolverConfig,
) -> Result<(Vec<f64>, ValueSolveReport)> {
    let resolvent = Resolvent::new(p_pi, discount, transposed, cfg)?;
    let (x, steps) = resolvent.solve(b)?;
    let residual = resolvent.residual(p_pi, discount, transposed, &x, b);
    Ok((
        x,
        ValueSolveReport {
            solver_kind: resolvent.kind(),
            steps,
            refinement_steps: 0,
            residual,
        },
    ))
}

/// `v_pi = (I - gamma P_pi)^{-1} (r_pi - tau h_pi)`.
pub fn value_function(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    tau: f64,
    cfg: &LinearSolverConfig,
) -> Result<(Vec<f64>, ValueSolveReport)> {
    let cv = centered_value_function(model, policy, spec, tau, cfg)?;
    let v = cv
        .dev
        .iter()
        .zip(&cv.dev_lo)
        .map(|(h, l)| (h + cv.offset) + l)
        .collect();
    Ok((v, cv.report))
}

/// Correction solves applied to the value deviation.
const REFINEMENT_ROUNDS: usize = 2;

/// The value function split as `v_pi = (dev + dev_lo) + offset`.
pub(crate) struct CenteredValue {
    pub dev: Vec<f64>,
    /// Low-order part of the deviation, below the rounding level of `dev`.
    pub dev_lo: Vec<f64>,
    pub offset: f64,
    pub report: ValueSolveReport,
}

impl CenteredValue {
    /// `e^T v_pi`.
    pub fn objective(&self, weight_e: &[f64]) -> f64 {
        let mut acc = Dd::default();
        for ((e, h), l) in weight_e.iter().zip(&self.dev).zip(&self.dev_lo) {
            acc = acc.add_prod(*e, *h).add(e * l).add_prod(*e, self.offset);
        }
        acc.value()
    }

    pub fn advantage_gaps(&self, model: &MdpModel) -> Table {
        model.precise_advantage_gaps(&self.dev, &self.dev_lo)
    }
}

/// Solves for the value in the form `offset + dev` with
/// `offset = mean(b) / (1 - gamma)` for `b = r_pi - tau h_pi`, so that
/// `(I - gamma P_pi) dev = b - mean(b)`. The deviation is refined against a
/// double-double residual that applies `P_pi` through the per-action
/// matrices, which makes the advantages `q - v` accurate to about their own
/// rounding level even when they are later divided by a small `tau`.
pub(crate) fn centered_value_function(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    tau: f64,
    cfg: &LinearSolverConfig,
) -> Result<CenteredValue> {
    model.check_policy(policy)?;
    let n = model.num_states;
    let h = if tau == 0.0 {
        vec![0.0; n]
    } else {
        spec.entropy(policy)?
    };
    let mut b: Vec<Dd> = (0..n)
        .map(|s| {
            let mut acc = Dd::default();
            for (p, r) in policy.row(s).iter().zip(model.rewards.row(s)) {
                acc = acc.add_prod(*p, *r);
            }
            acc.add_prod(-tau, h[s])
        })
        .collect();
    let mean = b
        .iter()
        .fold(Dd::default(), |acc, x| acc.add_dd(*x))
        .scale(1.0 / n as f64);
    for x in b.iter_mut() {
        *x = x.add_dd(mean.neg());
    }

    let p_pi = policy_transition(model, policy)?;
    let resolvent = Resolvent::new(&p_pi, model.discount, false, cfg)?;
    let b_hi: Vec<f64> = b.iter().map(|x| x.value()).collect();
    let offset = mean.value() / (1.0 - model.discount);
    let (dev, steps, residual) = match resolvent {
        Resolvent::Dense(_) => {
            let (dev, steps) = resolvent.solve(&b_hi)?;
            let residual = resolvent.residual(&p_pi, model.discount, false, &dev, &b_hi);
            (dev, steps, residual)
        }
        // Krylov iterations converge much faster on the uncentered system,
        // whose dominant constant component is an exact eigenvector. The
        // refinement below restores the accuracy of the deviation.
        Resolvent::Iterative { .. } => {
            let raw: Vec<f64> = b_hi.iter().map(|x| x + mean.value()).collect();
            let (v, steps) = resolvent.solve(&raw)?;
            let residual = resolvent.residual(&p_pi, model.discount, false, &v, &raw);
            (v.iter().map(|x| x - offset).collect(), steps, residual)
        }
    };
    let mut x: Vec<Dd> = dev.into_iter().map(|h| Dd { hi: h, lo: 0.0 }).collect();
    let mut refinement_steps = 0;
    for _ in 0..REFINEMENT_ROUNDS {
        let r = precise_value_residual(model, policy, &b, &x);
        if r.iter().all(|&v| v == 0.0) {
            break;
        }
        let (delta, k) = resolvent.solve(&r)?;
        refinement_steps += k;
        for (xi, d) in x.iter_mut().zip(delta) {
            *xi = xi.add(d);
        }
    }
    Ok(CenteredValue {
        dev: x.iter().map(|d| d.hi).collect(),
        dev_lo: x.iter().map(|d| d.lo).collect(),
        offset,
        report: ValueSolveReport {
            solver_kind: resolvent.kind(),
            steps,
            refinement_steps,
            residual,
        },
    })
}

/// `b - (x - gamma P_pi x)` in double-double, with `P_pi x` formed as
/// `sum_a pi[s][a] (P^a x)[s]`.
fn precise_value_residual(model: &MdpModel, policy: &Policy, b: &[Dd], x: &[Dd]) -> Vec<f64> {
    (0..model.num_states)
        .map(|s| {
            let mut ppx = Dd::default();
            for (a, p) in model.transitions.iter().enumerate() {
                let pi = policy.prob(s, a);
                if pi == 0.0 {
                    continue;
                }
                let mut px = Dd::default();
                for (t, w) in p.row(s) {
                    px = px.add_prod_dd(w, x[t]);
                }
                ppx = ppx.add_prod_dd(pi, px);
            }
            ppx.scale(model.discount)
                .add_dd(b[s])
                .add_dd(x[s].neg())
                .value()
        })
        .collect()
}

/// `w_pi = (I - gamma P_pi^T)^{-1} e`.
pub fn weight_vector(
    model: &MdpModel,
    policy: &Policy,
    weight_e: &[f64],
    cfg: &LinearSolverConfig,
) -> Result<(Vec<f64>, ValueSolveReport)> {
    if weight_e.len() != model.num_states {
        return Err(Error::Dimension(
            "weight vector e must have |S| entries".into(),
        ));
    }
    if let Some(&x) = weight_e.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::Domain {
            what: "state weight e",
            value: x,
        });
    }
    let p_pi = policy_transition(model, policy)?;
    solve_resolvent(&p_pi, model.discount, weight_e, true, cfg)
}

/// `E(pi) = e^T v_pi`.
pub fn objective(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    tau: f64,
    weight_e: &[f64],
    cfg: &LinearSolverConfig,
) -> Result<f64> {
    if weight_e.len() != model.num_states {
        return Err(Error::Dimension(
            "weight vector e must have |S| entries".into(),
        ));
    }
    let (v, _) = value_function(model, policy, spec, tau, cfg)?;
    Ok(dot(weight_e, &v))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The state weights `e`, the value `v_pi` and the weights `w_pi` of one
/// policy, evaluated together.
#[derive(Clone, Debug)]
pub struct WeightedObjectiveContext {
    pub weight_e: Vec<f64>,
    pub value_v: Vec<f64>,
    pub weight_w: Vec<f64>,
}

impl WeightedObjectiveContext {
    pub fn evaluate(
        model: &MdpModel,
        policy: &Policy,
        spec: &RegularizerSpec,
        tau: f64,
        weight_e: &[f64],
        cfg: &LinearSolverConfig,
    ) -> Result<Self> {
        let (value_v, _) = value_function(model, policy, spec, tau, cfg)?;
        let (weight_w, _) = weight_vector(model, policy, weight_e, cfg)?;
        Ok(Self {
            weight_e: weight_e.to_vec(),
            value_v,
            weight_w,
        })
    }

    pub fn objective(&self) -> f64 {
        dot(&self.weight_e, &self.value_v)
    }
}

/// `d/dt E(pi + t eps)` at `t = 0` for a tangent `eps` whose rows sum to
/// zero:
///
/// ```text
/// sum_s w_s sum_a eps[s][a] (r[s][a] - tau phi'(pi/mu) - v_s + gamma (P^a v)_s)
/// ```
pub fn directional_derivative(
    model: &MdpModel,
    policy: &Policy,
    spec: &RegularizerSpec,
    tau: f64,
    weight_e: &[f64],
    tangent: &Table,
    cfg: &LinearSolverConfig,
) -> Result<f64> {
    policy.check_shape(tangent)?;
    for s in 0..tangent.rows() {
        let sum: f64 = tangent.row(s).iter().sum();
        if sum.abs() > STOCHASTIC_TOL {
            return Err(Error::Tangent { state: s, sum });
        }
    }
    let ctx = WeightedObjectiveContext::evaluate(model, policy, spec, tau, weight_e, cfg)?;
    let adv = model.advantage_gaps(&ctx.value_v);
    let mut total = 0.0;
    for s in 0..model.num_states {
        let mut row = 0.0;
        for (a, &eps) in tangent.row(s).iter().enumerate() {
            if eps == 0.0 {
                continue;
            }
            let theta = if tau == 0.0 {
                0.0
            } else {
                tau * spec.dual_coordinate(s, a, policy.prob(s, a))
            };
            row += eps * (adv.get(s, a) - theta);
        }
        total += ctx.weight_w[s] * row;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizer::Family;

    fn one_state() -> MdpModel {
        MdpModel::from_dense(&[vec![vec![1.0]]], &[vec![1.0]], 0.5).unwrap()
    }

    #[test]
    fn validation_errors() {
        one_state().validate().unwrap();

        let bad_sum = MdpModel::from_dense(
            &[vec![vec![0.5, 0.4]], vec![vec![0.5, 0.5]]],
            &[vec![0.0], vec![0.0]],
            0.9,
        )
        .unwrap();
        assert!(matches!(
            bad_sum.validate(),
            Err(Error::RowSum {
                state: 0,
                action: 0,
                ..
            })
        ));

        let mut bad_gamma = one_state();
        bad_gamma.discount = 1.0;
        assert!(matches!(bad_gamma.validate(), Err(Error::DiscountRange(_))));

        let negative = MdpModel::from_dense(
            &[vec![vec![1.5, -0.5]], vec![vec![0.0, 1.0]]],
            &[vec![0.0], vec![0.0]],
            0.9,
        )
        .unwrap();
        assert!(matches!(
            negative.validate(),
            Err(Error::NegativeProbability { target: 1, .. })
        ));
    }

    #[test]
    fn policy_transition_small_cases() {
        let m = one_state();
        let p = policy_transition(&m, &Policy::uniform(1, 1)).unwrap();
        assert_eq!(p.to_dense(), vec![vec![1.0]]);

        // action 0 goes to the other state, action 1 stays
        let m = MdpModel::from_dense(
            &[
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ],
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
            0.9,
        )
        .unwrap();
        let p = policy_transition(&m, &Policy::uniform(2, 2)).unwrap();
        assert_eq!(p.to_dense(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
    }

    #[test]
    fn scalar_value_and_weight() {
        let m = one_state();
        let spec = RegularizerSpec::uniform(Family::Kl, 1, 1);
        let pi = Policy::uniform(1, 1);
        let cfg = LinearSolverConfig::default();
        let (v, report) = value_function(&m, &pi, &spec, 0.0, &cfg).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-15);
        assert_eq!(report.solver_kind, SolverKind::Dense);
        let (w, _) = weight_vector(&m, &pi, &[3.0], &cfg).unwrap();
        assert!((w[0] - 6.0).abs() < 1e-14);
        let e = objective(&m, &pi, &spec, 0.0, &[1.0], &cfg).unwrap();
        assert!((e - 2.0).abs() < 1e-15);
        let (v, report) =
            value_function(&m, &pi, &spec, 0.0, &LinearSolverConfig::bicgstab()).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12);
        assert_eq!(report.solver_kind, SolverKind::BiCgStab);
    }

    #[test]
    fn weight_vector_rejects_nonpositive_e() {
        let m = one_state();
        let pi = Policy::uniform(1, 1);
        assert!(weight_vector(&m, &pi, &[0.0], &LinearSolverConfig::default()).is_err());
    }

    #[test]
    fn tangent_rows_must_sum_to_zero() {
        let m = one_state();
        let spec = RegularizerSpec::uniform(Family::Kl, 1, 1);
        let eps = Table::filled(1, 1, 0.1);
        let err = directional_derivative(
            &m,
            &Policy::uniform(1, 1),
            &spec,
            0.1,
            &[1.0],
            &eps,
            &LinearSolverConfig::default(),
        );
        assert!(matches!(err, Err(Error::Tangent { .. })));
    }
}
