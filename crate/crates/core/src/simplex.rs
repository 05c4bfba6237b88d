//! Per-state multiplier equation `sum_a mu_a psi(c + x_a) = 1`.
//!
//! `psi` is strictly decreasing on `(L, +inf)`, blows up at `L` and vanishes at
//! infinity, so the left-hand side `g(c)` is strictly decreasing in `c` and the
//! root is unique. The root is bracketed by
//!
//! ```text
//! lo = max{ L - min_i x_i, min_i (psi^{-1}(1/(k mu_i)) - x_i) }
//! hi =                     max_i (psi^{-1}(1/(k mu_i)) - x_i)
//! ```
//!
//! and found by plain bisection. The search runs on the shifts `x_a - min x`
//! so that `c + x_a` stays well scaled even when the shifts are in the
//! thousands (small `tau`); the root is translated back afterwards.

use crate::error::{Error, Result};
use crate::regularizer::Family;
use crate::table::POLICY_FLOOR;

/// Hard cap on bisection steps.
pub const MAX_BISECTION_STEPS: usize = 200;

/// A strictly decreasing map `psi: (L, inf) -> (0, inf)` together with its
/// inverse.
pub trait DecreasingMap: Sync {
    fn psi(&self, y: f64) -> f64;
    fn psi_inverse(&self, x: f64) -> f64;
    /// `L`; `f64::NEG_INFINITY` when `psi` is defined on the whole line.
    fn lower_bound(&self) -> f64;
}

impl DecreasingMap for Family {
    fn psi(&self, y: f64) -> f64 {
        self.psi_unchecked(y)
    }

    fn psi_inverse(&self, x: f64) -> f64 {
        -self.phi_prime_unchecked(x)
    }

    fn lower_bound(&self) -> f64 {
        Family::lower_bound(*self)
    }
}

/// A [`DecreasingMap`] assembled from closures.
pub struct CustomMap<F, G> {
    pub psi: F,
    pub inverse: G,
    pub lower_bound: f64,
}

impl<F, G> DecreasingMap for CustomMap<F, G>
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64 + Sync,
{
    fn psi(&self, y: f64) -> f64 {
        (self.psi)(y)
    }

    fn psi_inverse(&self, x: f64) -> f64 {
        (self.inverse)(x)
    }

    fn lower_bound(&self) -> f64 {
        self.lower_bound
    }
}

/// One state's multiplier equation.
#[derive(Clone, Debug)]
pub struct MultiplierProblem<'a, M: ?Sized> {
    weights: &'a [f64],
    shifts: Vec<f64>,
    map: &'a M,
}

/// Root of a [`MultiplierProblem`].
#[derive(Clone, Copy, Debug)]
pub struct MultiplierSolution {
    /// The root `c` of the original equation.
    pub root: f64,
    /// `min_a x_a`; the search ran on `x_a - offset`.
    pub offset: f64,
    /// Root of the shifted equation, `root + offset`.
    pub shifted_root: f64,
    /// `|g(root) - 1|` as evaluated on the shifted equation.
    pub residual: f64,
    pub steps: usize,
}

impl<'a, M: DecreasingMap + ?Sized> MultiplierProblem<'a, M> {
    pub fn new(weights: &'a [f64], shifts: Vec<f64>, map: &'a M) -> Result<Self> {
        if weights.is_empty() || weights.len() != shifts.len() {
            return Err(Error::Dimension(format!(
                "multiplier problem with {} weights and {} shifts",
                weights.len(),
                shifts.len()
            )));
        }
        if let Some(&w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::Domain {
                what: "multiplier weight",
                value: w,
            });
        }
        if let Some(&x) = shifts.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain {
                what: "multiplier shift",
                value: x,
            });
        }
        Ok(Self {
            weights,
            shifts,
            map,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    /// `g(c) = sum_a mu_a psi(c + x_a)`.
    pub fn g(&self, c: f64) -> f64 {
        g_at(self.weights, &self.shifts, self.map, c, 0.0)
    }

    /// Bracket `[lo, hi]` containing the root, on the unshifted equation.
    pub fn bracket(&self) -> (f64, f64) {
        bracket_of(self.weights, &self.shifts, self.map, 0.0)
    }

    /// Bisection for the root with `|g(c) - 1| <= tol`.
    pub fn solve(&self, tol: f64) -> Result<MultiplierSolution> {
        let offset = self.shifts.iter().copied().fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi) = bracket_of(self.weights, &self.shifts, self.map, offset);
        let eval = |c: f64| g_at(self.weights, &self.shifts, self.map, c, offset) - 1.0;
        let finish = |c: f64, residual: f64, steps: usize| MultiplierSolution {
            root: c - offset,
            offset,
            shifted_root: c,
            residual,
            steps,
        };

        if lo >= hi {
            return Ok(finish(hi, eval(hi).abs(), 0));
        }

        let mut best = (f64::INFINITY, hi);
        let mut steps = 0;
        while steps < MAX_BISECTION_STEPS {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                break;
            }
            steps += 1;
            let val = eval(mid);
            if val.abs() < best.0 {
                best = (val.abs(), mid);
            }
            if val.abs() <= tol {
                return Ok(finish(mid, val.abs(), steps));
            }
            if val > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // interval exhausted: accept the endpoint if it meets the tolerance
        let hi_res = eval(hi).abs();
        if hi_res < best.0 {
            best = (hi_res, hi);
        }
        if best.0 <= tol {
            Ok(finish(best.1, best.0, steps))
        } else {
            Err(Error::Convergence {
                steps,
                residual: best.0,
            })
        }
    }

    /// Row `pi_a = mu_a psi(c + x_a)` for a solved multiplier, computed on the
    /// shifted arguments. Entries are kept at or above the policy floor.
    pub fn row_from(&self, solution: &MultiplierSolution, out: &mut [f64]) {
        for ((o, &w), &x) in out.iter_mut().zip(self.weights).zip(&self.shifts) {
            let p = w * self.map.psi(solution.shifted_root + (x - solution.offset));
            *o = p.max(POLICY_FLOOR);
        }
    }

    /// Solves the multiplier and returns the updated probability row.
    pub fn apply_update_row(&self, tol: f64) -> Result<Vec<f64>> {
        let sol = self.solve(tol)?;
        let mut row = vec![0.0; self.len()];
        self.row_from(&sol, &mut row);
        Ok(row)
    }
}

fn g_at<M: DecreasingMap + ?Sized>(
    weights: &[f64],
    shifts: &[f64],
    map: &M,
    c: f64,
    offset: f64,
) -> f64 {
    weights
        .iter()
        .zip(shifts)
        .map(|(&w, &x)| w * map.psi(c + (x - offset)))
        .sum()
}

fn bracket_of<M: DecreasingMap + ?Sized>(
    weights: &[f64],
    shifts: &[f64],
    map: &M,
    offset: f64,
) -> (f64, f64) {
    let k = weights.len() as f64;
    let mut min_shift = f64::INFINITY;
    let mut min_term = f64::INFINITY;
    let mut max_term = f64::NEG_INFINITY;
    for (&w, &x) in weights.iter().zip(shifts) {
        let x = x - offset;
        let term = map.psi_inverse(1.0 / (k * w)) - x;
        min_shift = min_shift.min(x);
        min_term = min_term.min(term);
        max_term = max_term.max(term);
    }
    let l = map.lower_bound();
    let lo = if l == f64::NEG_INFINITY {
        min_term
    } else {
        min_term.max(l - min_shift)
    };
    (lo, max_term)
}
