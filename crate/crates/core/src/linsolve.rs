//! Linear solvers for the policy evaluation systems `(I - gamma P_pi) v = b`
//! and their transposes: an unpreconditioned Bi-CGSTAB for large sparse
//! models and a dense LU route for small ones.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a successful [`bicgstab`] run.
#[derive(Clone, Debug)]
pub struct IterativeSolution {
    pub x: Vec<f64>,
    pub steps: usize,
    /// True relative residual `||A x - b|| / ||b||`.
    pub residual: f64,
}

/// Stabilized bi-conjugate gradient for a nonsymmetric system given only
/// through its action `apply(x, y)` computing `y = A x`.
///
/// Starts from `x = 0`. Convergence is declared on the recursive residual and
/// then confirmed against the true residual; if the two disagree the
/// iteration restarts from the current iterate. Every outer step (two
/// matrix-vector products) counts toward `max_iters`.
///
/// The shadow residual is the initial residual with a fixed entrywise
/// perturbation. The unperturbed choice breaks down on policy evaluation
/// systems with a constant right-hand side: the constant vector is a left
/// eigenvector of `I - gamma P_pi^T`, which makes `r_hat . r` vanish after
/// one step.
pub fn bicgstab<F>(apply: F, b: &[f64], tol: f64, max_iters: usize) -> Result<IterativeSolution>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(IterativeSolution {
            x: vec![0.0; n],
            steps: 0,
            residual: 0.0,
        });
    }

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut r_hat = vec![0.0; n];
    shadow(&r, &mut r_hat);
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut best = 1.0f64;
    let mut steps = 0;

    let true_residual = |x: &[f64], scratch: &mut [f64]| -> f64 {
        apply(x, scratch);
        let diff: f64 = scratch
            .iter()
            .zip(b)
            .map(|(ax, bi)| (bi - ax) * (bi - ax))
            .sum();
        diff.sqrt() / b_norm
    };

    while steps < max_iters {
        steps += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            // breakdown: restart with the true residual
            apply(&x, &mut t);
            r.iter_mut()
                .zip(b)
                .zip(&t)
                .for_each(|((ri, bi), ti)| *ri = bi - ti);
            if !r.iter().all(|v| v.is_finite()) {
                break;
            }
            shadow(&r, &mut r_hat);
            p.iter_mut().for_each(|v| *v = 0.0);
            v.iter_mut().for_each(|v| *v = 0.0);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        apply(&p, &mut v);
        alpha = rho / dot(&r_hat, &v);
        if !alpha.is_finite() {
            restart(&apply, b, &x, &mut r, &mut r_hat, &mut p, &mut v);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            continue;
        }
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / b_norm <= tol {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            let res = true_residual(&x, &mut t);
            best = best.min(res);
            if res <= tol {
                return Ok(IterativeSolution {
                    x,
                    steps,
                    residual: res,
                });
            }
            restart(&apply, b, &x, &mut r, &mut r_hat, &mut p, &mut v);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            continue;
        }
        apply(&s, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        if !omega.is_finite() {
            omega = 0.0;
        }
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        let rec = norm(&r) / b_norm;
        if rec <= tol {
            let res = true_residual(&x, &mut t);
            best = best.min(res);
            if res <= tol {
                return Ok(IterativeSolution {
                    x,
                    steps,
                    residual: res,
                });
            }
            restart(&apply, b, &x, &mut r, &mut r_hat, &mut p, &mut v);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            continue;
        }
        best = best.min(rec);
        if omega == 0.0 {
            restart(&apply, b, &x, &mut r, &mut r_hat, &mut p, &mut v);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
        }
    }
    Err(Error::IterativeSolveFailure {
        steps,
        residual: best,
    })
}

fn restart<F: Fn(&[f64], &mut [f64])>(
    apply: &F,
    b: &[f64],
    x: &[f64],
    r: &mut [f64],
    r_hat: &mut [f64],
    p: &mut [f64],
    v: &mut [f64],
) {
    apply(x, v);
    for i in 0..b.len() {
        r[i] = b[i] - v[i];
    }
    shadow(r, r_hat);
    p.iter_mut().for_each(|e| *e = 0.0);
    v.iter_mut().for_each(|e| *e = 0.0);
}

/// `r_hat[i] = r[i] (1 + u_i / 2)` with fixed `u_i` in `[-1, 1)` from a
/// Weyl sequence, so that runs stay deterministic.
fn shadow(r: &[f64], r_hat: &mut [f64]) {
    for (i, (h, ri)) in r_hat.iter_mut().zip(r).enumerate() {
        let bits = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11;
        let u = bits as f64 * (2.0 / (1u64 << 53) as f64) - 1.0;
        *h = ri * (1.0 + 0.5 * u);
    }
}

/// LU factorization of a dense row-major matrix, reusable across right-hand
/// sides.
pub struct DenseLu {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseLu {
    pub fn new(n: usize, matrix: &[f64]) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::Dimension(format!(
                "dense solve expects a {n}x{n} matrix"
            )));
        }
        let lu = DMatrix::from_row_slice(n, n, matrix).lu();
        if !lu.is_invertible() {
            return Err(Error::Dimension("singular matrix in dense solve".into()));
        }
        Ok(Self { lu })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.lu.l().nrows() {
            return Err(Error::Dimension(
                "right-hand side length differs from matrix size".into(),
            ));
        }
        self.lu
            .solve(&DVector::from_column_slice(b))
            .map(|x| x.as_slice().to_vec())
            .ok_or_else(|| Error::Dimension("singular matrix in dense solve".into()))
    }
}

/// Solves the dense row-major system `A x = b` by LU with partial pivoting.
pub fn dense_solve(n: usize, matrix: Vec<f64>, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "dense solve expects a length-{n} rhs"
        )));
    }
    DenseLu::new(n, &matrix)?.solve(b)
}

/// Relative residual `||A x - b|| / ||b||` for a dense row-major `A`.
pub fn dense_residual(n: usize, matrix: &[f64], x: &[f64], b: &[f64]) -> f64 {
    let b_norm = norm(b);
    let mut acc = 0.0;
    for i in 0..n {
        let ax = dot(&matrix[i * n..(i + 1) * n], x);
        acc += (ax - b[i]) * (ax - b[i]);
    }
    if b_norm == 0.0 {
        acc.sqrt()
    } else {
        acc.sqrt() / b_norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn unit(rng: &mut ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn identity_converges_in_one_step() {
        let b = vec![1.0, -2.0, 3.5];
        let sol = bicgstab(|x, y| y.copy_from_slice(x), &b, 1e-12, 10).unwrap();
        assert!(sol.steps <= 1);
        assert_eq!(sol.x, b);
    }

    #[test]
    fn zero_rhs_is_free() {
        let sol = bicgstab(|x, y| y.copy_from_slice(x), &[0.0; 4], 1e-12, 10).unwrap();
        assert_eq!(sol.steps, 0);
        assert_eq!(sol.x, vec![0.0; 4]);
    }

    #[test]
    fn diagonally_dominant_matches_dense_lu() {
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            let mut off = 0.0;
            for j in 0..n {
                if i != j {
                    let v = unit(&mut rng) - 0.5;
                    a[i * n + j] = v;
                    off += v.abs();
                }
            }
            a[i * n + i] = off + 1.0;
        }
        let b: Vec<f64> = (0..n).map(|_| unit(&mut rng)).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = dot(&a[i * n..(i + 1) * n], x);
            }
        };
        let it = bicgstab(apply, &b, 1e-13, 500).unwrap();
        let lu = dense_solve(n, a.clone(), &b).unwrap();
        for (x, y) in it.x.iter().zip(&lu) {
            assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
        }
        assert!(dense_residual(n, &a, &lu, &b) < 1e-14);
    }

    #[test]
    fn constant_rhs_on_transposed_stochastic_system() {
        // Deterministic successor rows: P[s][next[s]] = 1. The constant vector
        // is a left eigenvector of I - gamma P^T.
        let n = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let next: Vec<usize> = (0..n)
            .map(|_| (rng.next_u64() % n as u64) as usize)
            .collect();
        let gamma = 0.99;
        let apply = |x: &[f64], y: &mut [f64]| {
            y.copy_from_slice(x);
            for (s, &t) in next.iter().enumerate() {
                y[t] -= gamma * x[s];
            }
        };
        let b = vec![1.0; n];
        let sol = bicgstab(apply, &b, 1e-12, 400).unwrap();
        assert!(sol.residual <= 1e-12);
        let total: f64 = sol.x.iter().sum();
        assert!((total - n as f64 / (1.0 - gamma)).abs() <= 1e-8 * total);
    }

    #[test]
    fn reports_failure_with_best_residual() {
        // a rotation-like system that needs more than one step
        let apply = |x: &[f64], y: &mut [f64]| {
            y[0] = x[0] + 2.0 * x[1];
            y[1] = -3.0 * x[0] + x[1];
            y[2] = x[2] + x[0];
        };
        match bicgstab(apply, &[1.0, 1.0, 1.0], 1e-14, 1) {
            Err(Error::IterativeSolveFailure { steps, residual }) => {
                assert_eq!(steps, 1);
                assert!(residual > 1e-14);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
