//! Linear-quadratic regulators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    is_positive_definite, matrix_to_rows, max_abs, solve_continuous_lyapunov, spectral_abscissa,
    spectral_radius, symmetrize,
};

const TOLERANCE: f64 = 1e-10;
const MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    Continuous,
    Discrete,
}

/// Optimal gain `u = -K s` and cost-to-go matrix `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    pub k: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub mode: TimeMode,
    pub iterations: usize,
}

impl LqrSolution {
    pub fn gain_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.k)
    }

    /// Residual of the algebraic Riccati equation solved by `p`.
    pub fn riccati_residual(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        max_abs(&riccati_lhs(a, b, &self.q, &self.r, &self.p, self.mode))
    }

    /// Closed-loop matrix `A - B K`.
    pub fn closed_loop(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a - b * &self.k
    }
}

fn riccati_lhs(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
    mode: TimeMode,
) -> DMatrix<f64> {
    match mode {
        TimeMode::Continuous => {
            let rinv = r.clone().try_inverse().expect("R is invertible");
            a.transpose() * p + p * a - p * b * rinv * b.transpose() * p + q
        }
        TimeMode::Discrete => {
            let s = r + b.transpose() * p * b;
            let sinv = s.try_inverse().expect("R + B^T P B is invertible");
            a.transpose() * p * a
                - a.transpose() * p * b * sinv * b.transpose() * p * a
                + q
                - p
        }
    }
}

fn discrete_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = r + b.transpose() * p * b;
    let sinv = s
        .try_inverse()
        .ok_or_else(|| Error::Numerical("R + B^T P B is singular".into()))?;
    Ok(sinv * b.transpose() * p * a)
}

/// Iterates the discrete Riccati recursion from `P = Q` to a fixed point.
fn discrete_riccati(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, usize)> {
    let mut p = q.clone();
    for it in 1..=MAX_ITERS {
        let k = discrete_gain(a, b, r, &p)?;
        let next = symmetrize(&(q + a.transpose() * &p * (a - b * &k)));
        let delta = max_abs(&(&next - &p));
        p = next;
        if !delta.is_finite() {
            return Err(Error::NotConverged("Riccati recursion diverged".into()));
        }
        if delta <= TOLERANCE * max_abs(&p).max(1.0) {
            return Ok((p, it));
        }
    }
    Err(Error::NotConverged(format!(
        "Riccati recursion did not converge in {MAX_ITERS} iterations"
    )))
}

fn check_inputs(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::invalid("inconsistent LQR matrix shapes"));
    }
    if !is_positive_definite(r) {
        return Err(Error::invalid("R must be positive definite"));
    }
    if symmetric_min_eig(q) < -1e-12 {
        return Err(Error::invalid("Q must be positive semidefinite"));
    }
    Ok(())
}

fn symmetric_min_eig(q: &DMatrix<f64>) -> f64 {
    crate::linalg::symmetric_eigenvalues(q)
        .first()
        .copied()
        .unwrap_or(0.0)
}

/// Solves the infinite-horizon LQR problem.
///
/// The discrete case iterates the Riccati recursion. The continuous case
/// runs the same recursion on a fine Euler discretization to obtain a
/// stabilizing gain and then refines it with Newton (Kleinman) steps, each
/// a Lyapunov solve, until the update falls below tolerance.
pub fn lqr_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    mode: TimeMode,
) -> Result<LqrSolution> {
    check_inputs(a, b, q, r)?;
    match mode {
        TimeMode::Discrete => {
            let (p, iterations) = discrete_riccati(a, b, q, r)?;
            let k = discrete_gain(a, b, r, &p)?;
            Ok(LqrSolution {
                k,
                p,
                q: q.clone(),
                r: r.clone(),
                mode,
                iterations,
            })
        }
        TimeMode::Continuous => {
            let n = a.nrows();
            let h = 0.01 / (1.0 + max_abs(a));
            let ad = DMatrix::identity(n, n) + a * h;
            let bd = b * h;
            let (pd, mut iterations) = discrete_riccati(&ad, &bd, &(q * h), &(r * h))?;
            let rinv = r
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Numerical("R is singular".into()))?;
            let mut p = pd;
            let mut k = &rinv * b.transpose() * &p;
            for _ in 0..100 {
                iterations += 1;
                let acl = a - b * &k;
                if spectral_abscissa(&acl) >= 0.0 {
                    return Err(Error::NotConverged(
                        "Newton iteration lost closed-loop stability".into(),
                    ));
                }
                let c = q + k.transpose() * r * &k;
                let next = symmetrize(&solve_continuous_lyapunov(&acl, &c)?);
                let delta = max_abs(&(&next - &p));
                p = next;
                k = &rinv * b.transpose() * &p;
                if delta <= TOLERANCE * max_abs(&p).max(1.0) {
                    return Ok(LqrSolution {
                        k,
                        p,
                        q: q.clone(),
                        r: r.clone(),
                        mode,
                        iterations,
                    });
                }
            }
            Err(Error::NotConverged("Newton refinement did not converge".into()))
        }
    }
}

/// Whether the closed loop `A - B K` is stable in the given time mode.
pub fn is_stabilizing(sol: &LqrSolution, a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let acl = sol.closed_loop(a, b);
    match sol.mode {
        TimeMode::Continuous => spectral_abscissa(&acl) < 0.0,
        TimeMode::Discrete => spectral_radius(&acl) < 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_continuous_riccati() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let zero = DMatrix::from_element(1, 1, 0.0);
        let sol = lqr_solve(&zero, &one, &one, &one, TimeMode::Continuous).unwrap();
        assert!((sol.p[(0, 0)] - 1.0).abs() < 1e-9);
        assert!((sol.k[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scalar_discrete_riccati() {
        // x' = x + u, q = r = 1: p = 1 + p - p^2 / (1 + p)  =>  p^2 - p - 1 = 0
        let one = DMatrix::from_element(1, 1, 1.0);
        let sol = lqr_solve(&one, &one, &one, &one, TimeMode::Discrete).unwrap();
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((sol.p[(0, 0)] - golden).abs() < 1e-9);
        assert!(sol.riccati_residual(&one, &one) < 1e-8);
    }
}
