//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

pub fn quad_form(p: &DMatrix<f64>, s: &[f64]) -> f64 {
    let v = DVector::from_column_slice(s);
    v.dot(&(p * &v))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest real part among the eigenvalues of a square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Positive definiteness via Cholesky factorization.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    symmetrize(m).cholesky().is_some()
}

/// Solves `A^T X + X A + C = 0` for symmetric `X`, using the `n (n + 1) / 2`
/// independent entries of `X` as unknowns.
pub fn solve_continuous_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || c.nrows() != n || c.ncols() != n {
        return Err(Error::invalid("Lyapunov equation needs square matrices of equal size"));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let index = |i: usize, j: usize| {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        pairs.iter().position(|&p| p == (i, j)).expect("pair exists")
    };
    let m = pairs.len();
    let mut lhs = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    // equation (i, j): sum_k a_ki x_kj + x_ik a_kj = -c_ij
    for (row, &(i, j)) in pairs.iter().enumerate() {
        for k in 0..n {
            lhs[(row, index(k, j))] += a[(k, i)];
            lhs[(row, index(i, k))] += a[(k, j)];
        }
        rhs[row] = -0.5 * (c[(i, j)] + c[(j, i)]);
    }
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("Lyapunov equation is singular".into()))?;
    Ok(DMatrix::from_fn(n, n, |i, j| sol[index(i, j)]))
}
