//! Nearest correlation matrix by alternating projections with Dykstra's
//! correction, followed by an eigenvalue floor so the result is strictly
//! positive definite.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAX_ITERATIONS: usize = 100;
const CONV_TOL: f64 = 1e-7;
/// Eigenvalues are floored at this fraction of the largest one.
const EIG_FLOOR: f64 = 1e-6;

fn project_psd(m: &Matrix) -> Matrix {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

fn floor_and_rescale(m: &Matrix) -> Matrix {
    let n = m.nrows();
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let max = eig.eigenvalues.max();
    let d = eig.eigenvalues.map(|v| v.max(EIG_FLOOR * max));
    let x = &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    let s: Vec<f64> = (0..n).map(|i| 1.0 / x[(i, i)].sqrt()).collect();
    let mut out = Matrix::from_fn(n, n, |a, b| x[(a, b)] * s[a] * s[b]);
    for a in 0..n {
        out[(a, a)] = 1.0;
        for b in 0..a {
            out[(a, b)] = out[(b, a)];
        }
    }
    out
}

/// Closest positive definite unit-diagonal matrix to the symmetric `target`.
pub fn nearest_correlation(target: &Matrix) -> Result<Matrix> {
    if !target.is_square() {
        return Err(Error::Dimension("nearest correlation needs a square matrix".into()));
    }
    let n = target.nrows();
    let mut y = (target + target.transpose()) * 0.5;
    let mut correction = Matrix::zeros(n, n);
    for _ in 0..MAX_ITERATIONS {
        let r = &y - &correction;
        let x = project_psd(&r);
        correction = &x - &r;
        let mut next = x;
        for i in 0..n {
            next[(i, i)] = 1.0;
        }
        let change = (&next - &y).amax() / next.amax().max(1.0);
        y = next;
        if change <= CONV_TOL {
            return Ok(floor_and_rescale(&y));
        }
    }
    Err(Error::NoConvergence(format!(
        "nearest correlation matrix after {MAX_ITERATIONS} iterations"
    )))
}
