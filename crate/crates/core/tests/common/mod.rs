//! Random instances and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use coherent_combination::constraints::ConstraintSystem;
use coherent_combination::covariance::CovarianceEstimate;
use coherent_combination::linalg::{Matrix, Vector};
use coherent_combination::panel::ForecastPanel;
use nalgebra::DMatrix;
use rand::Rng;

pub struct Instance {
    pub sys: ConstraintSystem,
    pub mask: DMatrix<bool>,
    pub panel: ForecastPanel,
    pub w: Matrix,
}

impl Instance {
    pub fn cov(&self) -> CovarianceEstimate {
        CovarianceEstimate::from_matrix(self.w.clone()).unwrap()
    }
}

pub fn labels(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}{i}")).collect()
}

/// Random aggregation system with `n <= max_n` variables and at least one
/// constraint; entries of `A` are zero with probability one half.
pub fn random_system<R: Rng>(rng: &mut R, max_n: usize) -> ConstraintSystem {
    let n = rng.random_range(2..=max_n);
    let n_b = rng.random_range(1..n);
    let a = Matrix::from_fn(n - n_b, n_b, |_, _| {
        if rng.random::<bool>() {
            0.0
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    ConstraintSystem::from_aggregation(a, labels("y", n)).unwrap()
}

/// `n x p` mask in which every variable has at least one expert.
pub fn random_mask<R: Rng>(rng: &mut R, n: usize, p: usize, balanced: bool) -> DMatrix<bool> {
    if balanced {
        return DMatrix::from_element(n, p, true);
    }
    let mut mask = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() < 0.6);
    for i in 0..n {
        if !(0..p).any(|j| mask[(i, j)]) {
            mask[(i, rng.random_range(0..p))] = true;
        }
    }
    mask
}

pub fn random_spd<R: Rng>(rng: &mut R, m: usize) -> Matrix {
    let b = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() / m as f64 + Matrix::identity(m, m) * 0.1
}

pub fn panel_from_mask<R: Rng>(rng: &mut R, sys: &ConstraintSystem, mask: &DMatrix<bool>) -> ForecastPanel {
    let (n, p) = mask.shape();
    let values = Matrix::from_fn(n, p, |_, _| rng.random_range(5.0..15.0));
    ForecastPanel::from_dense(sys, labels("e", p), mask.clone(), &values).unwrap()
}

pub fn random_instance<R: Rng>(rng: &mut R, max_n: usize, max_p: usize, balanced: bool) -> Instance {
    let sys = random_system(rng, max_n);
    let p = rng.random_range(1..=max_p);
    let mask = random_mask(rng, sys.n(), p, balanced);
    let panel = panel_from_mask(rng, &sys, &mask);
    let w = random_spd(rng, panel.m());
    Instance { sys, mask, panel, w }
}

/// The variable-by-expert shape used throughout: `y1 = y2 + y3`, experts
/// forecasting {y1, y3}, {y2, y3}, {y1, y3} and {y3}.
pub fn small_mask() -> DMatrix<bool> {
    DMatrix::from_row_slice(3, 4, &[true, false, true, false, false, true, false, false, true, true, true, true])
}

pub fn small_system() -> ConstraintSystem {
    ConstraintSystem::from_aggregation(Matrix::from_row_slice(1, 2, &[1.0, 1.0]), labels("y", 3)).unwrap()
}

/// `K` (`m x n`) built directly from the mask: experts in column order,
/// variables in row order within each expert.
pub fn k_from_mask(mask: &DMatrix<bool>) -> Matrix {
    let (n, p) = mask.shape();
    let mut rows = Vec::new();
    for j in 0..p {
        for i in 0..n {
            if mask[(i, j)] {
                rows.push(i);
            }
        }
    }
    Matrix::from_fn(rows.len(), n, |r, c| if rows[r] == c { 1.0 } else { 0.0 })
}

/// `C = [I  -A]` from the aggregation matrix.
pub fn c_from_a(a: &Matrix) -> Matrix {
    let (n_u, n_b) = a.shape();
    Matrix::from_fn(n_u, n_u + n_b, |r, c| {
        if c < n_u {
            if r == c { 1.0 } else { 0.0 }
        } else {
            -a[(r, c - n_u)]
        }
    })
}

fn inverse(m: &Matrix) -> Matrix {
    m.clone().lu().try_inverse().expect("invertible")
}

/// Solves the bordered Lagrangean system
///
/// ```text
/// [ Kᵀ W⁻¹ K   Cᵀ ] [ y ]   [ Kᵀ W⁻¹ ŷ ]
/// [ C          0  ] [ λ ] = [ 0        ]
/// ```
///
/// by dense LU and returns `(y, λ)`.
pub fn kkt_solve(k: &Matrix, c: &Matrix, w: &Matrix, y_hat: &Vector) -> (Vector, Vector) {
    let (n, r) = (k.ncols(), c.nrows());
    let winv = inverse(w);
    let info = k.transpose() * &winv * k;
    let mut big = Matrix::zeros(n + r, n + r);
    big.view_mut((0, 0), (n, n)).copy_from(&info);
    big.view_mut((0, n), (n, r)).copy_from(&c.transpose());
    big.view_mut((n, 0), (r, n)).copy_from(c);
    let mut rhs = Vector::zeros(n + r);
    rhs.rows_mut(0, n).copy_from(&(k.transpose() * &winv * y_hat));
    let sol = big.lu().solve(&rhs).expect("bordered system is nonsingular");
    (sol.rows(0, n).into_owned(), sol.rows(n, r).into_owned())
}

/// Max-norm residual of the bordered system at `y`, with the multipliers
/// fitted by least squares from the stationarity block.
pub fn kkt_residual(k: &Matrix, c: &Matrix, w: &Matrix, y_hat: &Vector, y: &Vector) -> f64 {
    let winv = inverse(w);
    let grad = k.transpose() * &winv * y_hat - k.transpose() * &winv * k * y;
    let lambda = if c.nrows() == 0 {
        Vector::zeros(0)
    } else {
        inverse(&(c * c.transpose())) * c * &grad
    };
    let stat = grad - c.transpose() * &lambda;
    stat.amax().max((c * y).amax())
}

/// Generalized least squares over the structural parametrization `y = S b`:
/// `b = (Sᵀ Kᵀ W⁻¹ K S)⁻¹ Sᵀ Kᵀ W⁻¹ ŷ` from the normal equations.
pub fn gls_structural(k: &Matrix, s: &Matrix, w: &Matrix, y_hat: &Vector) -> Vector {
    let x = k * s;
    let winv = inverse(w);
    let lhs = x.transpose() * &winv * &x;
    let b = lhs.lu().solve(&(x.transpose() * &winv * y_hat)).expect("full rank");
    s * b
}

/// `ỹ = (I - W Cᵀ (C W Cᵀ)⁻¹ C) ŷ` written out directly.
pub fn mint_oracle(c: &Matrix, w: &Matrix, y_hat: &Vector) -> Vector {
    let n = y_hat.len();
    if c.nrows() == 0 {
        return y_hat.clone();
    }
    let m = Matrix::identity(n, n) - w * c.transpose() * inverse(&(c * w * c.transpose())) * c;
    m * y_hat
}

/// Relative max-norm distance with a unit floor on the scale.
pub fn rel_diff(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}
