//! Linear constraints on a multiple time series.
//!
//! A constrained series splits into `n_u` upper variables `u` and `n_b`
//! bottom (free) variables `b` with `u = A b`. The same constraints can be
//! written in zero-constrained form `C y = 0` with `C = [I  -A]`, or in
//! structural form `y = S b` with `S = [A; I]`.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Pivots smaller than this are treated as zero during row reduction.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// The triple `(C, A, S)` together with the variable labels, upper block
/// first.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    aggregation: Matrix,
    zero: Matrix,
    structural: Matrix,
    labels: Vec<String>,
}

impl ConstraintSystem {
    /// Builds the system from the linear combination matrix `A` (`n_u x n_b`).
    ///
    /// `labels` lists the upper variables followed by the bottom ones.
    pub fn from_aggregation(a: Matrix, labels: Vec<String>) -> Result<Self> {
        let (n_u, n_b) = a.shape();
        if labels.len() != n_u + n_b {
            return Err(Error::Dimension(format!(
                "A is {n_u}x{n_b} but {} labels were given",
                labels.len()
            )));
        }
        if n_b == 0 {
            return Err(Error::Dimension(
                "at least one bottom variable is required".into(),
            ));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("aggregation matrix A".into()));
        }
        check_unique(&labels)?;
        let n = n_u + n_b;

        let mut zero = Matrix::zeros(n_u, n);
        let mut structural = Matrix::zeros(n, n_b);
        for i in 0..n_u {
            zero[(i, i)] = 1.0;
            for k in 0..n_b {
                // 0 - a rather than -a keeps zeros unsigned
                zero[(i, n_u + k)] = 0.0 - a[(i, k)];
                structural[(i, k)] = a[(i, k)];
            }
        }
        for k in 0..n_b {
            structural[(n_u + k, k)] = 1.0;
        }
        Ok(Self {
            aggregation: a,
            zero,
            structural,
            labels,
        })
    }

    /// A system without constraints: every variable is free.
    pub fn unconstrained(labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        Self::from_aggregation(Matrix::zeros(0, n), labels)
    }

    /// Canonicalizes a general full-row-rank zero-constraints matrix.
    ///
    /// Gauss-Jordan elimination with partial pivoting; a column without a
    /// usable pivot becomes a bottom variable. Returns the system together with
    /// the column permutation: variable `k` of the new system is column
    /// `perm[k]` of `c_raw`.
    pub fn from_general_constraints(
        c_raw: &Matrix,
        labels: Vec<String>,
    ) -> Result<(Self, Vec<usize>)> {
        let (rows, n) = c_raw.shape();
        if labels.len() != n {
            return Err(Error::Dimension(format!(
                "constraint matrix has {n} columns but {} labels were given",
                labels.len()
            )));
        }
        if c_raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("zero-constraints matrix".into()));
        }
        if rows >= n {
            return Err(Error::RankDeficient(format!(
                "{rows} constraints on {n} variables leave no free variable"
            )));
        }

        let mut m = c_raw.clone();
        let mut pivots = Vec::with_capacity(rows);
        let mut row = 0;
        for col in 0..n {
            if row == rows {
                break;
            }
            let (best, best_abs) = (row..rows)
                .map(|r| (r, m[(r, col)].abs()))
                .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best_abs < PIVOT_TOLERANCE {
                continue;
            }
            m.swap_rows(row, best);
            let pivot = m[(row, col)];
            for c in 0..n {
                m[(row, c)] /= pivot;
            }
            for r in 0..rows {
                if r == row {
                    continue;
                }
                let f = m[(r, col)];
                if f != 0.0 {
                    for c in 0..n {
                        m[(r, c)] -= f * m[(row, c)];
                    }
                }
            }
            m[(row, col)] = 1.0;
            pivots.push(col);
            row += 1;
        }
        if pivots.len() < rows {
            return Err(Error::RankDeficient(format!(
                "rank {} < {rows} constraints (pivot below {PIVOT_TOLERANCE:e}); \
                 constraints are repeated or conflicting",
                pivots.len()
            )));
        }

        let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
        let a = Matrix::from_fn(rows, free.len(), |r, k| {
            let v = -m[(r, free[k])];
            if v == 0.0 {
                0.0
            } else {
                v
            }
        });
        let perm: Vec<usize> = pivots.iter().chain(free.iter()).copied().collect();
        let new_labels = perm.iter().map(|&c| labels[c].clone()).collect();
        Ok((Self::from_aggregation(a, new_labels)?, perm))
    }

    /// `true` iff `‖C y‖∞ <= tol`.
    pub fn is_coherent(&self, y: &Vector, tol: f64) -> Result<bool> {
        if !(tol > 0.0) {
            return Err(Error::Schema(format!("tolerance must be positive, got {tol}")));
        }
        Ok(self.coherence_error(y)? <= tol)
    }

    /// `‖C y‖∞`.
    pub fn coherence_error(&self, y: &Vector) -> Result<f64> {
        if y.len() != self.n() {
            return Err(Error::Dimension(format!(
                "vector of length {} for a system of {} variables",
                y.len(),
                self.n()
            )));
        }
        Ok((&self.zero * y).amax())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn n_upper(&self) -> usize {
        self.aggregation.nrows()
    }

    pub fn n_bottom(&self) -> usize {
        self.aggregation.ncols()
    }

    /// Linear combination matrix `A`.
    pub fn aggregation(&self) -> &Matrix {
        &self.aggregation
    }

    /// Zero-constraints matrix `C = [I -A]`.
    pub fn zero_constraints(&self) -> &Matrix {
        &self.zero
    }

    /// Structural matrix `S = [A; I]`.
    pub fn structural(&self) -> &Matrix {
        &self.structural
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

fn check_unique(labels: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::Schema(format!("duplicate variable label `{l}`")));
        }
    }
    Ok(())
}

/// The three-level hierarchy `X = A + B`, `A = AA + AB`, `B = BA + BB`.
pub fn three_level_hierarchy() -> ConstraintSystem {
    let a = Matrix::from_row_slice(
        3,
        4,
        &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0],
    );
    let labels = ["X", "A", "B", "AA", "AB", "BA", "BB"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    ConstraintSystem::from_aggregation(a, labels).expect("static hierarchy is valid")
}
