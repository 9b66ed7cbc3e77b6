//! The multi-expert base-forecast panel.
//!
//! Forecasts are stacked by expert (expert-major, variables in constraint
//! label order within each expert). The by-variable stacking is obtained with
//! the permutation `P`; selection matrices `L_j`, `L`, `K` and `J = P K` are
//! available as dense matrices, and every operation the solvers use also has
//! an index-based path that gives identical results.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::constraints::ConstraintSystem;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// One base forecast: `series` as predicted by `expert`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastEntry {
    pub series: String,
    pub expert: String,
    pub value: f64,
}

impl ForecastEntry {
    pub fn new(series: &str, expert: &str, value: f64) -> Self {
        Self {
            series: series.to_string(),
            expert: expert.to_string(),
            value,
        }
    }
}

/// One in-sample fitted value at time index `t` (a row of the actuals).
#[derive(Debug, Clone, PartialEq)]
pub struct FittedEntry {
    pub t: usize,
    pub series: String,
    pub expert: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastPanel {
    series: Vec<String>,
    experts: Vec<String>,
    availability: DMatrix<bool>,
    /// `(variable, expert)` of each by-expert position.
    cells: Vec<(usize, usize)>,
    /// Start of each expert's block in the by-expert vector; length `p + 1`.
    expert_offsets: Vec<usize>,
    /// By-expert position of each by-variable position: `ŷ_bv[k] = ŷ[bv_order[k]]`.
    bv_order: Vec<usize>,
    /// Start of each variable's block in the by-variable vector; length `n + 1`.
    variable_offsets: Vec<usize>,
    y_hat: Vector,
}

impl ForecastPanel {
    /// Builds a panel from label-keyed forecasts. Experts are ordered by first
    /// appearance in `entries`.
    pub fn build(entries: &[ForecastEntry], sys: &ConstraintSystem) -> Result<Self> {
        let n = sys.n();
        let index: HashMap<&str, usize> = sys
            .labels()
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut experts: Vec<String> = Vec::new();
        let mut expert_index: HashMap<&str, usize> = HashMap::new();
        for e in entries {
            if !expert_index.contains_key(e.expert.as_str()) {
                expert_index.insert(e.expert.as_str(), experts.len());
                experts.push(e.expert.clone());
            }
        }
        let p = experts.len();
        let mut availability = DMatrix::from_element(n, p, false);
        let mut values = Matrix::zeros(n, p);
        for e in entries {
            let i = *index
                .get(e.series.as_str())
                .ok_or_else(|| Error::UnknownLabel(e.series.clone()))?;
            let j = expert_index[e.expert.as_str()];
            if availability[(i, j)] {
                return Err(Error::DuplicateForecast {
                    series: e.series.clone(),
                    expert: e.expert.clone(),
                });
            }
            availability[(i, j)] = true;
            values[(i, j)] = e.value;
        }
        Self::from_dense(sys, experts, availability, &values)
    }

    /// Builds a panel from an `n x p` availability mask and an `n x p` matrix
    /// of values (entries outside the mask are ignored). Experts covering no
    /// variable are kept with an empty block.
    pub fn from_dense(
        sys: &ConstraintSystem,
        experts: Vec<String>,
        availability: DMatrix<bool>,
        values: &Matrix,
    ) -> Result<Self> {
        let n = sys.n();
        let p = experts.len();
        if availability.shape() != (n, p) || values.shape() != (n, p) {
            return Err(Error::Dimension(format!(
                "mask {:?} and values {:?} must both be {n}x{p}",
                availability.shape(),
                values.shape()
            )));
        }
        for i in 0..n {
            if !(0..p).any(|j| availability[(i, j)]) {
                return Err(Error::MissingSeries(sys.labels()[i].clone()));
            }
        }

        let mut cells = Vec::new();
        let mut expert_offsets = Vec::with_capacity(p + 1);
        let mut data = Vec::new();
        for j in 0..p {
            expert_offsets.push(cells.len());
            for i in 0..n {
                if availability[(i, j)] {
                    if !values[(i, j)].is_finite() {
                        return Err(Error::NonFinite(format!(
                            "forecast of `{}` by `{}`",
                            sys.labels()[i],
                            experts[j]
                        )));
                    }
                    cells.push((i, j));
                    data.push(values[(i, j)]);
                }
            }
        }
        expert_offsets.push(cells.len());

        let mut bv_order: Vec<usize> = (0..cells.len()).collect();
        // stable: within a variable, experts stay in expert order
        bv_order.sort_by_key(|&k| cells[k].0);
        let mut variable_offsets = vec![0; n + 1];
        for &(i, _) in &cells {
            variable_offsets[i + 1] += 1;
        }
        for i in 0..n {
            variable_offsets[i + 1] += variable_offsets[i];
        }

        Ok(Self {
            series: sys.labels().to_vec(),
            experts,
            availability,
            cells,
            expert_offsets,
            bv_order,
            variable_offsets,
            y_hat: Vector::from_vec(data),
        })
    }

    /// A one-expert balanced panel holding `y_hat`.
    pub fn single(sys: &ConstraintSystem, y_hat: &Vector) -> Result<Self> {
        if y_hat.len() != sys.n() {
            return Err(Error::Dimension(format!(
                "forecast of length {} for {} variables",
                y_hat.len(),
                sys.n()
            )));
        }
        Self::from_dense(
            sys,
            vec!["base".to_string()],
            DMatrix::from_element(sys.n(), 1, true),
            &Matrix::from_column_slice(sys.n(), 1, y_hat.as_slice()),
        )
    }

    /// Same structure, new by-expert values.
    pub fn with_values(&self, y_hat: Vector) -> Result<Self> {
        if y_hat.len() != self.m() {
            return Err(Error::Dimension(format!(
                "{} values for a panel of {} forecasts",
                y_hat.len(),
                self.m()
            )));
        }
        Ok(Self { y_hat, ..self.clone() })
    }

    /// Collects `value(variable, expert)` at every available cell, by expert.
    pub fn gather(&self, mut value: impl FnMut(usize, usize) -> f64) -> Vector {
        Vector::from_iterator(self.m(), self.cells.iter().map(|&(i, j)| value(i, j)))
    }

    pub fn n(&self) -> usize {
        self.series.len()
    }

    pub fn p(&self) -> usize {
        self.experts.len()
    }

    pub fn m(&self) -> usize {
        self.cells.len()
    }

    pub fn series(&self) -> &[String] {
        &self.series
    }

    pub fn experts(&self) -> &[String] {
        &self.experts
    }

    pub fn availability(&self) -> &DMatrix<bool> {
        &self.availability
    }

    pub fn is_balanced(&self) -> bool {
        self.m() == self.n() * self.p()
    }

    /// Base forecasts stacked by expert.
    pub fn y_hat(&self) -> &Vector {
        &self.y_hat
    }

    /// `(variable, expert)` of each by-expert position.
    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    /// Number of variables covered by expert `j`.
    pub fn n_j(&self, j: usize) -> usize {
        self.expert_offsets[j + 1] - self.expert_offsets[j]
    }

    /// Number of experts covering variable `i`.
    pub fn p_i(&self, i: usize) -> usize {
        self.variable_offsets[i + 1] - self.variable_offsets[i]
    }

    /// By-expert positions of expert `j`'s block.
    pub fn expert_range(&self, j: usize) -> std::ops::Range<usize> {
        self.expert_offsets[j]..self.expert_offsets[j + 1]
    }

    /// Variables covered by expert `j`, in label order.
    pub fn expert_variables(&self, j: usize) -> Vec<usize> {
        self.expert_range(j).map(|k| self.cells[k].0).collect()
    }

    /// By-expert positions of the forecasts of variable `i`, in expert order.
    pub fn variable_positions(&self, i: usize) -> &[usize] {
        &self.bv_order[self.variable_offsets[i]..self.variable_offsets[i + 1]]
    }

    /// By-expert position of each by-variable position.
    pub fn bv_order(&self) -> &[usize] {
        &self.bv_order
    }

    /// `P v` for a by-expert vector `v`.
    pub fn to_by_variable(&self, v: &Vector) -> Vector {
        Vector::from_iterator(self.m(), self.bv_order.iter().map(|&k| v[k]))
    }

    /// `Pᵀ v` for a by-variable vector `v`.
    pub fn to_by_expert(&self, v: &Vector) -> Vector {
        let mut out = Vector::zeros(self.m());
        for (pos, &k) in self.bv_order.iter().enumerate() {
            out[k] = v[pos];
        }
        out
    }

    /// `P W Pᵀ` for a by-expert `m x m` matrix.
    pub fn matrix_to_by_variable(&self, w: &Matrix) -> Matrix {
        let o = &self.bv_order;
        Matrix::from_fn(self.m(), self.m(), |a, b| w[(o[a], o[b])])
    }

    /// `Pᵀ Σ P` for a by-variable `m x m` matrix.
    pub fn matrix_to_by_expert(&self, sigma: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.m(), self.m());
        for (a, &ka) in self.bv_order.iter().enumerate() {
            for (b, &kb) in self.bv_order.iter().enumerate() {
                out[(ka, kb)] = sigma[(a, b)];
            }
        }
        out
    }

    /// Selection matrix `L_j` (`n_j x n`).
    pub fn selection(&self, j: usize) -> Matrix {
        let mut l = Matrix::zeros(self.n_j(j), self.n());
        for (r, k) in self.expert_range(j).enumerate() {
            l[(r, self.cells[k].0)] = 1.0;
        }
        l
    }

    /// `L = Diag(L_1, ..., L_p)` (`m x np`).
    pub fn l_matrix(&self) -> Matrix {
        let n = self.n();
        let mut l = Matrix::zeros(self.m(), n * self.p());
        for (r, &(i, j)) in self.cells.iter().enumerate() {
            l[(r, j * n + i)] = 1.0;
        }
        l
    }

    /// `K = L (1_p ⊗ I_n)` (`m x n`).
    pub fn k_matrix(&self) -> Matrix {
        let mut k = Matrix::zeros(self.m(), self.n());
        for (r, &(i, _)) in self.cells.iter().enumerate() {
            k[(r, i)] = 1.0;
        }
        k
    }

    /// Permutation `P` with `P ŷ = ŷ_bv`.
    pub fn p_matrix(&self) -> Matrix {
        let mut p = Matrix::zeros(self.m(), self.m());
        for (pos, &k) in self.bv_order.iter().enumerate() {
            p[(pos, k)] = 1.0;
        }
        p
    }

    /// `J = P K` (`m x n`), variable-major.
    pub fn j_matrix(&self) -> Matrix {
        let mut jm = Matrix::zeros(self.m(), self.n());
        for (pos, &k) in self.bv_order.iter().enumerate() {
            jm[(pos, self.cells[k].0)] = 1.0;
        }
        jm
    }

    /// In-sample residuals `m x T` from label-keyed fitted values;
    /// `actuals` is `T x n` in label order.
    pub fn residual_panel(&self, actuals: &Matrix, fitted: &[FittedEntry]) -> Result<Matrix> {
        let t_len = actuals.nrows();
        if actuals.ncols() != self.n() {
            return Err(Error::Dimension(format!(
                "actuals have {} columns for {} variables",
                actuals.ncols(),
                self.n()
            )));
        }
        if t_len < 2 {
            return Err(Error::InsufficientData(format!(
                "{t_len} residual observations, at least 2 are needed"
            )));
        }
        let series: HashMap<&str, usize> =
            self.series.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let experts: HashMap<&str, usize> =
            self.experts.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();
        let mut position = HashMap::new();
        for (k, &cell) in self.cells.iter().enumerate() {
            position.insert(cell, k);
        }

        let mut out = Matrix::from_element(self.m(), t_len, f64::NAN);
        let mut seen = DMatrix::from_element(self.m(), t_len, false);
        for f in fitted {
            let i = *series
                .get(f.series.as_str())
                .ok_or_else(|| Error::UnknownLabel(f.series.clone()))?;
            let j = *experts
                .get(f.expert.as_str())
                .ok_or_else(|| Error::UnknownLabel(f.expert.clone()))?;
            let k = *position.get(&(i, j)).ok_or_else(|| {
                Error::Schema(format!(
                    "fitted values for `{}` by `{}`, which has no base forecast",
                    f.series, f.expert
                ))
            })?;
            if f.t >= t_len {
                return Err(Error::Dimension(format!(
                    "fitted value at t={} beyond the {t_len} actual observations",
                    f.t
                )));
            }
            if seen[(k, f.t)] {
                return Err(Error::DuplicateForecast {
                    series: f.series.clone(),
                    expert: f.expert.clone(),
                });
            }
            seen[(k, f.t)] = true;
            out[(k, f.t)] = actuals[(f.t, i)] - f.value;
        }
        for k in 0..self.m() {
            for t in 0..t_len {
                if !seen[(k, t)] {
                    let (i, j) = self.cells[k];
                    return Err(Error::MissingResidual {
                        series: self.series[i].clone(),
                        expert: self.experts[j].clone(),
                        t,
                    });
                }
            }
        }
        crate::linalg::ensure_finite(&out, "residuals")?;
        Ok(out)
    }

    /// In-sample residuals `m x T` from one `T x n` fitted matrix per expert.
    pub fn residuals_from_matrices(&self, actuals: &Matrix, fitted: &[Matrix]) -> Result<Matrix> {
        let t_len = actuals.nrows();
        if fitted.len() != self.p() {
            return Err(Error::Dimension(format!(
                "{} fitted matrices for {} experts",
                fitted.len(),
                self.p()
            )));
        }
        if fitted.iter().any(|f| f.shape() != actuals.shape()) || actuals.ncols() != self.n() {
            return Err(Error::Dimension("fitted and actual shapes differ".into()));
        }
        if t_len < 2 {
            return Err(Error::InsufficientData(format!(
                "{t_len} residual observations, at least 2 are needed"
            )));
        }
        Ok(Matrix::from_fn(self.m(), t_len, |k, t| {
            let (i, j) = self.cells[k];
            actuals[(t, i)] - fitted[j][(t, i)]
        }))
    }
}
