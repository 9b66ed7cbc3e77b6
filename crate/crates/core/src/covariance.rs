//! Base-forecast error covariance estimators.
//!
//! All estimators work on an `m x T` residual matrix stacked by expert and
//! return an `m x m` matrix in the same ordering. Second moments are raw
//! (divided by `T`, not centered).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::panel::ForecastPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovPattern {
    Sample,
    Shrunk,
    BlockExpert,
    BlockExpertShrunk,
    BlockVariable,
    BlockVariableShrunk,
    Diagonal,
    /// Provided by the caller rather than estimated.
    Supplied,
}

impl CovPattern {
    pub const ESTIMATORS: [CovPattern; 7] = [
        CovPattern::Sample,
        CovPattern::Shrunk,
        CovPattern::BlockExpert,
        CovPattern::BlockExpertShrunk,
        CovPattern::BlockVariable,
        CovPattern::BlockVariableShrunk,
        CovPattern::Diagonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CovPattern::Sample => "sample",
            CovPattern::Shrunk => "shrink",
            CovPattern::BlockExpert => "bd-expert",
            CovPattern::BlockExpertShrunk => "bd-expert-shrink",
            CovPattern::BlockVariable => "bd-variable",
            CovPattern::BlockVariableShrunk => "bd-variable-shrink",
            CovPattern::Diagonal => "diag",
            CovPattern::Supplied => "supplied",
        }
    }
}

impl fmt::Display for CovPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CovPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CovPattern::ESTIMATORS
            .iter()
            .chain(std::iter::once(&CovPattern::Supplied))
            .find(|p| p.name() == s)
            .copied()
            .ok_or_else(|| Error::Schema(format!("unknown covariance pattern `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: Matrix,
    pub pattern: CovPattern,
    /// Shrinkage intensities: one global value, one per block, or empty.
    pub lambdas: Vec<f64>,
    /// Set when a sample estimate has more rows than observations in some
    /// block; solvers refuse such estimates.
    pub singular: bool,
}

impl CovarianceEstimate {
    /// Wraps a caller-supplied symmetric matrix.
    pub fn from_matrix(matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "covariance must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        linalg::ensure_finite(&matrix, "covariance")?;
        let scale = linalg::max_abs(&matrix).max(1.0);
        if linalg::max_abs(&(&matrix - matrix.transpose())) > 1e-12 * scale {
            return Err(Error::Schema("covariance matrix is not symmetric".into()));
        }
        Ok(Self {
            matrix,
            pattern: CovPattern::Supplied,
            lambdas: Vec::new(),
            singular: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Fails with [`Error::SingularCovariance`] if the estimate is tagged.
    pub fn require_nonsingular(&self) -> Result<&Matrix> {
        if self.singular {
            Err(Error::SingularCovariance(format!(
                "{} estimate from fewer observations than rows",
                self.pattern
            )))
        } else {
            Ok(&self.matrix)
        }
    }
}

fn check_residuals(residuals: &Matrix) -> Result<()> {
    if residuals.ncols() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} residual observations, at least 2 are needed",
            residuals.ncols()
        )));
    }
    linalg::ensure_finite(residuals, "residuals")
}

fn mse(residuals: &Matrix) -> Matrix {
    let t = residuals.ncols() as f64;
    let mut w = residuals * residuals.transpose() / t;
    // exact symmetry
    for a in 0..w.nrows() {
        for b in 0..a {
            w[(a, b)] = w[(b, a)];
        }
    }
    w
}

/// `(1/T) Σ_t e_t e_tᵀ`.
pub fn sample_mse(residuals: &Matrix) -> Result<CovarianceEstimate> {
    check_residuals(residuals)?;
    Ok(CovarianceEstimate {
        matrix: mse(residuals),
        pattern: CovPattern::Sample,
        lambdas: Vec::new(),
        singular: residuals.nrows() > residuals.ncols(),
    })
}

/// `λ diag(Ŵ) + (1 - λ) Ŵ`.
pub fn shrink_towards_diagonal(w: &Matrix, lambda: f64) -> Matrix {
    Matrix::from_fn(w.nrows(), w.ncols(), |a, b| {
        if a == b {
            w[(a, a)]
        } else {
            (1.0 - lambda) * w[(a, b)]
        }
    })
}

/// Shrinkage intensity towards the diagonal target on standardized
/// residuals: the summed estimated variances of the off-diagonal sample
/// correlations over their summed squares, clamped to `[0, 1]`.
pub fn shrinkage_intensity(residuals: &Matrix) -> Result<f64> {
    check_residuals(residuals)?;
    let (m, t_len) = residuals.shape();
    let t = t_len as f64;
    let mut xs = residuals.clone();
    for a in 0..m {
        let ss = residuals.row(a).norm_squared() / t;
        if !(ss > 0.0) {
            return Err(Error::ZeroVariance(format!("residual row {a} is identically zero")));
        }
        let sd = ss.sqrt();
        for c in 0..t_len {
            xs[(a, c)] /= sd;
        }
    }
    let sq = xs.map(|v| v * v);
    let cross = &xs * xs.transpose();
    let cross_sq = &sq * sq.transpose();
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..m {
        for b in 0..m {
            if a == b {
                continue;
            }
            let s = cross[(a, b)];
            num += (cross_sq[(a, b)] - s * s / t) / (t * (t - 1.0));
            let r = s / t;
            den += r * r;
        }
    }
    if den <= 0.0 {
        return Ok(1.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Shrunk MSE matrix with an estimated intensity.
pub fn shrink(residuals: &Matrix) -> Result<CovarianceEstimate> {
    let lambda = shrinkage_intensity(residuals)?;
    shrink_with_lambda(residuals, lambda)
}

/// Shrunk MSE matrix with a given intensity in `[0, 1]`.
pub fn shrink_with_lambda(residuals: &Matrix, lambda: f64) -> Result<CovarianceEstimate> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Schema(format!("shrinkage intensity {lambda} outside [0, 1]")));
    }
    check_residuals(residuals)?;
    let w = mse(residuals);
    if let Some(a) = (0..w.nrows()).find(|&a| !(w[(a, a)] > 0.0)) {
        return Err(Error::ZeroVariance(format!("residual row {a} is identically zero")));
    }
    Ok(CovarianceEstimate {
        matrix: shrink_towards_diagonal(&w, lambda),
        pattern: CovPattern::Shrunk,
        lambdas: vec![lambda],
        // a positive diagonal with λ > 0 keeps the estimate definite
        singular: lambda == 0.0 && residuals.nrows() > residuals.ncols(),
    })
}

/// Diagonal of the MSE matrix.
pub fn diagonal(residuals: &Matrix) -> Result<CovarianceEstimate> {
    check_residuals(residuals)?;
    let t = residuals.ncols() as f64;
    let m = residuals.nrows();
    let mut w = Matrix::zeros(m, m);
    for a in 0..m {
        w[(a, a)] = residuals.row(a).norm_squared() / t;
        if !(w[(a, a)] > 0.0) {
            return Err(Error::ZeroVariance(format!("residual row {a} is identically zero")));
        }
    }
    Ok(CovarianceEstimate {
        matrix: w,
        pattern: CovPattern::Diagonal,
        lambdas: Vec::new(),
        singular: false,
    })
}

/// Fills `out` with one (optionally shrunk) block per index group.
fn blocks(
    residuals: &Matrix,
    groups: &[Vec<usize>],
    shrink_blocks: bool,
    out: &mut Matrix,
) -> Result<(Vec<f64>, bool)> {
    let t_len = residuals.ncols();
    let mut lambdas = Vec::new();
    let mut singular = false;
    for g in groups {
        if g.is_empty() {
            continue;
        }
        let sub = linalg::select_rows(residuals, g);
        let block = if shrink_blocks {
            let est = shrink(&sub)?;
            lambdas.push(est.lambdas[0]);
            singular |= est.singular;
            est.matrix
        } else {
            singular |= g.len() > t_len;
            mse(&sub)
        };
        for (a, &ra) in g.iter().enumerate() {
            for (b, &rb) in g.iter().enumerate() {
                out[(ra, rb)] = block[(a, b)];
            }
        }
    }
    Ok((lambdas, singular))
}

fn check_panel(residuals: &Matrix, panel: &ForecastPanel) -> Result<()> {
    check_residuals(residuals)?;
    if residuals.nrows() != panel.m() {
        return Err(Error::Dimension(format!(
            "{} residual rows for a panel of {} forecasts",
            residuals.nrows(),
            panel.m()
        )));
    }
    Ok(())
}

/// `Diag(Ŵ_1, ..., Ŵ_p)`: errors uncorrelated across experts.
pub fn block_by_expert(
    residuals: &Matrix,
    panel: &ForecastPanel,
    shrink_blocks: bool,
) -> Result<CovarianceEstimate> {
    check_panel(residuals, panel)?;
    let groups: Vec<Vec<usize>> = (0..panel.p()).map(|j| panel.expert_range(j).collect()).collect();
    let m = panel.m();
    let mut w = Matrix::zeros(m, m);
    let (lambdas, singular) = blocks(residuals, &groups, shrink_blocks, &mut w)?;
    Ok(CovarianceEstimate {
        matrix: w,
        pattern: if shrink_blocks {
            CovPattern::BlockExpertShrunk
        } else {
            CovPattern::BlockExpert
        },
        lambdas,
        singular,
    })
}

/// `Pᵀ Diag(Σ̂_1, ..., Σ̂_n) P`: errors uncorrelated across variables.
pub fn block_by_variable(
    residuals: &Matrix,
    panel: &ForecastPanel,
    shrink_blocks: bool,
) -> Result<CovarianceEstimate> {
    check_panel(residuals, panel)?;
    let groups: Vec<Vec<usize>> =
        (0..panel.n()).map(|i| panel.variable_positions(i).to_vec()).collect();
    let m = panel.m();
    let mut w = Matrix::zeros(m, m);
    let (lambdas, singular) = blocks(residuals, &groups, shrink_blocks, &mut w)?;
    Ok(CovarianceEstimate {
        matrix: w,
        pattern: if shrink_blocks {
            CovPattern::BlockVariableShrunk
        } else {
            CovPattern::BlockVariable
        },
        lambdas,
        singular,
    })
}

/// Dispatches on `pattern`.
pub fn estimate(
    residuals: &Matrix,
    panel: &ForecastPanel,
    pattern: CovPattern,
) -> Result<CovarianceEstimate> {
    check_panel(residuals, panel)?;
    match pattern {
        CovPattern::Sample => sample_mse(residuals),
        CovPattern::Shrunk => shrink(residuals),
        CovPattern::BlockExpert => block_by_expert(residuals, panel, false),
        CovPattern::BlockExpertShrunk => block_by_expert(residuals, panel, true),
        CovPattern::BlockVariable => block_by_variable(residuals, panel, false),
        CovPattern::BlockVariableShrunk => block_by_variable(residuals, panel, true),
        CovPattern::Diagonal => diagonal(residuals),
        CovPattern::Supplied => Err(Error::Schema(
            "`supplied` is not an estimator; pass the matrix directly".into(),
        )),
    }
}
