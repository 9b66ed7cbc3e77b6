use thiserror::Error;

/// Errors produced while building constraint systems, panels, covariance
/// estimates or any of the combination solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("rank deficient constraints: {0}")]
    RankDeficient(String),

    #[error("unknown series label `{0}`")]
    UnknownLabel(String),

    #[error("duplicate forecast for series `{series}` from expert `{expert}`")]
    DuplicateForecast { series: String, expert: String },

    #[error("series `{0}` has no base forecasts")]
    MissingSeries(String),

    #[error("missing residual for series `{series}`, expert `{expert}` at t={t}")]
    MissingResidual {
        series: String,
        expert: String,
        t: usize,
    },

    #[error("insufficient observations: {0}")]
    InsufficientData(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("covariance estimate is singular ({0}); use a shrunk or block estimator")]
    SingularCovariance(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("invalid input: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical kind (rank deficiency, loss of
    /// positive definiteness, singular estimates, non-convergence).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient(_)
                | Error::ZeroVariance(_)
                | Error::NotPositiveDefinite(_)
                | Error::SingularCovariance(_)
                | Error::NoConvergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
