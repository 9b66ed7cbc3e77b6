//! Coherent combination of multi-expert forecasts for linearly constrained
//! multiple time series.
//!
//! Several experts forecast (possibly different subsets of) the `n` variables
//! of a series that obeys `C y = 0`. The crate computes the minimum-MSE linear
//! combination of all those forecasts that is itself coherent, together with
//! the covariance estimators, sequential baselines, a Monte-Carlo simulator
//! and the accuracy metrics used to compare them.
//!
//! ```
//! use coherent_combination::prelude::*;
//!
//! let sys = coherent_combination::constraints::three_level_hierarchy();
//! let mut entries = Vec::new();
//! for (e, shift) in [("e1", 0.5), ("e2", -0.5)] {
//!     for (i, label) in sys.labels().iter().enumerate() {
//!         entries.push(ForecastEntry::new(label, e, 10.0 + i as f64 + shift));
//!     }
//! }
//! let panel = ForecastPanel::build(&entries, &sys).unwrap();
//! let cov = CovarianceEstimate::from_matrix(Matrix::identity(14, 14)).unwrap();
//! let res = occ(&panel, &sys, &cov, Formulation::ZcBe).unwrap();
//! assert!(sys.is_coherent(&res.y_tilde, 1e-9).unwrap());
//! ```

pub mod cli;
pub mod coherent;
pub mod combiners;
pub mod constraints;
pub mod covariance;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod panel;
pub mod simulation;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::coherent::{mint_reconcile, occ, scr, src, CoherentResult, Formulation};
    pub use crate::combiners::{
        combine_multi_task, combine_single_task, MultiTaskCombination, WeightScheme,
    };
    pub use crate::constraints::ConstraintSystem;
    pub use crate::covariance::{CovPattern, CovarianceEstimate};
    pub use crate::error::{Error, Result};
    pub use crate::linalg::{Matrix, Vector};
    pub use crate::panel::{FittedEntry, ForecastEntry, ForecastPanel};
}
