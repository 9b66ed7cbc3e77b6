use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::dgp::{generate_replication, SimulationConfig};
use crate::coherent::{occ, scr, src, Formulation};
use crate::combiners::{combined_residuals, single_task_weights, WeightScheme};
use crate::constraints::{three_level_hierarchy, ConstraintSystem};
use crate::covariance::{self, CovarianceEstimate};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::panel::ForecastPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    /// Expert with the smallest in-sample MSE.
    BaseStar,
    /// That expert, reconciled with its shrunk MSE matrix.
    BaseStarShr,
    /// Expert whose reconciled forecasts have the smallest in-sample MSE.
    BaseShr,
    Ew,
    OwVar,
    OwCov,
    Src,
    ScrEw,
    ScrVar,
    ScrCov,
    /// Coherent combination, shrunk block-diagonal by expert.
    OccBe,
    /// Coherent combination, shrunk block-diagonal by variable.
    OccBv,
    /// Coherent combination, shrunk full MSE matrix.
    OccShr,
    /// Coherent combination, diagonal MSE matrix.
    OccWls,
}

impl Method {
    pub const ALL: [Method; 14] = [
        Method::BaseStar,
        Method::BaseStarShr,
        Method::BaseShr,
        Method::Ew,
        Method::OwVar,
        Method::OwCov,
        Method::Src,
        Method::ScrEw,
        Method::ScrVar,
        Method::ScrCov,
        Method::OccBe,
        Method::OccBv,
        Method::OccShr,
        Method::OccWls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::BaseStar => "base-star",
            Method::BaseStarShr => "base-star-shr",
            Method::BaseShr => "base-shr",
            Method::Ew => "ew",
            Method::OwVar => "ow-var",
            Method::OwCov => "ow-cov",
            Method::Src => "src",
            Method::ScrEw => "scr-ew",
            Method::ScrVar => "scr-var",
            Method::ScrCov => "scr-cov",
            Method::OccBe => "occ-be",
            Method::OccBv => "occ-bv",
            Method::OccShr => "occ-shr",
            Method::OccWls => "occ-wls",
        }
    }

    /// Methods that pick or reconcile single experts need every expert to
    /// forecast every variable.
    pub fn needs_balanced(self) -> bool {
        matches!(
            self,
            Method::BaseStar | Method::BaseStarShr | Method::BaseShr | Method::Src
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('_', "-");
        Method::ALL
            .iter()
            .find(|m| m.name() == key)
            .copied()
            .ok_or_else(|| Error::Schema(format!("unknown method `{s}`")))
    }
}

/// Relative accuracy of each method against equal weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentTable {
    pub methods: Vec<Method>,
    pub avg_rel_mae: Vec<f64>,
    pub avg_rel_mse: Vec<f64>,
    pub replications: usize,
}

impl ExperimentTable {
    pub fn get(&self, method: Method) -> Option<(f64, f64)> {
        let k = self.methods.iter().position(|&m| m == method)?;
        Some((self.avg_rel_mae[k], self.avg_rel_mse[k]))
    }
}

fn expert_block(residuals: &Matrix, panel: &ForecastPanel, j: usize) -> Matrix {
    let r = panel.expert_range(j);
    residuals.rows(r.start, r.len()).into_owned()
}

fn mean_mse(e: &Matrix) -> f64 {
    e.norm_squared() / e.len() as f64
}

/// Selects expert `j`'s forecasts: `Γ` with identity on `j`'s block.
fn pick_expert(panel: &ForecastPanel, j: usize) -> Matrix {
    let mut g = Matrix::zeros(panel.m(), panel.n());
    for k in panel.expert_range(j) {
        g[(k, panel.cells()[k].0)] = 1.0;
    }
    g
}

fn reconciled_expert(panel: &ForecastPanel, sys: &ConstraintSystem, residuals: &Matrix, j: usize) -> Result<(Matrix, Matrix)> {
    let e = expert_block(residuals, panel, j);
    let w = covariance::shrink(&e)?.matrix;
    let m = crate::coherent::projection_matrix(sys, &w);
    let mut g = Matrix::zeros(panel.m(), panel.n());
    let r = panel.expert_range(j);
    g.rows_mut(r.start, r.len()).copy_from(&m.transpose());
    Ok((g, &m * e))
}

/// The `m x n` weight matrix `Ψ` of `method` (forecast `Ψᵀ ŷ`), estimated
/// from the by-expert in-sample residuals.
pub fn method_weights(
    method: Method,
    panel: &ForecastPanel,
    sys: &ConstraintSystem,
    residuals: &Matrix,
) -> Result<Matrix> {
    if method.needs_balanced() && !panel.is_balanced() {
        return Err(Error::Unsupported(format!("{method} needs a balanced panel")));
    }
    let scr_with = |scheme: WeightScheme, cov: Option<CovarianceEstimate>| -> Result<Matrix> {
        let weights = single_task_weights(panel, scheme, cov.as_ref())?;
        let combined = combined_residuals(panel, &weights, residuals)?;
        let rec_cov = covariance::shrink(&combined)?;
        Ok(scr(panel, sys, scheme, cov.as_ref(), &rec_cov.matrix)?.psi)
    };
    let occ_with = |cov: CovarianceEstimate| -> Result<Matrix> {
        Ok(occ(panel, sys, &cov, Formulation::ZcBe)?.psi)
    };
    match method {
        Method::BaseStar | Method::BaseStarShr => {
            let best = (0..panel.p())
                .map(|j| (j, mean_mse(&expert_block(residuals, panel, j))))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
                .0;
            if method == Method::BaseStar {
                Ok(pick_expert(panel, best))
            } else {
                Ok(reconciled_expert(panel, sys, residuals, best)?.0)
            }
        }
        Method::BaseShr => {
            let mut best: Option<(f64, Matrix)> = None;
            for j in 0..panel.p() {
                let (g, e) = reconciled_expert(panel, sys, residuals, j)?;
                let score = mean_mse(&e);
                if best.as_ref().is_none_or(|b| score < b.0) {
                    best = Some((score, g));
                }
            }
            Ok(best.expect("at least one expert").1)
        }
        Method::Ew => Ok(single_task_weights(panel, WeightScheme::Equal, None)?.matrix(panel)),
        Method::OwVar => {
            let cov = covariance::diagonal(residuals)?;
            Ok(single_task_weights(panel, WeightScheme::InverseVariance, Some(&cov))?.matrix(panel))
        }
        Method::OwCov => {
            let cov = covariance::block_by_variable(residuals, panel, false)?;
            Ok(single_task_weights(panel, WeightScheme::SimplexCovariance, Some(&cov))?.matrix(panel))
        }
        Method::Src => {
            let covs = (0..panel.p())
                .map(|j| Ok(covariance::shrink(&expert_block(residuals, panel, j))?.matrix))
                .collect::<Result<Vec<_>>>()?;
            Ok(src(panel, sys, &covs)?.psi)
        }
        Method::ScrEw => scr_with(WeightScheme::Equal, None),
        Method::ScrVar => scr_with(WeightScheme::InverseVariance, Some(covariance::diagonal(residuals)?)),
        Method::ScrCov => scr_with(
            WeightScheme::SimplexCovariance,
            Some(covariance::block_by_variable(residuals, panel, false)?),
        ),
        Method::OccBe => occ_with(covariance::block_by_expert(residuals, panel, true)?),
        Method::OccBv => occ_with(covariance::block_by_variable(residuals, panel, true)?),
        Method::OccShr => occ_with(covariance::shrink(residuals)?),
        Method::OccWls => occ_with(covariance::diagonal(residuals)?),
    }
}

/// Per-method, per-series test MAE and MSE of one replication.
struct RepLosses {
    mae: Vec<Vec<f64>>,
    mse: Vec<Vec<f64>>,
}

fn run_replication(cfg: &SimulationConfig, methods: &[Method], rep: usize) -> Result<RepLosses> {
    let sys = three_level_hierarchy();
    let data = generate_replication(cfg, rep)?;
    let n = sys.n();
    let experts = (0..cfg.p).map(|j| format!("e{}", j + 1)).collect();
    let panel = ForecastPanel::from_dense(&sys, experts, data.availability.clone(), &Matrix::zeros(n, cfg.p))?;

    let train = data.actuals.rows(0, cfg.n_train).into_owned();
    let fitted: Vec<Matrix> = data.forecasts.iter().map(|f| f.rows(0, cfg.n_train).into_owned()).collect();
    let residuals = panel.residuals_from_matrices(&train, &fitted)?;

    // m x Q test forecasts, by expert
    let q = cfg.test_len;
    let mut y_hat = Matrix::zeros(panel.m(), q);
    for (k, &(i, j)) in panel.cells().iter().enumerate() {
        for t in 0..q {
            y_hat[(k, t)] = data.forecasts[j][(cfg.n_train + t, i)];
        }
    }
    let actual = data.actuals.rows(cfg.n_train, q).transpose();

    let mut mae = Vec::with_capacity(methods.len());
    let mut mse = Vec::with_capacity(methods.len());
    for &method in methods {
        let psi = method_weights(method, &panel, &sys, &residuals)?;
        let err = &actual - psi.tr_mul(&y_hat);
        mae.push((0..n).map(|i| err.row(i).iter().map(|v| v.abs()).sum::<f64>() / q as f64).collect());
        mse.push((0..n).map(|i| err.row(i).norm_squared() / q as f64).collect());
    }
    Ok(RepLosses { mae, mse })
}

/// Runs all replications (in parallel) and reports AvgRelMAE and AvgRelMSE
/// against equal weights: the geometric mean over replications and series
/// of each method's loss ratio.
pub fn run_experiment(cfg: &SimulationConfig, methods: &[Method]) -> Result<ExperimentTable> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::Schema("no methods requested".into()));
    }
    if !cfg.balanced {
        if let Some(m) = methods.iter().find(|m| m.needs_balanced()) {
            return Err(Error::Unsupported(format!("{m} needs a balanced panel")));
        }
    }
    let mut all: Vec<Method> = methods.to_vec();
    if !all.contains(&Method::Ew) {
        all.push(Method::Ew);
    }
    let bench = all.iter().position(|&m| m == Method::Ew).expect("ew present");

    let results: Vec<Result<RepLosses>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, &all, rep))
        .collect();

    let mut log_mae = vec![0.0; all.len()];
    let mut log_mse = vec![0.0; all.len()];
    let mut count = 0usize;
    for r in results {
        let r = r?;
        for i in 0..r.mae[bench].len() {
            for k in 0..all.len() {
                log_mae[k] += (r.mae[k][i] / r.mae[bench][i]).ln();
                log_mse[k] += (r.mse[k][i] / r.mse[bench][i]).ln();
            }
            count += 1;
        }
    }
    let keep: Vec<usize> = (0..all.len()).filter(|&k| methods.contains(&all[k])).collect();
    Ok(ExperimentTable {
        methods: keep.iter().map(|&k| all[k]).collect(),
        avg_rel_mae: keep.iter().map(|&k| (log_mae[k] / count as f64).exp()).collect(),
        avg_rel_mse: keep.iter().map(|&k| (log_mse[k] / count as f64).exp()).collect(),
        replications: cfg.replications,
    })
}
