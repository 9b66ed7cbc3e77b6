//! Forecast combination without coherence: per-variable (single-task)
//! weights and the joint multi-task MMSE combination.

use std::fmt;
use std::str::FromStr;

use crate::covariance::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::panel::ForecastPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightScheme {
    /// `1 / p_i`.
    Equal,
    /// Proportional to inverse error variances.
    InverseVariance,
    /// Minimum error variance over the unit simplex.
    SimplexCovariance,
}

impl WeightScheme {
    pub fn name(self) -> &'static str {
        match self {
            WeightScheme::Equal => "ew",
            WeightScheme::InverseVariance => "ow-var",
            WeightScheme::SimplexCovariance => "ow-cov",
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ew" => Ok(WeightScheme::Equal),
            "ow-var" | "ow_var" => Ok(WeightScheme::InverseVariance),
            "ow-cov" | "ow_cov" => Ok(WeightScheme::SimplexCovariance),
            _ => Err(Error::Schema(format!("unknown weight scheme `{s}`"))),
        }
    }
}

/// Per-variable weights `γ_i`, aligned with `panel.variable_positions(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationWeights {
    pub scheme: WeightScheme,
    pub gamma: Vec<Vector>,
}

impl CombinationWeights {
    /// The `m x n` matrix `Γ` with `ŷᶜ = Γᵀ ŷ` (by-expert rows).
    pub fn matrix(&self, panel: &ForecastPanel) -> Matrix {
        let mut g = Matrix::zeros(panel.m(), panel.n());
        for (i, gamma) in self.gamma.iter().enumerate() {
            for (&k, &w) in panel.variable_positions(i).iter().zip(gamma.iter()) {
                g[(k, i)] = w;
            }
        }
        g
    }

    /// `ŷᶜ_i = γ_iᵀ ŷ_i` for by-expert values `y_hat`.
    pub fn apply(&self, panel: &ForecastPanel, y_hat: &Vector) -> Vector {
        Vector::from_iterator(
            panel.n(),
            self.gamma.iter().enumerate().map(|(i, gamma)| {
                panel
                    .variable_positions(i)
                    .iter()
                    .zip(gamma.iter())
                    .map(|(&k, &w)| w * y_hat[k])
                    .sum()
            }),
        )
    }
}

fn check_cov(panel: &ForecastPanel, cov: &CovarianceEstimate) -> Result<()> {
    if cov.dim() != panel.m() {
        return Err(Error::Dimension(format!(
            "covariance is {0}x{0} for a panel of {1} forecasts",
            cov.dim(),
            panel.m()
        )));
    }
    Ok(())
}

/// Single-task weights for every variable.
pub fn single_task_weights(
    panel: &ForecastPanel,
    scheme: WeightScheme,
    cov: Option<&CovarianceEstimate>,
) -> Result<CombinationWeights> {
    let cov = match (scheme, cov) {
        (WeightScheme::Equal, _) => None,
        (_, Some(c)) => {
            check_cov(panel, c)?;
            Some(c)
        }
        (_, None) => {
            return Err(Error::Schema(format!("scheme {scheme} needs a covariance estimate")))
        }
    };
    let mut gamma = Vec::with_capacity(panel.n());
    for i in 0..panel.n() {
        let pos = panel.variable_positions(i);
        let p_i = pos.len();
        let g = match scheme {
            WeightScheme::Equal => Vector::from_element(p_i, 1.0 / p_i as f64),
            WeightScheme::InverseVariance => {
                let w = cov.expect("checked").matrix.clone();
                let inv: Vec<f64> = pos
                    .iter()
                    .map(|&k| {
                        let v = w[(k, k)];
                        if v > 0.0 {
                            Ok(1.0 / v)
                        } else {
                            Err(Error::ZeroVariance(format!(
                                "forecast {k} of `{}`",
                                panel.series()[i]
                            )))
                        }
                    })
                    .collect::<Result<_>>()?;
                let total: f64 = inv.iter().sum();
                Vector::from_iterator(p_i, inv.iter().map(|v| v / total))
            }
            WeightScheme::SimplexCovariance => {
                let c = cov.expect("checked");
                let sigma = linalg::permute_symmetric(&c.matrix, pos);
                simplex_min_variance(&sigma).map_err(|e| match e {
                    Error::NotPositiveDefinite(_) => Error::SingularCovariance(format!(
                        "per-variable block of `{}`",
                        panel.series()[i]
                    )),
                    other => other,
                })?
            }
        };
        gamma.push(g);
    }
    Ok(CombinationWeights { scheme, gamma })
}

/// Incoherent single-task combined forecast `ŷᶜ` (length `n`).
pub fn combine_single_task(
    panel: &ForecastPanel,
    scheme: WeightScheme,
    cov: Option<&CovarianceEstimate>,
) -> Result<Vector> {
    let w = single_task_weights(panel, scheme, cov)?;
    Ok(w.apply(panel, panel.y_hat()))
}

/// Unconstrained minimum-variance weights `Σ⁻¹1 / (1ᵀΣ⁻¹1)`, no positivity.
pub fn unconstrained_min_variance(sigma: &Matrix) -> Result<Vector> {
    let chol = linalg::cholesky(sigma, "per-variable covariance")?;
    let x = chol.solve(&Vector::from_element(sigma.nrows(), 1.0));
    let s = x.sum();
    Ok(x / s)
}

/// `argmin γᵀ Σ γ` subject to `1ᵀγ = 1`, `γ ≥ 0`.
///
/// Primal active-set method started from equal weights. Each iteration
/// solves the equality-constrained problem on the free coordinates; a
/// blocking step fixes one coordinate at zero, and a fixed coordinate whose
/// multiplier is negative is released. Ties at zero stay at zero.
pub fn simplex_min_variance(sigma: &Matrix) -> Result<Vector> {
    let p = sigma.nrows();
    if p == 0 || !sigma.is_square() {
        return Err(Error::Dimension("simplex weights need a non-empty square matrix".into()));
    }
    linalg::ensure_finite(sigma, "per-variable covariance")?;
    if p == 1 {
        return Ok(Vector::from_element(1, 1.0));
    }
    // definiteness of the whole block keeps every sub-problem well posed
    linalg::cholesky(sigma, "per-variable covariance")?;
    let scale = (0..p).map(|k| sigma[(k, k)]).fold(0.0, f64::max);
    let tol = 1e-12 * scale;

    let mut x = Vector::from_element(p, 1.0 / p as f64);
    let mut fixed = vec![false; p];
    for _ in 0..(50 * p + 100) {
        let free: Vec<usize> = (0..p).filter(|&k| !fixed[k]).collect();
        let sub = linalg::permute_symmetric(sigma, &free);
        let target = unconstrained_min_variance(&sub)?;
        let step: Vec<f64> = free.iter().enumerate().map(|(a, &k)| target[a] - x[k]).collect();
        let moving = step.iter().any(|s| s.abs() > 1e-14);

        if !moving {
            // x is optimal on the current face; check multipliers of fixed zeros
            let g = sigma * &x;
            let nu = free.iter().map(|&k| g[k]).sum::<f64>() / free.len() as f64;
            let worst = (0..p)
                .filter(|&k| fixed[k])
                .map(|k| (k, g[k] - nu))
                .fold(None, |acc: Option<(usize, f64)>, c| match acc {
                    Some(a) if a.1 <= c.1 => Some(a),
                    _ => Some(c),
                });
            match worst {
                Some((k, mu)) if mu < -tol => fixed[k] = false,
                _ => return Ok(x),
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut block = None;
        for (a, &k) in free.iter().enumerate() {
            if step[a] < 0.0 {
                let r = -x[k] / step[a];
                if r < alpha {
                    alpha = r;
                    block = Some(k);
                }
            }
        }
        for (a, &k) in free.iter().enumerate() {
            x[k] += alpha * step[a];
        }
        if let Some(k) = block {
            x[k] = 0.0;
            fixed[k] = true;
        }
        // keep the iterate exactly on the simplex
        for v in x.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let s = x.sum();
        x /= s;
    }
    Err(Error::NoConvergence("simplex weights active set".into()))
}

/// The multi-task MMSE combination `ŷᶜ = Ωᵀ ŷ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskCombination {
    pub y_c: Vector,
    /// `W⁻¹ K W_c` (`m x n`).
    pub omega: Matrix,
    /// `(Kᵀ W⁻¹ K)⁻¹` (`n x n`).
    pub w_c: Matrix,
}

pub fn combine_multi_task(
    panel: &ForecastPanel,
    cov: &CovarianceEstimate,
) -> Result<MultiTaskCombination> {
    check_cov(panel, cov)?;
    let w = cov.require_nonsingular()?;
    let chol = linalg::cholesky(w, "error covariance W")?;
    let k = panel.k_matrix();
    let winv_k = chol.solve(&k);
    let info = k.transpose() * &winv_k;
    let info_chol = linalg::cholesky(&info, "Kᵀ W⁻¹ K")
        .expect("Kᵀ W⁻¹ K is definite when W is and every variable is covered");
    let w_c = info_chol.inverse();
    let omega = winv_k * &w_c;
    let y_c = omega.transpose() * panel.y_hat();
    Ok(MultiTaskCombination { y_c, omega, w_c })
}

/// Combined in-sample residuals `Γᵀ E` (`n x T`) for by-expert residuals `E`.
pub fn combined_residuals(
    panel: &ForecastPanel,
    weights: &CombinationWeights,
    residuals: &Matrix,
) -> Result<Matrix> {
    if residuals.nrows() != panel.m() {
        return Err(Error::Dimension(format!(
            "{} residual rows for a panel of {} forecasts",
            residuals.nrows(),
            panel.m()
        )));
    }
    Ok(weights.matrix(panel).transpose() * residuals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::ConstraintSystem;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn panel(n: usize, p: usize, mask: Option<DMatrix<bool>>) -> ForecastPanel {
        let sys = ConstraintSystem::unconstrained((0..n).map(|i| format!("v{i}")).collect()).unwrap();
        let values = Matrix::from_fn(n, p, |i, j| (i * 10 + j) as f64);
        ForecastPanel::from_dense(
            &sys,
            (0..p).map(|j| format!("e{j}")).collect(),
            mask.unwrap_or_else(|| DMatrix::from_element(n, p, true)),
            &values,
        )
        .unwrap()
    }

    fn random_spd(m: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let a = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + Matrix::identity(m, m) * 0.1
    }

    #[test]
    fn single_expert_passes_through() {
        let p = panel(3, 1, None);
        let cov = CovarianceEstimate::from_matrix(Matrix::from_diagonal_element(3, 3, 2.0)).unwrap();
        for scheme in [WeightScheme::Equal, WeightScheme::InverseVariance, WeightScheme::SimplexCovariance] {
            let y = combine_single_task(&p, scheme, Some(&cov)).unwrap();
            assert_eq!(y, *p.y_hat());
        }
    }

    #[test]
    fn identity_covariance_gives_equal_weights() {
        let p = panel(2, 4, None);
        let cov = CovarianceEstimate::from_matrix(Matrix::identity(8, 8)).unwrap();
        for scheme in [WeightScheme::Equal, WeightScheme::InverseVariance, WeightScheme::SimplexCovariance] {
            let w = single_task_weights(&p, scheme, Some(&cov)).unwrap();
            for g in &w.gamma {
                for &v in g.iter() {
                    assert!((v - 0.25).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn inverse_variance_closed_form() {
        let p = panel(1, 2, None);
        let cov = CovarianceEstimate::from_matrix(Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 4.0]))).unwrap();
        let w = single_task_weights(&p, WeightScheme::InverseVariance, Some(&cov)).unwrap();
        assert!((w.gamma[0][0] - 0.8).abs() < 1e-15);
        assert!((w.gamma[0][1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn covariance_schemes_need_a_covariance() {
        let p = panel(1, 2, None);
        assert!(combine_single_task(&p, WeightScheme::InverseVariance, None).is_err());
        assert!(combine_single_task(&p, WeightScheme::Equal, None).is_ok());
    }

    fn check_kkt(sigma: &Matrix, x: &Vector) {
        assert!((x.sum() - 1.0).abs() < 1e-12);
        assert!(x.iter().all(|&v| v >= 0.0));
        let g = sigma * x;
        let active: Vec<usize> = (0..x.len()).filter(|&k| x[k] > 1e-12).collect();
        let nu = g[active[0]];
        for &k in &active {
            assert!((g[k] - nu).abs() < 1e-8, "{g} {x}");
        }
        for k in 0..x.len() {
            assert!(g[k] >= nu - 1e-8);
        }
    }

    #[test]
    fn simplex_weights_satisfy_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in 2..8 {
            for _ in 0..40 {
                let sigma = random_spd(p, &mut rng);
                let x = simplex_min_variance(&sigma).unwrap();
                check_kkt(&sigma, &x);
            }
        }
    }

    #[test]
    fn simplex_weights_match_unconstrained_when_interior() {
        let sigma = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]);
        let a = simplex_min_variance(&sigma).unwrap();
        let b = unconstrained_min_variance(&sigma).unwrap();
        assert!((a - b).amax() < 1e-14);
    }

    #[test]
    fn simplex_weights_hit_the_boundary() {
        // strong positive correlation with a much worse second expert: the
        // unconstrained optimum shorts it
        let sigma = Matrix::from_row_slice(2, 2, &[1.0, 1.8, 1.8, 4.0]);
        let b = unconstrained_min_variance(&sigma).unwrap();
        assert!(b[1] < 0.0);
        let a = simplex_min_variance(&sigma).unwrap();
        assert_eq!(a.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn balanced_identity_multi_task_is_the_mean() {
        let p = panel(3, 4, None);
        let cov = CovarianceEstimate::from_matrix(Matrix::identity(12, 12)).unwrap();
        let mt = combine_multi_task(&p, &cov).unwrap();
        for i in 0..3 {
            let mean: f64 = (0..4).map(|j| (i * 10 + j) as f64).sum::<f64>() / 4.0;
            assert!((mt.y_c[i] - mean).abs() < 1e-12);
        }
        assert!((mt.w_c - Matrix::identity(3, 3) / 4.0).amax() < 1e-14);
    }

    #[test]
    fn multi_task_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mask = DMatrix::from_row_slice(3, 4, &[
            true, false, true, false,
            false, true, false, false,
            true, true, true, true,
        ]);
        let p = panel(3, 4, Some(mask));
        let w = random_spd(p.m(), &mut rng);
        let cov = CovarianceEstimate::from_matrix(w.clone()).unwrap();
        let mt = combine_multi_task(&p, &cov).unwrap();
        // GLS of ŷ = K y + ε by explicit inverses
        let k = p.k_matrix();
        let winv = w.clone().try_inverse().unwrap();
        let lhs = k.transpose() * &winv * &k;
        let rhs = k.transpose() * &winv * p.y_hat();
        let y = lhs.clone().try_inverse().unwrap() * rhs;
        assert!((mt.y_c - y).amax() < 1e-9);
        assert!((mt.omega.transpose() * &k - Matrix::identity(3, 3)).amax() < 1e-10);
        assert!((mt.w_c - lhs.try_inverse().unwrap()).amax() < 1e-9);
    }

    #[test]
    fn one_expert_multi_task_is_identity() {
        let p = panel(4, 1, None);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cov = CovarianceEstimate::from_matrix(random_spd(4, &mut rng)).unwrap();
        let mt = combine_multi_task(&p, &cov).unwrap();
        assert!((mt.y_c - p.y_hat()).amax() < 1e-10);
    }

    #[test]
    fn combined_residuals_follow_weights() {
        let p = panel(2, 2, None);
        let w = single_task_weights(&p, WeightScheme::Equal, None).unwrap();
        let e = Matrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let c = combined_residuals(&p, &w, &e).unwrap();
        // by-expert rows: (v0,e0), (v1,e0), (v0,e1), (v1,e1)
        assert_eq!(c, Matrix::from_row_slice(2, 2, &[3.0, 4.0, 5.0, 6.0]));
    }
}
