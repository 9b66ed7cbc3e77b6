//! Optimal coherent combination and the sequential baselines.
//!
//! `occ` solves for the minimum-MSE linear unbiased combination of all base
//! forecasts that satisfies `C y = 0`. The four formulations (zero-constrained
//! or structural, by-expert or by-variable) are computed independently and
//! agree up to rounding.

use std::fmt;
use std::str::FromStr;

use crate::combiners::{self, WeightScheme};
use crate::constraints::ConstraintSystem;
use crate::covariance::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::panel::ForecastPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formulation {
    /// Zero-constrained, by expert.
    ZcBe,
    /// Zero-constrained, by variable.
    ZcBv,
    /// Structural, by expert.
    StructBe,
    /// Structural, by variable.
    StructBv,
}

impl Formulation {
    pub const ALL: [Formulation; 4] = [
        Formulation::ZcBe,
        Formulation::ZcBv,
        Formulation::StructBe,
        Formulation::StructBv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Formulation::ZcBe => "zc-be",
            Formulation::ZcBv => "zc-bv",
            Formulation::StructBe => "struct-be",
            Formulation::StructBv => "struct-bv",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Formulation::ALL
            .iter()
            .find(|f| f.name() == s || f.name().replace('-', "_") == s)
            .copied()
            .ok_or_else(|| Error::Schema(format!("unknown formulation `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherentResult {
    /// Coherent combined forecast (length `n`).
    pub y_tilde: Vector,
    /// By-expert weights (`m x n`): `ỹ = Ψᵀ ŷ`.
    pub psi: Matrix,
    /// By-variable weights (`m x n`) for the by-variable formulations:
    /// `ỹ = Φᵀ ŷ_bv`.
    pub phi: Option<Matrix>,
    /// Error covariance of `ỹ` (`n x n`).
    pub w_tilde: Matrix,
    pub formulation: Formulation,
}

impl CoherentResult {
    /// `Ψᵀ ŷ` for new by-expert base forecasts with the same structure.
    pub fn apply(&self, y_hat: &Vector) -> Vector {
        self.psi.tr_mul(y_hat)
    }

    /// The expert-`j` block `Ψ_j` (`n_j x n`).
    pub fn psi_block(&self, panel: &ForecastPanel, j: usize) -> Matrix {
        let r = panel.expert_range(j);
        self.psi.rows(r.start, r.len()).into_owned()
    }
}

fn check_inputs(panel: &ForecastPanel, sys: &ConstraintSystem, cov: &CovarianceEstimate) -> Result<()> {
    if panel.series() != sys.labels() {
        return Err(Error::Schema(
            "panel and constraint system have different variables".into(),
        ));
    }
    if cov.dim() != panel.m() {
        return Err(Error::Dimension(format!(
            "covariance is {0}x{0} for a panel of {1} forecasts",
            cov.dim(),
            panel.m()
        )));
    }
    Ok(())
}

/// `M = I - V Cᵀ (C V Cᵀ)⁻¹ C` for an SPD `V`.
pub fn projection_matrix(sys: &ConstraintSystem, v: &Matrix) -> Matrix {
    let n = sys.n();
    let c = sys.zero_constraints();
    if c.nrows() == 0 {
        return Matrix::identity(n, n);
    }
    let vct = v * c.transpose();
    let cvct = c * &vct;
    let chol = linalg::cholesky(&cvct, "C W_c Cᵀ")
        .expect("C W_c Cᵀ is definite for full-rank C and definite W_c");
    Matrix::identity(n, n) - vct * chol.solve(c)
}

/// Information matrix `Xᵀ V⁻¹ X` and the weights `V⁻¹ X` for selector `X`.
fn information(v: &Matrix, x: &Matrix, what: &str) -> Result<(Matrix, Matrix)> {
    let chol = linalg::cholesky(v, what)?;
    let vinv_x = chol.solve(x);
    Ok((x.transpose() * &vinv_x, vinv_x))
}

fn zero_constrained(
    sys: &ConstraintSystem,
    v: &Matrix,
    x: &Matrix,
    y: &Vector,
    what: &str,
) -> Result<(Vector, Matrix, Matrix)> {
    let (info, vinv_x) = information(v, x, what)?;
    let v_c = linalg::cholesky(&info, "combined information")
        .expect("information matrix is definite when every variable is covered")
        .inverse();
    let omega = vinv_x * &v_c;
    let m = projection_matrix(sys, &v_c);
    let weights = omega * m.transpose();
    let y_tilde = weights.tr_mul(y);
    let w_tilde = m * v_c;
    Ok((y_tilde, weights, w_tilde))
}

fn structural(
    sys: &ConstraintSystem,
    v: &Matrix,
    x: &Matrix,
    y: &Vector,
    what: &str,
) -> Result<(Vector, Matrix, Matrix)> {
    let s = sys.structural();
    let (info, vinv_x) = information(v, x, what)?;
    // Sᵀ Xᵀ V⁻¹ X S, the information on the free variables
    let b_info = s.transpose() * &info * s;
    let chol = linalg::cholesky(&b_info, "structural information")
        .expect("Sᵀ W_c⁻¹ S is definite for full column rank S");
    // G = (Sᵀ W_c⁻¹ S)⁻¹ Sᵀ Xᵀ V⁻¹
    let g = chol.solve(&(s.transpose() * vinv_x.transpose()));
    let sg = s * &g;
    let y_tilde = &sg * y;
    let weights = sg.transpose();
    let w_tilde = s * chol.solve(&s.transpose());
    Ok((y_tilde, weights, w_tilde))
}

/// Optimal coherent combination of the panel's base forecasts.
pub fn occ(
    panel: &ForecastPanel,
    sys: &ConstraintSystem,
    cov: &CovarianceEstimate,
    formulation: Formulation,
) -> Result<CoherentResult> {
    check_inputs(panel, sys, cov)?;
    let w = cov.require_nonsingular()?;
    let (y_tilde, psi, phi, w_tilde) = match formulation {
        Formulation::ZcBe => {
            let (y, psi, wt) = zero_constrained(sys, w, &panel.k_matrix(), panel.y_hat(), "error covariance W")?;
            (y, psi, None, wt)
        }
        Formulation::StructBe => {
            let (y, psi, wt) = structural(sys, w, &panel.k_matrix(), panel.y_hat(), "error covariance W")?;
            (y, psi, None, wt)
        }
        Formulation::ZcBv | Formulation::StructBv => {
            let sigma = panel.matrix_to_by_variable(w);
            let y_bv = panel.to_by_variable(panel.y_hat());
            let j = panel.j_matrix();
            let (y, phi, wt) = if formulation == Formulation::ZcBv {
                zero_constrained(sys, &sigma, &j, &y_bv, "error covariance Σ")?
            } else {
                structural(sys, &sigma, &j, &y_bv, "error covariance Σ")?
            };
            // Ψ = Pᵀ Φ
            let mut psi = Matrix::zeros(panel.m(), panel.n());
            for (pos, &k) in panel.bv_order().iter().enumerate() {
                psi.row_mut(k).copy_from(&phi.row(pos));
            }
            (y, psi, Some(phi), wt)
        }
    };
    Ok(CoherentResult {
        y_tilde,
        psi,
        phi,
        w_tilde,
        formulation,
    })
}

/// Single-expert reconciliation `ỹ = (I - W Cᵀ (C W Cᵀ)⁻¹ C) ŷ`.
pub fn mint_reconcile(y_hat: &Vector, sys: &ConstraintSystem, cov: &Matrix) -> Result<CoherentResult> {
    let panel = ForecastPanel::single(sys, y_hat)?;
    let cov = CovarianceEstimate::from_matrix(cov.clone())?;
    occ(&panel, sys, &cov, Formulation::ZcBe)
}

/// Combine first with single-task weights, then reconcile the combination.
///
/// `cov_combine` feeds the weights (unused for equal weights);
/// `cov_reconcile` is the `n x n` error covariance of the combined forecast.
pub fn scr(
    panel: &ForecastPanel,
    sys: &ConstraintSystem,
    scheme: WeightScheme,
    cov_combine: Option<&CovarianceEstimate>,
    cov_reconcile: &Matrix,
) -> Result<CoherentResult> {
    if panel.series() != sys.labels() {
        return Err(Error::Schema(
            "panel and constraint system have different variables".into(),
        ));
    }
    let weights = combiners::single_task_weights(panel, scheme, cov_combine)?;
    let gamma = weights.matrix(panel);
    let y_c = gamma.tr_mul(panel.y_hat());
    let rec = mint_reconcile(&y_c, sys, cov_reconcile)?;
    Ok(CoherentResult {
        y_tilde: rec.y_tilde,
        psi: gamma * rec.psi,
        phi: None,
        w_tilde: rec.w_tilde,
        formulation: Formulation::ZcBe,
    })
}

/// Reconcile each expert separately, then average with equal weights.
///
/// Only defined for balanced panels. `cov_per_expert[j]` is expert `j`'s
/// `n x n` error covariance. The reported `w_tilde` assumes independent
/// errors across experts.
pub fn src(
    panel: &ForecastPanel,
    sys: &ConstraintSystem,
    cov_per_expert: &[Matrix],
) -> Result<CoherentResult> {
    if !panel.is_balanced() {
        return Err(Error::Unsupported(
            "reconcile-then-average needs every expert to forecast every variable".into(),
        ));
    }
    if panel.series() != sys.labels() {
        return Err(Error::Schema(
            "panel and constraint system have different variables".into(),
        ));
    }
    if cov_per_expert.len() != panel.p() {
        return Err(Error::Dimension(format!(
            "{} covariances for {} experts",
            cov_per_expert.len(),
            panel.p()
        )));
    }
    let n = panel.n();
    let p = panel.p() as f64;
    let mut y_tilde = Vector::zeros(n);
    let mut psi = Matrix::zeros(panel.m(), n);
    let mut w_tilde = Matrix::zeros(n, n);
    for (j, w_j) in cov_per_expert.iter().enumerate() {
        let r = panel.expert_range(j);
        let y_j = panel.y_hat().rows(r.start, n).into_owned();
        let rec = mint_reconcile(&y_j, sys, w_j)?;
        y_tilde += rec.y_tilde / p;
        psi.rows_mut(r.start, n).copy_from(&(rec.psi / p));
        w_tilde += rec.w_tilde / (p * p);
    }
    Ok(CoherentResult {
        y_tilde,
        psi,
        phi: None,
        w_tilde,
        formulation: Formulation::ZcBe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::three_level_hierarchy;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(m: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let a = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + Matrix::identity(m, m) * 0.2
    }

    fn balanced(sys: &ConstraintSystem, values: &Matrix) -> ForecastPanel {
        let p = values.ncols();
        ForecastPanel::from_dense(
            sys,
            (0..p).map(|j| format!("e{j}")).collect(),
            DMatrix::from_element(sys.n(), p, true),
            values,
        )
        .unwrap()
    }

    #[test]
    fn mean_of_coherent_experts_is_kept() {
        let sys = three_level_hierarchy();
        let mut values = Matrix::zeros(7, 3);
        for j in 0..3 {
            let b = Vector::from_vec(vec![1.0 + j as f64, 2.0, -(j as f64), 0.5]);
            values.set_column(j, &(sys.structural() * b));
        }
        let panel = balanced(&sys, &values);
        let cov = CovarianceEstimate::from_matrix(Matrix::identity(21, 21)).unwrap();
        for f in Formulation::ALL {
            let res = occ(&panel, &sys, &cov, f).unwrap();
            let mean = values.column_mean();
            assert!((res.y_tilde - mean).amax() < 1e-12, "{f}");
        }
    }

    #[test]
    fn formulations_agree() {
        let sys = three_level_hierarchy();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let values = Matrix::from_fn(7, 3, |_, _| rng.random_range(-5.0..5.0));
        let mut mask = DMatrix::from_element(7, 3, true);
        mask[(0, 1)] = false;
        mask[(4, 2)] = false;
        mask[(6, 0)] = false;
        let panel = ForecastPanel::from_dense(&sys, vec!["a".into(), "b".into(), "c".into()], mask, &values).unwrap();
        let cov = CovarianceEstimate::from_matrix(random_spd(panel.m(), &mut rng)).unwrap();
        let base = occ(&panel, &sys, &cov, Formulation::ZcBe).unwrap();
        for f in Formulation::ALL {
            let res = occ(&panel, &sys, &cov, f).unwrap();
            assert!((&res.y_tilde - &base.y_tilde).amax() < 1e-10, "{f}");
            assert!((&res.psi - &base.psi).amax() < 1e-10, "{f}");
            assert!((&res.w_tilde - &base.w_tilde).amax() < 1e-10, "{f}");
            assert!(sys.coherence_error(&res.y_tilde).unwrap() < 1e-10);
            assert_eq!(res.phi.is_some(), matches!(f, Formulation::ZcBv | Formulation::StructBv));
        }
    }

    #[test]
    fn projection_is_idempotent_and_annihilated_by_c() {
        let sys = three_level_hierarchy();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_spd(7, &mut rng);
        let m = projection_matrix(&sys, &v);
        assert!((&m * &m - &m).amax() < 1e-10);
        assert!((sys.zero_constraints() * &m).amax() < 1e-10);
    }

    #[test]
    fn mint_keeps_coherent_forecasts() {
        let sys = three_level_hierarchy();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = sys.structural() * Vector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let res = mint_reconcile(&y, &sys, &random_spd(7, &mut rng)).unwrap();
        assert!((res.y_tilde - y).amax() < 1e-12);
    }

    #[test]
    fn identity_mint_is_orthogonal_projection() {
        let sys = three_level_hierarchy();
        let mut e1 = Vector::zeros(7);
        e1[0] = 1.0;
        let res = mint_reconcile(&e1, &sys, &Matrix::identity(7, 7)).unwrap();
        let c = sys.zero_constraints();
        let cct = (c * c.transpose()).try_inverse().unwrap();
        let proj = Matrix::identity(7, 7) - c.transpose() * cct * c;
        assert!((res.y_tilde - proj * e1).amax() < 1e-14);
    }

    #[test]
    fn single_expert_occ_is_mint() {
        let sys = three_level_hierarchy();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let y = Vector::from_fn(7, |_, _| rng.random_range(-3.0..3.0));
        let w = random_spd(7, &mut rng);
        let panel = ForecastPanel::single(&sys, &y).unwrap();
        let a = occ(&panel, &sys, &CovarianceEstimate::from_matrix(w.clone()).unwrap(), Formulation::ZcBe).unwrap();
        let b = mint_reconcile(&y, &sys, &w).unwrap();
        assert_eq!(a.y_tilde, b.y_tilde);
    }

    #[test]
    fn singular_estimates_are_refused() {
        let sys = three_level_hierarchy();
        let panel = ForecastPanel::single(&sys, &Vector::zeros(7)).unwrap();
        let mut cov = CovarianceEstimate::from_matrix(Matrix::identity(7, 7)).unwrap();
        cov.singular = true;
        let err = occ(&panel, &sys, &cov, Formulation::ZcBe).unwrap_err();
        assert!(matches!(err, Error::SingularCovariance(_)));
        let bad = CovarianceEstimate::from_matrix(-Matrix::identity(7, 7)).unwrap();
        let err = occ(&panel, &sys, &bad, Formulation::StructBv).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(_)));
    }

    #[test]
    fn sequential_baselines() {
        let sys = three_level_hierarchy();
        let y = sys.structural() * Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let values = Matrix::from_fn(7, 3, |i, _| y[i]);
        let panel = balanced(&sys, &values);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_spd(7, &mut rng);
        let s = src(&panel, &sys, &[w.clone(), w.clone(), w.clone()]).unwrap();
        assert!((&s.y_tilde - &y).amax() < 1e-12);
        let r = scr(&panel, &sys, WeightScheme::Equal, None, &w).unwrap();
        assert!((&r.y_tilde - &y).amax() < 1e-12);
        assert!((r.apply(panel.y_hat()) - &r.y_tilde).amax() < 1e-12);

        let single = ForecastPanel::single(&sys, &Vector::from_fn(7, |i, _| i as f64)).unwrap();
        let a = scr(&single, &sys, WeightScheme::Equal, None, &w).unwrap();
        let b = mint_reconcile(single.y_hat(), &sys, &w).unwrap();
        assert!((a.y_tilde - b.y_tilde).amax() < 1e-14);
    }

    #[test]
    fn src_rejects_unbalanced() {
        let sys = three_level_hierarchy();
        let mut mask = DMatrix::from_element(7, 2, true);
        mask[(3, 1)] = false;
        let panel = ForecastPanel::from_dense(&sys, vec!["a".into(), "b".into()], mask, &Matrix::zeros(7, 2)).unwrap();
        let w = Matrix::identity(7, 7);
        assert!(matches!(src(&panel, &sys, &[w.clone(), w]), Err(Error::Unsupported(_))));
    }
}
