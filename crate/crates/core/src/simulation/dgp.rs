use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nearcorr::nearest_correlation;
use super::participation::{participation_mask, Participation};
use crate::constraints::{three_level_hierarchy, ConstraintSystem};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix, Vector};

/// One of the six parameter settings.
///
/// | setting | bias `μ_j` | loadings `β_j` | error scale `σ_j²` | factor AR |
/// |---|---|---|---|---|
/// | 1 | 0 | (1, 1) | 1 | 0 |
/// | 2 | 0 | (0.5, 0.5) | 1 | 0 |
/// | 3 | 0 | (0.5, 0.5) | 1 | 0.9 |
/// | 4 | 0 | Beta(1, 1) each | 1 | 0 |
/// | 5 | 0 | (0.5, 0.5) | InvGamma(5, 5) | 0 |
/// | 6 | N(0, 1) | (0.5, 0.5) | 1 | 0 |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Setting(u8);

impl Setting {
    pub fn new(k: u8) -> Result<Self> {
        if (1..=6).contains(&k) {
            Ok(Self(k))
        } else {
            Err(Error::Schema(format!("setting must be 1..6, got {k}")))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Diagonal entry of the factor autoregressive matrix.
    pub fn factor_ar(self) -> f64 {
        if self.0 == 3 {
            0.9
        } else {
            0.0
        }
    }
}

/// Correlation structure `Θ` of each expert's forecast errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCorrelation {
    Identity,
    /// Nearest correlation matrix to a symmetric Uniform(-1, 1) draw, drawn
    /// separately for every expert in every replication.
    RandomSpd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub setting: Setting,
    /// Number of experts.
    pub p: usize,
    /// Training length `N`.
    pub n_train: usize,
    pub test_len: usize,
    pub replications: usize,
    pub seed: u64,
    pub balanced: bool,
    pub error_corr: ErrorCorrelation,
    pub participation: Participation,
}

impl SimulationConfig {
    pub fn new(setting: u8, p: usize, n_train: usize, balanced: bool) -> Result<Self> {
        let cfg = Self {
            setting: Setting::new(setting)?,
            p,
            n_train,
            test_len: 100,
            replications: 500,
            seed: 42,
            balanced,
            error_corr: ErrorCorrelation::RandomSpd,
            participation: Participation::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        Setting::new(self.setting.0)?;
        if self.p == 0 {
            return Err(Error::Schema("at least one expert is required".into()));
        }
        if self.n_train < 2 {
            return Err(Error::Schema("training length must be at least 2".into()));
        }
        if self.test_len == 0 || self.replications == 0 {
            return Err(Error::Schema("test length and replications must be positive".into()));
        }
        let share = self.participation.frequent_share;
        if !(0.0..=1.0).contains(&share) {
            return Err(Error::Schema(format!("frequent share {share} outside [0, 1]")));
        }
        Ok(())
    }

    /// `T = N + test length`.
    pub fn total_len(&self) -> usize {
        self.n_train + self.test_len
    }
}

/// One simulated data set.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    /// `T x n` coherent observations.
    pub actuals: Matrix,
    /// Per expert, `T x n` base forecasts (all variables, before masking).
    pub forecasts: Vec<Matrix>,
    /// `n x p` availability; all true for balanced configurations.
    pub availability: DMatrix<bool>,
}

fn uniform_correlation_target<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    let mut a = Matrix::identity(n, n);
    for i in 0..n {
        for k in (i + 1)..n {
            let v = rng.random_range(-1.0..1.0);
            a[(i, k)] = v;
            a[(k, i)] = v;
        }
    }
    a
}

fn normal_vector<R: Rng>(n: usize, rng: &mut R) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Draws replication `rep` of `cfg`. The random stream is determined by
/// `(cfg.seed, rep)` only.
pub fn generate_replication(cfg: &SimulationConfig, rep: usize) -> Result<Replication> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);

    let sys: ConstraintSystem = three_level_hierarchy();
    let s = sys.structural();
    let (n, n_b) = (sys.n(), sys.n_bottom());
    let p = cfg.p;
    let t_len = cfg.total_len();

    let r = nearest_correlation(&uniform_correlation_target(n_b, &mut rng))?;
    let r_chol = cholesky(&r, "bottom noise correlation")?.l();
    // each expert has its own error correlation
    let thetas: Vec<Matrix> = (0..p)
        .map(|_| match cfg.error_corr {
            ErrorCorrelation::Identity => Ok(Matrix::identity(n, n)),
            ErrorCorrelation::RandomSpd => nearest_correlation(&uniform_correlation_target(n, &mut rng)),
        })
        .collect::<Result<_>>()?;

    let setting = cfg.setting.number();
    let mut mu = vec![0.0; p];
    let mut beta = vec![[1.0, 1.0]; p];
    let mut sigma2 = vec![1.0; p];
    let beta_dist = Beta::new(1.0, 1.0).expect("valid beta parameters");
    let gamma_dist = Gamma::new(5.0, 1.0 / 5.0).expect("valid gamma parameters");
    for j in 0..p {
        match setting {
            1 => {}
            4 => beta[j] = [beta_dist.sample(&mut rng), beta_dist.sample(&mut rng)],
            5 => {
                beta[j] = [0.5, 0.5];
                sigma2[j] = 1.0 / gamma_dist.sample(&mut rng);
            }
            6 => {
                beta[j] = [0.5, 0.5];
                mu[j] = StandardNormal.sample(&mut rng);
            }
            _ => beta[j] = [0.5, 0.5],
        }
    }

    // error scale proportional to the number of bottom series in each node
    let counts: Vec<f64> = (0..n).map(|i| s.row(i).sum()).collect();
    let err_factor: Vec<Matrix> = (0..p)
        .map(|j| {
            let d = Matrix::from_diagonal(&Vector::from_iterator(
                n,
                counts.iter().map(|c| (sigma2[j] * c).sqrt()),
            ));
            Ok(d * cholesky(&thetas[j], "error correlation")?.l())
        })
        .collect::<Result<_>>()?;

    let availability = if cfg.balanced {
        DMatrix::from_element(n, p, true)
    } else {
        participation_mask(n, p, &cfg.participation, &mut rng)
    };

    let phi = cfg.setting.factor_ar();
    let init_sd = (1.0 / (1.0 - phi * phi)).sqrt();
    let mut f1: Vec<f64> = (0..n_b).map(|_| init_sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut f2: Vec<f64> = (0..n_b).map(|_| init_sd * rng.sample::<f64, _>(StandardNormal)).collect();

    let mut actuals = Matrix::zeros(t_len, n);
    let mut forecasts = vec![Matrix::zeros(t_len, n); p];
    for t in 0..t_len {
        for i in 0..n_b {
            f1[i] = phi * f1[i] + rng.sample::<f64, _>(StandardNormal);
            f2[i] = phi * f2[i] + rng.sample::<f64, _>(StandardNormal);
        }
        let eta = &r_chol * normal_vector(n_b, &mut rng);
        let b = Vector::from_fn(n_b, |i, _| f1[i] + f2[i] + eta[i]);
        let y = s * b;
        actuals.row_mut(t).copy_from(&y.transpose());
        for j in 0..p {
            let signal = Vector::from_fn(n_b, |i, _| mu[j] + beta[j][0] * f1[i] + beta[j][1] * f2[i]);
            let eps = &err_factor[j] * normal_vector(n, &mut rng);
            let yhat = s * signal + eps;
            forecasts[j].row_mut(t).copy_from(&yhat.transpose());
        }
    }

    Ok(Replication {
        actuals,
        forecasts,
        availability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn actuals_are_coherent() {
        let cfg = SimulationConfig::new(3, 4, 20, true).unwrap();
        let rep = generate_replication(&cfg, 0).unwrap();
        let sys = three_level_hierarchy();
        for t in 0..cfg.total_len() {
            let y = rep.actuals.row(t).transpose();
            assert!(sys.coherence_error(&y).unwrap() < 1e-12);
        }
        assert_eq!(rep.forecasts.len(), 4);
        assert_eq!(rep.actuals.nrows(), 120);
    }

    #[test]
    fn replications_are_reproducible_and_distinct() {
        let cfg = SimulationConfig::new(6, 3, 10, false).unwrap();
        let a = generate_replication(&cfg, 7).unwrap();
        let b = generate_replication(&cfg, 7).unwrap();
        let c = generate_replication(&cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.actuals, c.actuals);
    }

    #[test]
    fn identity_errors_scale_with_node_size() {
        let mut cfg = SimulationConfig::new(1, 1, 20000, true).unwrap();
        cfg.error_corr = ErrorCorrelation::Identity;
        cfg.test_len = 1;
        let rep = generate_replication(&cfg, 0).unwrap();
        // setting 1: y - ŷ = S η - ε, so a bottom error has variance 1 + 1
        // and the top one 1ᵀR1 + 4
        let e = &rep.actuals - &rep.forecasts[0];
        let t = e.nrows() as f64;
        let var = |i: usize| e.column(i).norm_squared() / t;
        for i in 3..7 {
            assert!((var(i) - 2.0).abs() < 0.1, "bottom {i}: {}", var(i));
        }
        let eta_top = var(0) - 4.0;
        assert!(eta_top > -0.3 && eta_top < 16.3);
        assert!(var(1) - 2.0 > -0.3);
    }

    #[test]
    fn white_noise_factors_without_ar() {
        let cfg = SimulationConfig::new(2, 1, 4000, true).unwrap();
        let rep = generate_replication(&cfg, 1).unwrap();
        // bottom series are iid in time: lag-1 autocorrelation near 0
        let x = rep.actuals.column(3);
        let n = x.len();
        let mean = x.mean();
        let c0: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let c1: f64 = (1..n).map(|t| (x[t] - mean) * (x[t - 1] - mean)).sum();
        assert!((c1 / c0).abs() < 0.06);

        let cfg3 = SimulationConfig::new(3, 1, 4000, true).unwrap();
        let rep3 = generate_replication(&cfg3, 1).unwrap();
        let x = rep3.actuals.column(3);
        let mean = x.mean();
        let c0: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let c1: f64 = (1..n).map(|t| (x[t] - mean) * (x[t - 1] - mean)).sum();
        assert!(c1 / c0 > 0.6);
    }

    #[test]
    fn unbalanced_mask_covers_every_variable() {
        let cfg = SimulationConfig::new(1, 4, 10, false).unwrap();
        for rep in 0..50 {
            let r = generate_replication(&cfg, rep).unwrap();
            for i in 0..7 {
                assert!((0..4).any(|j| r.availability[(i, j)]));
            }
        }
    }

    #[test]
    fn invalid_settings() {
        assert!(SimulationConfig::new(0, 4, 10, true).is_err());
        assert!(SimulationConfig::new(7, 4, 10, true).is_err());
        assert!(SimulationConfig::new(1, 0, 10, true).is_err());
    }
}
