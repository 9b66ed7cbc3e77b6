//! Forecast accuracy: per-horizon MAE/MSE, geometric-mean relative indices
//! and the Diebold-Mariano test of equal predictive accuracy.

use log::warn;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Forecasts of one method: one `Q_h x n` matrix per horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodForecasts {
    pub method: String,
    pub by_horizon: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    pub methods: Vec<String>,
    pub benchmark: String,
    /// Test points per horizon.
    pub q: Vec<usize>,
    /// `mae[method][h][series]`.
    pub mae: Vec<Vec<Vec<f64>>>,
    pub mse: Vec<Vec<Vec<f64>>>,
    /// `avg_rel_mae[method][h]`.
    pub avg_rel_mae: Vec<Vec<f64>>,
    pub avg_rel_mse: Vec<Vec<f64>>,
    /// Geometric mean over horizons, per method.
    pub overall_mae: Vec<f64>,
    pub overall_mse: Vec<f64>,
    /// `(horizon, series)` cells left out because the benchmark loss is zero.
    pub excluded: Vec<(usize, usize)>,
}

impl AccuracyTable {
    pub fn method_index(&self, method: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == method)
    }
}

fn check_shapes(actuals: &[Matrix], forecasts: &[MethodForecasts]) -> Result<()> {
    if actuals.is_empty() {
        return Err(Error::InsufficientData("no horizons to evaluate".into()));
    }
    let n = actuals[0].ncols();
    for (h, a) in actuals.iter().enumerate() {
        if a.nrows() == 0 {
            return Err(Error::InsufficientData(format!("horizon {} has no test points", h + 1)));
        }
        if a.ncols() != n {
            return Err(Error::Dimension(format!("horizon {} has {} series, expected {n}", h + 1, a.ncols())));
        }
    }
    for f in forecasts {
        if f.by_horizon.len() != actuals.len()
            || f.by_horizon.iter().zip(actuals).any(|(x, a)| x.shape() != a.shape())
        {
            return Err(Error::Dimension(format!(
                "forecasts of `{}` are not aligned with the actuals",
                f.method
            )));
        }
    }
    Ok(())
}

fn geometric_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v.ln(), c + 1));
    if count == 0 {
        f64::NAN
    } else {
        (sum / count as f64).exp()
    }
}

/// Accuracy of every method relative to `benchmark`.
///
/// `actuals[h]` is `Q_h x n`; every method supplies matrices of the same
/// shapes. Cells where the benchmark loss is zero are excluded from the
/// relative indices (both MAE and MSE) and counted.
pub fn accuracy(
    actuals: &[Matrix],
    forecasts: &[MethodForecasts],
    benchmark: &str,
) -> Result<AccuracyTable> {
    check_shapes(actuals, forecasts)?;
    let b = forecasts
        .iter()
        .position(|f| f.method == benchmark)
        .ok_or_else(|| Error::UnknownLabel(benchmark.to_string()))?;
    let n = actuals[0].ncols();
    let horizons = actuals.len();

    let mut mae = Vec::new();
    let mut mse = Vec::new();
    for f in forecasts {
        let mut mae_m = Vec::with_capacity(horizons);
        let mut mse_m = Vec::with_capacity(horizons);
        for (a, x) in actuals.iter().zip(&f.by_horizon) {
            let q = a.nrows() as f64;
            let e = a - x;
            mae_m.push((0..n).map(|i| e.column(i).iter().map(|v| v.abs()).sum::<f64>() / q).collect::<Vec<_>>());
            mse_m.push((0..n).map(|i| e.column(i).norm_squared() / q).collect::<Vec<_>>());
        }
        mae.push(mae_m);
        mse.push(mse_m);
    }

    let mut excluded = Vec::new();
    for h in 0..horizons {
        for i in 0..n {
            if !(mae[b][h][i] > 0.0) || !(mse[b][h][i] > 0.0) {
                excluded.push((h, i));
            }
        }
    }
    if !excluded.is_empty() {
        warn!(
            "{} (horizon, series) cells with zero benchmark loss excluded from relative indices",
            excluded.len()
        );
    }

    let rel = |loss: &Vec<Vec<Vec<f64>>>, method: usize, h: usize| {
        geometric_mean(
            (0..n)
                .filter(|&i| !excluded.contains(&(h, i)))
                .map(|i| loss[method][h][i] / loss[b][h][i]),
        )
    };
    let avg_rel_mae: Vec<Vec<f64>> =
        (0..forecasts.len()).map(|m| (0..horizons).map(|h| rel(&mae, m, h)).collect()).collect();
    let avg_rel_mse: Vec<Vec<f64>> =
        (0..forecasts.len()).map(|m| (0..horizons).map(|h| rel(&mse, m, h)).collect()).collect();
    let overall = |v: &Vec<Vec<f64>>| -> Vec<f64> {
        v.iter().map(|hs| geometric_mean(hs.iter().copied().filter(|x| !x.is_nan()))).collect()
    };

    Ok(AccuracyTable {
        methods: forecasts.iter().map(|f| f.method.clone()).collect(),
        benchmark: benchmark.to_string(),
        q: actuals.iter().map(|a| a.nrows()).collect(),
        overall_mae: overall(&avg_rel_mae),
        overall_mse: overall(&avg_rel_mse),
        mae,
        mse,
        avg_rel_mae,
        avg_rel_mse,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Diebold-Mariano test on `d = loss_a - loss_b`.
///
/// Long-run variance from a Bartlett kernel truncated at `h - 1` lags; no
/// small-sample correction; two-sided standard normal p-value. A negative
/// statistic means `a` has the smaller loss. A zero long-run variance
/// yields statistic 0 and p-value 1.
pub fn dm_test(loss_a: &[f64], loss_b: &[f64], h: usize) -> Result<DmResult> {
    if loss_a.len() != loss_b.len() {
        return Err(Error::Dimension(format!(
            "loss series of lengths {} and {}",
            loss_a.len(),
            loss_b.len()
        )));
    }
    let q = loss_a.len();
    if q < 10 {
        return Err(Error::InsufficientData(format!("{q} paired losses, at least 10 are needed")));
    }
    if h == 0 {
        return Err(Error::Schema("horizon must be at least 1".into()));
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loss differential".into()));
    }
    let qf = q as f64;
    let mean = d.iter().sum::<f64>() / qf;
    let autocov = |k: usize| -> f64 {
        (k..q).map(|t| (d[t] - mean) * (d[t - k] - mean)).sum::<f64>() / qf
    };
    let mut lrv = autocov(0);
    for k in 1..h.min(q) {
        lrv += 2.0 * (1.0 - k as f64 / h as f64) * autocov(k);
    }
    if !(lrv > 0.0) {
        return Ok(DmResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let statistic = mean / (lrv / qf).sqrt();
    let normal = Normal::standard();
    let p_value = (2.0 * (1.0 - normal.cdf(statistic.abs()))).min(1.0);
    Ok(DmResult { statistic, p_value })
}

/// Pairwise DM rejection percentages.
///
/// `losses[method][series]` is a loss series. Cell `(r, c)` is the
/// percentage of series where the test rejects at `level` and method `r`
/// has the smaller mean loss. The diagonal is zero.
pub fn dm_matrix(losses: &[Vec<Vec<f64>>], h: usize, level: f64) -> Result<Matrix> {
    let k = losses.len();
    let n_series = losses.first().map_or(0, |l| l.len());
    if losses.iter().any(|l| l.len() != n_series) {
        return Err(Error::Dimension("methods have different numbers of series".into()));
    }
    if n_series == 0 {
        return Err(Error::InsufficientData("no series for the DM matrix".into()));
    }
    let mut out = Matrix::zeros(k, k);
    for r in 0..k {
        for c in 0..k {
            if r == c {
                continue;
            }
            let mut wins = 0;
            for s in 0..n_series {
                let res = dm_test(&losses[r][s], &losses[c][s], h)?;
                if res.p_value < level && res.statistic < 0.0 {
                    wins += 1;
                }
            }
            out[(r, c)] = 100.0 * wins as f64 / n_series as f64;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn mf(name: &str, h: Vec<Matrix>) -> MethodForecasts {
        MethodForecasts {
            method: name.into(),
            by_horizon: h,
        }
    }

    #[test]
    fn perfect_forecasts_and_self_ratio() {
        let a = vec![noise(10, 3, 1), noise(8, 3, 2)];
        let bench = vec![noise(10, 3, 3), noise(8, 3, 4)];
        let t = accuracy(&a, &[mf("ew", bench.clone()), mf("exact", a.clone())], "ew").unwrap();
        assert!(t.mae[1].iter().flatten().all(|&v| v == 0.0));
        assert!(t.mse[1].iter().flatten().all(|&v| v == 0.0));
        assert!(t.avg_rel_mae[0].iter().all(|&v| v == 1.0));
        assert_eq!(t.overall_mae[0], 1.0);
        assert_eq!(t.overall_mse[0], 1.0);
        assert_eq!(t.q, vec![10, 8]);
    }

    #[test]
    fn matches_log_mean_oracle() {
        let a = vec![noise(6, 2, 10), noise(6, 2, 11)];
        let x = vec![noise(6, 2, 12), noise(6, 2, 13)];
        let y = vec![noise(6, 2, 14), noise(6, 2, 15)];
        let t = accuracy(&a, &[mf("b", x.clone()), mf("m", y.clone())], "b").unwrap();
        let mae = |f: &Vec<Matrix>, h: usize, i: usize| {
            let mut s = 0.0;
            for q in 0..6 {
                s += (a[h][(q, i)] - f[h][(q, i)]).abs();
            }
            s / 6.0
        };
        let mut per_h = Vec::new();
        for h in 0..2 {
            let prod = (mae(&y, h, 0) / mae(&x, h, 0)) * (mae(&y, h, 1) / mae(&x, h, 1));
            per_h.push(prod.sqrt());
        }
        assert!((t.avg_rel_mae[1][0] - per_h[0]).abs() < 1e-12);
        assert!((t.avg_rel_mae[1][1] - per_h[1]).abs() < 1e-12);
        assert!((t.overall_mae[1] - (per_h[0] * per_h[1]).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_benchmark_cells_are_excluded() {
        let a = vec![noise(5, 2, 1)];
        let mut bench = noise(5, 2, 2);
        bench.set_column(1, &a[0].column(1));
        let other = noise(5, 2, 3);
        let t = accuracy(&a, &[mf("b", vec![bench.clone()]), mf("o", vec![other.clone()])], "b").unwrap();
        assert_eq!(t.excluded, vec![(0, 1)]);
        let only = t.mae[1][0][0] / t.mae[0][0][0];
        assert!((t.avg_rel_mae[1][0] - only).abs() < 1e-14);
    }

    #[test]
    fn unknown_benchmark_and_misaligned_inputs() {
        let a = vec![noise(5, 2, 1)];
        assert!(accuracy(&a, &[mf("x", vec![noise(5, 2, 2)])], "ew").is_err());
        assert!(accuracy(&a, &[mf("ew", vec![noise(4, 2, 2)])], "ew").is_err());
    }

    #[test]
    fn scale_invariance() {
        let a = vec![noise(7, 2, 1)];
        let b = vec![noise(7, 2, 2)];
        let c = vec![noise(7, 2, 3)];
        let t1 = accuracy(&a, &[mf("b", b.clone()), mf("c", c.clone())], "b").unwrap();
        let scale = |m: &Matrix| {
            let mut m = m.clone();
            m.column_mut(0).scale_mut(37.5);
            m
        };
        let t2 = accuracy(
            &[scale(&a[0])],
            &[mf("b", vec![scale(&b[0])]), mf("c", vec![scale(&c[0])])],
            "b",
        )
        .unwrap();
        assert!((t1.avg_rel_mae[1][0] - t2.avg_rel_mae[1][0]).abs() < 1e-12);
        assert!((t1.avg_rel_mse[1][0] - t2.avg_rel_mse[1][0]).abs() < 1e-12);
    }

    #[test]
    fn dm_identical_losses() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let r = dm_test(&a, &a, 3).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.statistic, 0.0);
        assert!(dm_test(&a[..5], &a[..5], 1).is_err());
    }

    #[test]
    fn dm_h1_uses_sample_variance() {
        let l = noise(1, 50, 5);
        let m = noise(1, 50, 6);
        let a: Vec<f64> = l.iter().copied().collect();
        let b: Vec<f64> = m.iter().copied().collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / 50.0;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
        let r = dm_test(&a, &b, 1).unwrap();
        assert!((r.statistic - mean / (var / 50.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dm_antisymmetric() {
        let a: Vec<f64> = noise(1, 40, 7).iter().copied().collect();
        let b: Vec<f64> = noise(1, 40, 8).iter().copied().collect();
        let x = dm_test(&a, &b, 4).unwrap();
        let y = dm_test(&b, &a, 4).unwrap();
        assert_eq!(x.statistic, -y.statistic);
        assert_eq!(x.p_value, y.p_value);
    }

    #[test]
    fn dm_matrix_counts_wins_for_the_row() {
        let good: Vec<Vec<f64>> = (0..4).map(|s| noise(1, 200, s).iter().map(|v| v * v).collect()).collect();
        let bad: Vec<Vec<f64>> = good.iter().map(|l| l.iter().map(|v| v + 5.0 + v.sin()).collect()).collect();
        let m = dm_matrix(&[good.clone(), bad], 1, 0.05).unwrap();
        assert_eq!(m[(0, 1)], 100.0);
        assert_eq!(m[(1, 0)], 0.0);
        assert_eq!(m[(0, 0)], 0.0);
    }
}
