//! Accuracy tables and Diebold-Mariano comparisons for rolling multi-step
//! forecasts of two competing methods against a benchmark.

use coherent_combination::linalg::Matrix;
use coherent_combination::metrics::{accuracy, dm_matrix, dm_test, MethodForecasts};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> coherent_combination::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (q, n, horizons) = (200, 5, 3);
    let noise = |sd: f64, rng: &mut ChaCha8Rng| {
        let d = Normal::new(0.0, sd).expect("valid sd");
        (0..horizons).map(|_| Matrix::from_fn(q, n, |_, _| d.sample(rng))).collect::<Vec<_>>()
    };
    let actuals = noise(2.0, &mut rng);
    let methods: Vec<MethodForecasts> = [("ew", 1.0), ("good", 0.7), ("poor", 1.4)]
        .into_iter()
        .map(|(name, sd)| MethodForecasts {
            method: name.into(),
            by_horizon: actuals.iter().zip(noise(sd, &mut rng)).map(|(a, e)| a + e).collect(),
        })
        .collect();

    let table = accuracy(&actuals, &methods, "ew")?;
    println!("{:<6} {}  all", "method", (1..=horizons).map(|h| format!("   h={h}")).collect::<String>());
    for (m, name) in table.methods.iter().enumerate() {
        let by_h: String = table.avg_rel_mae[m].iter().map(|v| format!(" {v:.3}")).collect();
        println!("{name:<6} {by_h}  {:.3}", table.overall_mae[m]);
    }

    // Squared loss at horizon 1, per series.
    let losses: Vec<Vec<Vec<f64>>> = methods
        .iter()
        .map(|f| {
            (0..n)
                .map(|i| (0..q).map(|t| (actuals[0][(t, i)] - f.by_horizon[0][(t, i)]).powi(2)).collect())
                .collect()
        })
        .collect();
    let r = dm_test(&losses[1][0], &losses[0][0], 1)?;
    println!("good vs ew, series 0: DM = {:.2}, p = {:.2e}", r.statistic, r.p_value);
    println!("% of series where the row method wins at 5%:{}", dm_matrix(&losses, 1, 0.05)?);
    Ok(())
}
