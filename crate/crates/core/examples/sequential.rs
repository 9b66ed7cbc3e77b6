//! Sequential baselines against the one-step coherent combination on one
//! simulated data set: reconcile-then-average (src), combine-then-reconcile
//! (scr) and occ, scored on the test window.

use coherent_combination::linalg::Matrix;
use coherent_combination::panel::ForecastPanel;
use coherent_combination::simulation::{generate_replication, method_weights, Method, SimulationConfig};

fn main() -> coherent_combination::Result<()> {
    let sys = coherent_combination::constraints::three_level_hierarchy();
    let cfg = SimulationConfig::new(1, 4, 200, true)?;
    let n = sys.n();
    let experts: Vec<String> = (1..=cfg.p).map(|j| format!("e{j}")).collect();
    let methods = [Method::Ew, Method::Src, Method::ScrEw, Method::ScrVar, Method::ScrCov, Method::OccBe];
    let mut mse = vec![0.0; methods.len()];
    let reps = 20;
    for rep in 0..reps {
        let data = generate_replication(&cfg, rep)?;
        let panel = ForecastPanel::from_dense(&sys, experts.clone(), data.availability.clone(), &Matrix::zeros(n, cfg.p))?;
        let train = data.actuals.rows(0, cfg.n_train).into_owned();
        let fitted: Vec<Matrix> = data.forecasts.iter().map(|f| f.rows(0, cfg.n_train).into_owned()).collect();
        let res = panel.residuals_from_matrices(&train, &fitted)?;
        let y_hat = Matrix::from_fn(panel.m(), cfg.test_len, |k, t| {
            let (i, j) = panel.cells()[k];
            data.forecasts[j][(cfg.n_train + t, i)]
        });
        let actual = data.actuals.rows(cfg.n_train, cfg.test_len).transpose();
        for (k, &m) in methods.iter().enumerate() {
            let psi = method_weights(m, &panel, &sys, &res)?;
            let coherent = psi.tr_mul(&y_hat);
            mse[k] += (&actual - coherent).norm_squared() / (n * cfg.test_len * reps) as f64;
        }
    }
    println!("test MSE averaged over {reps} replications and all series");
    for (k, m) in methods.iter().enumerate() {
        println!("{:<8} {:.4}", m.name(), mse[k]);
    }
    Ok(())
}
