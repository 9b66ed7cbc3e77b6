//! Covariance estimators on simulated in-sample residuals, including the
//! estimated shrinkage intensities and the singularity flag.

use coherent_combination::covariance::{self, CovPattern};
use coherent_combination::linalg::min_sym_eigenvalue;
use coherent_combination::panel::ForecastPanel;
use coherent_combination::simulation::{generate_replication, SimulationConfig};

fn main() -> coherent_combination::Result<()> {
    let sys = coherent_combination::constraints::three_level_hierarchy();
    for n_train in [200, 20] {
        let cfg = SimulationConfig::new(1, 3, n_train, true)?;
        let data = generate_replication(&cfg, 0)?;
        let panel = ForecastPanel::from_dense(
            &sys,
            vec!["e1".into(), "e2".into(), "e3".into()],
            data.availability.clone(),
            &coherent_combination::linalg::Matrix::zeros(sys.n(), 3),
        )?;
        let train = data.actuals.rows(0, n_train).into_owned();
        let fitted: Vec<_> = data.forecasts.iter().map(|f| f.rows(0, n_train).into_owned()).collect();
        let res = panel.residuals_from_matrices(&train, &fitted)?;

        println!("T = {n_train}, m = {}", panel.m());
        println!("{:<20} {:>8} {:>12}  lambdas", "pattern", "singular", "min eig");
        for pattern in CovPattern::ESTIMATORS {
            let est = covariance::estimate(&res, &panel, pattern)?;
            let lambdas: Vec<String> = est.lambdas.iter().map(|l| format!("{l:.3}")).collect();
            println!(
                "{:<20} {:>8} {:>12.3e}  [{}]",
                pattern.name(),
                est.singular,
                min_sym_eigenvalue(&est.matrix),
                lambdas.join(", ")
            );
        }
        println!();
    }
    Ok(())
}
