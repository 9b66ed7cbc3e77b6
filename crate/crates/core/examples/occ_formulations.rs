//! Optimal coherent combination of the unbalanced example panel with each of
//! the four equivalent solvers, and the properties of the weights `Ψ`.

use std::path::Path;

use coherent_combination::coherent::{occ, Formulation};
use coherent_combination::covariance;
use coherent_combination::io::{self, ResidualRecord};
use coherent_combination::panel::ForecastPanel;

fn main() -> coherent_combination::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/three_series");
    let sys = io::read_constraints(&dir.join("constraints.json"))?;
    let panel = ForecastPanel::build(&io::read_panel(&dir.join("panel.csv"))?[0].1, &sys)?;
    let records: Vec<ResidualRecord> = io::read_records(&dir.join("residuals.csv"))?;
    let cov = covariance::block_by_expert(&io::residual_matrix(&panel, &records)?, &panel, true)?;
    println!("per-expert shrinkage intensities {:?}", cov.lambdas);

    let base = occ(&panel, &sys, &cov, Formulation::ZcBe)?;
    for f in Formulation::ALL {
        let r = occ(&panel, &sys, &cov, f)?;
        println!(
            "{:<10} y = {:?}  |diff| = {:.1e}  |C y| = {:.1e}",
            f.name(),
            r.y_tilde.as_slice(),
            (&r.y_tilde - &base.y_tilde).amax(),
            sys.coherence_error(&r.y_tilde)?
        );
    }

    // The weights reproduce coherent inputs: Ψᵀ K S = S.
    let psi_k = base.psi.transpose() * panel.k_matrix();
    let s = sys.structural();
    println!("max |Ψᵀ K S - S| = {:.1e}", (&psi_k * s - s).amax());
    for j in 0..panel.p() {
        println!("Ψ_{} ({}):{}", j + 1, panel.experts()[j], base.psi_block(&panel, j));
    }
    println!("error covariance of the coherent forecasts:{}", base.w_tilde);
    Ok(())
}
