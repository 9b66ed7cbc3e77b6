//! Variable-by-variable combination (equal, inverse-variance and simplex
//! minimum-variance weights) next to the multi-task combination that uses
//! the full covariance of all forecasts.

use std::path::Path;

use coherent_combination::combiners::{self, WeightScheme};
use coherent_combination::covariance;
use coherent_combination::io::{self, ResidualRecord};
use coherent_combination::panel::ForecastPanel;

fn main() -> coherent_combination::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/three_series");
    let sys = io::read_constraints(&dir.join("constraints.json"))?;
    let panel = ForecastPanel::build(&io::read_panel(&dir.join("panel.csv"))?[0].1, &sys)?;
    let records: Vec<ResidualRecord> = io::read_records(&dir.join("residuals.csv"))?;
    let res = io::residual_matrix(&panel, &records)?;

    let diag = covariance::diagonal(&res)?;
    let by_var = covariance::block_by_variable(&res, &panel, false)?;
    let schemes = [
        (WeightScheme::Equal, None),
        (WeightScheme::InverseVariance, Some(&diag)),
        (WeightScheme::SimplexCovariance, Some(&by_var)),
    ];
    for (scheme, cov) in schemes {
        let w = combiners::single_task_weights(&panel, scheme, cov)?;
        println!("{scheme}:");
        for (i, g) in w.gamma.iter().enumerate() {
            let experts: Vec<&str> = panel
                .variable_positions(i)
                .iter()
                .map(|&k| panel.experts()[panel.cells()[k].1].as_str())
                .collect();
            println!("  {} weights {:?} on {experts:?}", sys.labels()[i], g.as_slice());
        }
        println!("  combined {:?}", w.apply(&panel, panel.y_hat()).as_slice());
    }

    let multi = combiners::combine_multi_task(&panel, &covariance::shrink(&res)?)?;
    println!("multi-task combined {:?}", multi.y_c.as_slice());
    println!("its error covariance W_c:{}", multi.w_c);
    println!("max |C y_c| = {:.3e} (combinations are not coherent in general)", sys.coherence_error(&multi.y_c)?);
    Ok(())
}
