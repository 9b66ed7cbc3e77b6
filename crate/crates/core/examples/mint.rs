//! Single-expert reconciliation: projecting one expert's incoherent
//! forecasts onto the coherent subspace under different covariances.

use coherent_combination::coherent::{mint_reconcile, projection_matrix};
use coherent_combination::constraints::three_level_hierarchy;
use coherent_combination::linalg::{Matrix, Vector};

fn main() -> coherent_combination::Result<()> {
    let sys = three_level_hierarchy();
    let y = Vector::from_vec(vec![102.0, 49.0, 47.0, 26.0, 24.0, 25.0, 21.0]);
    println!("base {:?}, max |C y| = {}", y.as_slice(), sys.coherence_error(&y)?);

    let counts: Vec<f64> = (0..sys.n()).map(|i| sys.structural().row(i).sum()).collect();
    let covs = [
        ("identity", Matrix::identity(sys.n(), sys.n())),
        ("structural scaling", Matrix::from_diagonal(&Vector::from_vec(counts))),
    ];
    for (name, w) in covs {
        let r = mint_reconcile(&y, &sys, &w)?;
        println!("{name:<20} {:?}", r.y_tilde.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
        let m = projection_matrix(&sys, &w);
        println!("  M is idempotent: |M M - M| = {:.1e}", (&m * &m - &m).amax());
    }
    Ok(())
}
