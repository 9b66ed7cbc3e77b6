//! Building constraint systems: from an aggregation matrix, from general
//! zero constraints, and checking coherence.

use coherent_combination::constraints::{three_level_hierarchy, ConstraintSystem};
use coherent_combination::linalg::{Matrix, Vector};

fn main() -> coherent_combination::Result<()> {
    let sys = three_level_hierarchy();
    println!("labels: {:?}", sys.labels());
    println!("A (upper = A * bottom):{}", sys.aggregation());
    println!("C = [I -A]:{}", sys.zero_constraints());
    println!("S = [A; I]:{}", sys.structural());

    // Two series sharing a common total, written as raw constraints in an
    // arbitrary variable order: t - a - b = 0 and u - a - b = 0.
    let c = Matrix::from_row_slice(2, 4, &[-1.0, 1.0, -1.0, 0.0, -1.0, 0.0, -1.0, 1.0]);
    let labels: Vec<String> = ["a", "t", "b", "u"].iter().map(|s| s.to_string()).collect();
    let (general, perm) = ConstraintSystem::from_general_constraints(&c, labels)?;
    println!("canonical order {:?} (columns {perm:?})", general.labels());
    println!("A:{}", general.aggregation());

    let bottom = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
    let y = sys.structural() * &bottom;
    println!("S b = {:?} coherent: {}", y.as_slice(), sys.is_coherent(&y, 1e-12)?);
    let mut off = y.clone();
    off[0] += 0.5;
    println!("perturbed total, max |C y| = {}", sys.coherence_error(&off)?);
    Ok(())
}
