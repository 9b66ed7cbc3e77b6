//! An unbalanced panel: three variables `y1 = y2 + y3` and four experts that
//! each forecast a different subset. Prints the selection, summation and
//! permutation matrices that link the by-expert and by-variable layouts.

use std::path::Path;

use coherent_combination::io;
use coherent_combination::panel::ForecastPanel;

fn main() -> coherent_combination::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/three_series");
    let sys = io::read_constraints(&dir.join("constraints.json"))?;
    let groups = io::read_panel(&dir.join("panel.csv"))?;
    let panel = ForecastPanel::build(&groups[0].1, &sys)?;

    println!("n = {}, p = {}, m = {}", panel.n(), panel.p(), panel.m());
    for j in 0..panel.p() {
        let vars: Vec<&str> = panel.expert_variables(j).iter().map(|&i| sys.labels()[i].as_str()).collect();
        println!("expert {} forecasts {vars:?}; L_{}:{}", panel.experts()[j], j + 1, panel.selection(j));
    }
    println!("availability (variables x experts):{}", panel.availability().map(u8::from));
    println!("L = [L_1 ... L_p]:{}", panel.l_matrix());
    println!("K = L^T:{}", panel.k_matrix());
    println!("P (by-expert to by-variable):{}", panel.p_matrix());
    println!("J = P K:{}", panel.j_matrix());
    println!("y_hat by expert   {:?}", panel.y_hat().as_slice());
    println!("y_hat by variable {:?}", panel.to_by_variable(panel.y_hat()).as_slice());
    Ok(())
}
