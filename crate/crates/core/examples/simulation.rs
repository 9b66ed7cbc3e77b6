//! Monte-Carlo comparison of combination methods on the simulated hierarchy.
//!
//! ```text
//! cargo run --release --example simulation -- [setting] [p] [n_train] [reps] [balanced|unbalanced]
//! ```

use coherent_combination::simulation::{run_experiment, Method, SimulationConfig};

fn main() -> coherent_combination::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let setting: u8 = arg(0, "1").parse().expect("setting");
    let p: usize = arg(1, "4").parse().expect("p");
    let n_train: usize = arg(2, "200").parse().expect("n_train");
    let reps: usize = arg(3, "100").parse().expect("reps");
    let balanced = arg(4, "balanced") == "balanced";

    let mut cfg = SimulationConfig::new(setting, p, n_train, balanced)?;
    cfg.replications = reps;
    let methods: Vec<Method> = Method::ALL
        .iter()
        .copied()
        .filter(|m| balanced || !m.needs_balanced())
        .collect();

    let start = std::time::Instant::now();
    let table = run_experiment(&cfg, &methods)?;
    println!(
        "setting {setting}, p = {p}, N = {n_train}, {} panel, {reps} replications ({:.1?})",
        if balanced { "balanced" } else { "unbalanced" },
        start.elapsed()
    );
    println!("{:<14} {:>10} {:>10}", "method", "AvgRelMAE", "AvgRelMSE");
    for (k, m) in table.methods.iter().enumerate() {
        println!("{:<14} {:>10.3} {:>10.3}", m.name(), table.avg_rel_mae[k], table.avg_rel_mse[k]);
    }
    Ok(())
}
