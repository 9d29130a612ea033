//! Iron mass and coefficient norm over the beta grid for a few dictionary ranks.
//!
//! ```bash
//! cargo run --release --example beta_sweep
//! ```

use mpijr::harness::{run_sweep, ExperimentConfig};
use mpijr::scenario::ScenarioParams;
use mpijr::solver::SolverChoice;
use mpijr::ReconConfig;

fn main() -> mpijr::Result<()> {
    let cfg = ExperimentConfig {
        simulation: Some(ScenarioParams::default()),
        ranks: vec![1, 2, 3],
        sweep_frame: 40,
        recon: ReconConfig {
            solver: SolverChoice::Dense,
            ..ReconConfig::default()
        },
        previews: false,
        output: std::env::temp_dir().join("mpijr-sweep"),
        ..ExperimentConfig::default()
    };
    let (rows, _) = run_sweep(&cfg)?;
    println!("{:>10} {:>2} {:>9} {:>8} {:>10}", "beta", "Q", "mass/ug", "eps_bg", "|n|");
    for r in rows.iter().filter(|r| r.q == 2 || r.beta == 1.0) {
        println!(
            "{:>10.3e} {:>2} {:>9.2} {:>8.4} {:>10.3e}",
            r.beta, r.q, r.metrics.iron_mass_ug, r.metrics.eps_bg, r.coefficient_norm
        );
    }
    Ok(())
}
