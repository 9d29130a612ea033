//! Static subtraction, linear interpolation and the joint estimate on the
//! same drifting series.
//!
//! ```bash
//! cargo run --release --example compare_baselines
//! ```

use mpijr::harness::{compare_methods, ExperimentConfig, Method};
use mpijr::scenario::ScenarioParams;
use mpijr::solver::SolverChoice;
use mpijr::ReconConfig;

fn main() -> mpijr::Result<()> {
    let out = std::env::temp_dir().join("mpijr-compare");
    let cfg = ExperimentConfig {
        simulation: Some(ScenarioParams::default()),
        methods: vec![Method::Static, Method::Interp, Method::Joint],
        recon: ReconConfig {
            beta: 0.2f64.powi(10),
            solver: SolverChoice::Dense,
            ..ReconConfig::default()
        },
        previews: false,
        output: out.clone(),
        ..ExperimentConfig::default()
    };
    let cmp = compare_methods(&cfg)?;
    println!("{:<8} {:>10} {:>10} {:>10}", "method", "mass/ug", "std/ug", "eps_bg");
    for s in &cmp.summaries {
        println!("{:<8} {:>10.2} {:>10.3} {:>10.4}", s.label, s.mass_mean, s.mass_std, s.eps_bg_mean);
    }
    println!("CSV files in {}", out.display());
    Ok(())
}
