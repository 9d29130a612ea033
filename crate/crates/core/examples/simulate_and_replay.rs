//! Writes a simulated experiment to disk, reconstructs it from the files and
//! replays the run from its manifest.
//!
//! ```bash
//! cargo run --release --example simulate_and_replay
//! ```

use mpijr::harness::{replay, run_experiment, simulate, ExperimentConfig, Method};
use mpijr::scenario::ScenarioParams;

fn main() -> mpijr::Result<()> {
    let root = std::env::temp_dir().join("mpijr-simulate");
    simulate(&ExperimentConfig {
        simulation: Some(ScenarioParams {
            frames: 8,
            ..ScenarioParams::default()
        }),
        output: root.join("sim"),
        ..ExperimentConfig::default()
    })?;

    let cfg = ExperimentConfig {
        method: Method::Static,
        output: root.join("run"),
        previews: false,
        ..ExperimentConfig::load(&root.join("sim/experiment.json"))?
    };
    let manifest = run_experiment(&cfg)?;
    println!("config sha256 {}", manifest.config_sha256);

    let again = replay(&root.join("run/manifest.json"), Some(root.join("replay")))?;
    let same = std::fs::read(root.join("run/metrics.csv")).ok() == std::fs::read(root.join("replay/metrics.csv")).ok();
    println!("replayed sha256 {}, metrics identical: {same}", again.config_sha256);
    Ok(())
}
