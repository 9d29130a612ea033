//! Joint estimation of concentration and dictionary background on a
//! drifting acquisition.
//!
//! ```bash
//! cargo run --release --example joint_reconstruction
//! ```

use mpijr::dictionary::build_dictionary;
use mpijr::metrics::{iron_mass, RegionSpec};
use mpijr::recon::{reconstruct_joint, BackgroundEstimate};
use mpijr::scenario::{Scenario, ScenarioParams};
use mpijr::solver::SolverChoice;
use mpijr::{BackgroundSource, ReconConfig};

fn main() -> mpijr::Result<()> {
    let params = ScenarioParams::default();
    let sc = Scenario::generate(&params)?;
    let series = sc.series()?;
    let b_est = BackgroundEstimate {
        b_est: sc.u_pre(),
        provenance: BackgroundSource::MeanOfFrames((1..=params.pre_frames).collect()),
    };
    let dict = build_dictionary(&sc.archive, 2)?;
    let cfg = ReconConfig {
        beta: 0.2f64.powi(10),
        solver: SolverChoice::Dense,
        ..ReconConfig::default()
    };
    let res = reconstruct_joint(&sc.system, &dict, &series, &b_est, &cfg)?;

    let region = RegionSpec::central_block(params.grid_shape, params.signal_block, 1.0, params.pixel_volume)?;
    println!("frame  mass/ug  truth/ug  |n|");
    for l in (0..series.frame_count()).step_by(6) {
        let mass = iron_mass(&res.concentration(l), &region)?;
        println!(
            "{:>5}  {mass:>7.2}  {:>8.2}  {:.3e}",
            l + 1,
            sc.true_mass(l + 1),
            res.coefficients.column(l).norm()
        );
    }
    Ok(())
}
