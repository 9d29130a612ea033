//! Writes a system matrix, a frame series and a dictionary to disk and reads
//! them back.
//!
//! ```bash
//! cargo run --example mpic_files
//! ```

use mpijr::dictionary::build_dictionary;
use mpijr::io;
use mpijr::scenario::{Scenario, ScenarioParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::generate(&ScenarioParams {
        frames: 4,
        ..ScenarioParams::default()
    })?;
    let dir = std::env::temp_dir().join("mpijr-mpic-files");
    std::fs::create_dir_all(&dir)?;

    io::write_system_matrix(&sc.system, dir.join("system.mpic"))?;
    io::write_frame_series(&sc.acquisition, dir.join("frames.mpic"))?;
    io::write_archive(&sc.archive, dir.join("archive.mpic"))?;
    io::write_dictionary(&build_dictionary(&sc.archive, 2)?, dir.join("dict"))?;

    let system = io::read_system_matrix(dir.join("system.mpic"))?;
    let frames = io::read_frame_series(dir.join("frames.mpic"))?;
    let dict = io::read_dictionary(dir.join("dict"))?;
    assert_eq!(system.entries(), sc.system.entries());
    assert_eq!(frames.frames(), sc.acquisition.frames());

    println!("directory       {}", dir.display());
    println!("system          {} x {} on grid {:?}", system.rows(), system.cols(), system.grid_shape());
    println!("frames          {} of length {}", frames.frame_count(), frames.frame_len());
    println!("dictionary      rank {} from archive {}", dict.rank_kept(), dict.source_fingerprint());
    Ok(())
}
