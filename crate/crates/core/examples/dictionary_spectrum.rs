//! Singular spectrum of a background archive and the dictionary it yields.
//!
//! ```bash
//! cargo run --example dictionary_spectrum
//! ```

use mpijr::dictionary::{build_dictionary, spectrum_report, DEFAULT_ELBOW_THRESHOLD};
use mpijr::model::orthonormality_defect;
use mpijr::simkit::gen_background_archive;

fn main() -> mpijr::Result<()> {
    // Planted rank 3 plus a weak noise floor.
    let (archive, planted) = gen_background_archive(7, 32, 24, 3, 1e-3, None)?;
    let report = spectrum_report(&archive, DEFAULT_ELBOW_THRESHOLD);
    for (i, (s, r)) in report.singular_values.iter().zip(report.relative()).take(6).enumerate() {
        println!("s_{:<2} {s:>10.4e}  relative {r:.2e}", i + 1);
    }
    println!("suggested elbow: {:?}", report.elbow);

    let q = report.elbow.map_or(3, |e| e - 1);
    let dict = build_dictionary(&archive, q)?;
    let w = dict.basis();
    println!("Q = {q}, max |W^H W - I| = {:.2e}", orthonormality_defect(&(w.adjoint() * w)));
    let captured = (w.adjoint() * &planted).norm_squared() / planted.norm_squared();
    println!("fraction of the planted subspace captured: {captured:.6}");
    Ok(())
}
