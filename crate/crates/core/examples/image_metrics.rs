//! Iron mass, background level, SNR and FWHM of a synthetic image.
//!
//! ```bash
//! cargo run --example image_metrics
//! ```

use mpijr::metrics::{background_level, fwhm, iron_mass, snr, RegionSpec};
use nalgebra::DVector;

fn main() -> mpijr::Result<()> {
    let grid = (32, 32);
    let sigma = 2.0;
    // Gaussian blob on a weak ripple background.
    let c = DVector::from_fn(32 * 32, |p, _| {
        let (x, y) = ((p % 32) as f64 - 16.0, (p / 32) as f64 - 16.0);
        100.0 * (-(x * x + y * y) / (2.0 * sigma * sigma)).exp() + 0.5 * (0.7 * x).sin() * (0.3 * y).cos()
    });
    let region = RegionSpec::central_block(grid, 12, 100.0, 6.7e-4)?;
    println!("iron mass   {:.4} ug", iron_mass(&c, &region)?);
    println!("eps_bg      {:.4e}", background_level(&c, &region)?);
    println!("SNR         {:.1}", snr(&c, &region)?);
    println!(
        "FWHM        {:.3} mm (Gaussian: {:.3} mm)",
        fwhm(&c, grid, 2.0)?,
        2.0 * 2.0 * (2.0 * 2f64.ln()).sqrt() * sigma
    );
    Ok(())
}
