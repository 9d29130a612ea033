//! Image-quality measures on reconstructed concentration images: iron mass,
//! relative background level, SNR and FWHM of a point source.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Split of the image into a signal region and its complement.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSpec {
    grid_shape: (usize, usize),
    signal: Vec<usize>,
    background: Vec<usize>,
    c_ref: f64,
    pixel_volume: f64,
}

impl RegionSpec {
    /// `signal` lists zero-based linear pixel indices; the background region
    /// is every other pixel.
    pub fn new(grid_shape: (usize, usize), signal: Vec<usize>, c_ref: f64, pixel_volume: f64) -> Result<Self> {
        let n = grid_shape.0 * grid_shape.1;
        let mut in_signal = vec![false; n];
        for &p in &signal {
            if p >= n {
                return Err(Error::IndexOutOfRange(format!("pixel {p} outside a grid of {n}")));
            }
            if in_signal[p] {
                return Err(Error::InvalidArgument(format!("pixel {p} listed twice in signal mask")));
            }
            in_signal[p] = true;
        }
        if !(c_ref.is_finite() && c_ref > 0.0) {
            return Err(Error::InvalidArgument(format!("c_ref must be positive, got {c_ref}")));
        }
        if !(pixel_volume.is_finite() && pixel_volume > 0.0) {
            return Err(Error::InvalidArgument(format!("pixel volume must be positive, got {pixel_volume}")));
        }
        let mut signal = signal;
        signal.sort_unstable();
        let background = (0..n).filter(|&p| !in_signal[p]).collect();
        Ok(Self {
            grid_shape,
            signal,
            background,
            c_ref,
            pixel_volume,
        })
    }

    /// Signal mask = the `wx x wy` block whose corner is `(x0, y0)`.
    pub fn block(
        grid_shape: (usize, usize),
        corner: (usize, usize),
        size: (usize, usize),
        c_ref: f64,
        pixel_volume: f64,
    ) -> Result<Self> {
        let (nx, ny) = grid_shape;
        if corner.0 + size.0 > nx || corner.1 + size.1 > ny {
            return Err(Error::IndexOutOfRange(format!(
                "block at {corner:?} of size {size:?} leaves a {nx}x{ny} grid"
            )));
        }
        let mut signal = Vec::with_capacity(size.0 * size.1);
        for j in corner.1..corner.1 + size.1 {
            for i in corner.0..corner.0 + size.0 {
                signal.push(i + nx * j);
            }
        }
        Self::new(grid_shape, signal, c_ref, pixel_volume)
    }

    /// Centered `w x w` block, rounded toward the lower indices on odd slack.
    pub fn central_block(grid_shape: (usize, usize), w: usize, c_ref: f64, pixel_volume: f64) -> Result<Self> {
        let corner = (grid_shape.0.saturating_sub(w) / 2, grid_shape.1.saturating_sub(w) / 2);
        Self::block(grid_shape, corner, (w, w), c_ref, pixel_volume)
    }

    /// Same masks with another reference level.
    pub fn with_c_ref(&self, c_ref: f64) -> Result<Self> {
        Self::new(self.grid_shape, self.signal.clone(), c_ref, self.pixel_volume)
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        self.grid_shape
    }

    pub fn signal(&self) -> &[usize] {
        &self.signal
    }

    pub fn background(&self) -> &[usize] {
        &self.background
    }

    pub fn c_ref(&self) -> f64 {
        self.c_ref
    }

    pub fn pixel_volume(&self) -> f64 {
        self.pixel_volume
    }

    pub fn pixels(&self) -> usize {
        self.grid_shape.0 * self.grid_shape.1
    }

    fn check(&self, c: &DVector<f64>) -> Result<()> {
        if c.len() != self.pixels() {
            return Err(Error::DimensionMismatch(format!(
                "image has {} pixels, region expects {}",
                c.len(),
                self.pixels()
            )));
        }
        Ok(())
    }
}

/// `Delta V * sum of c over the signal mask`.
pub fn iron_mass(c: &DVector<f64>, region: &RegionSpec) -> Result<f64> {
    region.check(c)?;
    Ok(region.pixel_volume * region.signal.iter().map(|&p| c[p]).sum::<f64>())
}

fn rms(c: &DVector<f64>, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    (idx.iter().map(|&p| c[p] * c[p]).sum::<f64>() / idx.len() as f64).sqrt()
}

/// RMS of the background pixels divided by `c_ref`.
pub fn background_level(c: &DVector<f64>, region: &RegionSpec) -> Result<f64> {
    region.check(c)?;
    Ok(rms(c, &region.background) / region.c_ref)
}

/// Max-abs signal over RMS background; `+inf` when the background is all zero.
pub fn snr(c: &DVector<f64>, region: &RegionSpec) -> Result<f64> {
    region.check(c)?;
    let peak = region.signal.iter().map(|&p| c[p].abs()).fold(0.0, f64::max);
    let noise = rms(c, &region.background);
    Ok(if noise == 0.0 { f64::INFINITY } else { peak / noise })
}

/// `max |c|` over the signal mask, used to fix `c_ref` once per comparison.
pub fn reference_level(c: &DVector<f64>, region: &RegionSpec) -> Result<f64> {
    region.check(c)?;
    Ok(region.signal.iter().map(|&p| c[p].abs()).fold(0.0, f64::max))
}

/// Width at half maximum of a 1-D profile in samples, from the outermost
/// linearly interpolated crossings around the first global maximum.
pub fn fwhm_profile(profile: &[f64]) -> Result<f64> {
    let (peak_idx, peak) = profile
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    if profile.is_empty() || peak.is_nan() || peak <= 0.0 {
        return Err(Error::InvalidArgument("profile has no positive maximum".into()));
    }
    let half = peak / 2.0;
    // Outermost crossing on the left: the first falling-below point scanning inward.
    let left = (0..peak_idx)
        .find(|&i| profile[i] < half && profile[i + 1] >= half)
        .map(|i| i as f64 + (half - profile[i]) / (profile[i + 1] - profile[i]))
        .ok_or(Error::NoCrossing { side: "left" })?;
    let right = (peak_idx + 1..profile.len())
        .rev()
        .find(|&i| profile[i] < half && profile[i - 1] >= half)
        .map(|i| (i - 1) as f64 + (profile[i - 1] - half) / (profile[i - 1] - profile[i]))
        .ok_or(Error::NoCrossing { side: "right" })?;
    Ok(right - left)
}

/// FWHM in mm of the x-profile through the brightest pixel (lowest linear
/// index on ties).
pub fn fwhm(c: &DVector<f64>, grid_shape: (usize, usize), pixel_pitch_mm: f64) -> Result<f64> {
    let (nx, ny) = grid_shape;
    if c.len() != nx * ny {
        return Err(Error::DimensionMismatch(format!("image has {} pixels, grid {nx}x{ny}", c.len())));
    }
    let mut best = 0;
    for (i, &v) in c.iter().enumerate() {
        if v > c[best] {
            best = i;
        }
    }
    let row = best / nx;
    let profile: Vec<f64> = (0..nx).map(|i| c[i + nx * row]).collect();
    Ok(fwhm_profile(&profile)? * pixel_pitch_mm)
}

/// Metrics for one reconstructed frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMetrics {
    /// One-based frame number.
    pub frame: usize,
    pub method: String,
    pub iron_mass_ug: f64,
    pub eps_bg: f64,
    pub snr: f64,
    /// `None` when the profile has no half-maximum crossing.
    pub fwhm_mm: Option<f64>,
}

pub fn frame_metrics(
    frame: usize,
    method: &str,
    c: &DVector<f64>,
    region: &RegionSpec,
    pixel_pitch_mm: f64,
) -> Result<FrameMetrics> {
    let fwhm_mm = match fwhm(c, region.grid_shape, pixel_pitch_mm) {
        Ok(w) => Some(w),
        Err(Error::NoCrossing { .. } | Error::InvalidArgument(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(FrameMetrics {
        frame,
        method: method.to_string(),
        iron_mass_ug: iron_mass(c, region)?,
        eps_bg: background_level(c, region)?,
        snr: snr(c, region)?,
        fwhm_mm,
    })
}

pub const CSV_HEADER: &str = "frame,method,iron_mass_ug,eps_bg,snr,fwhm_mm";

/// Renders rows in the metrics CSV format. Floats use Rust's shortest
/// round-trip formatting, so identical values give identical bytes.
pub fn metrics_csv(rows: &[FrameMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let fwhm = r.fwhm_mm.map_or_else(|| "NA".to_string(), |w| format!("{w:e}"));
        let snr = if r.snr.is_infinite() { "inf".to_string() } else { format!("{:e}", r.snr) };
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{},{}",
            r.frame, r.method, r.iron_mass_ug, r.eps_bg, snr, fwhm
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn region_construction() {
        let r = RegionSpec::central_block((16, 16), 6, 1.0, 1.0).unwrap();
        assert_eq!(r.signal().len(), 36);
        assert_eq!(r.background().len(), 256 - 36);
        assert_eq!(r.signal()[0], 5 + 16 * 5);
        assert!(RegionSpec::new((2, 2), vec![4], 1.0, 1.0).is_err());
        assert!(RegionSpec::new((2, 2), vec![0, 0], 1.0, 1.0).is_err());
        assert!(RegionSpec::new((2, 2), vec![0], 0.0, 1.0).is_err());
    }

    #[test]
    fn iron_mass_examples() {
        let r = RegionSpec::block((4, 4), (1, 1), (2, 2), 1.0, 1.0).unwrap();
        assert_eq!(iron_mass(&DVector::from_element(16, 1.0), &r).unwrap(), 4.0);
        assert_eq!(iron_mass(&DVector::zeros(16), &r).unwrap(), 0.0);
    }

    #[test]
    fn background_level_examples() {
        let r = RegionSpec::block((3, 3), (1, 1), (1, 1), 2.5, 1.0).unwrap();
        let mut c = DVector::zeros(9);
        c[4] = 7.0;
        assert_eq!(background_level(&c, &r).unwrap(), 0.0);
        let mut c = DVector::from_element(9, 2.5);
        c[4] = 7.0;
        assert_eq!(background_level(&c, &r).unwrap(), 1.0);
    }

    #[test]
    fn snr_examples() {
        let r = RegionSpec::block((3, 3), (1, 1), (1, 1), 1.0, 1.0).unwrap();
        let mut c = DVector::from_element(9, 2.0);
        c[4] = 10.0;
        assert_eq!(snr(&c, &r).unwrap(), 5.0);
        assert_eq!(snr(&(&c * 3.5), &r).unwrap(), 5.0);
        let mut z = DVector::zeros(9);
        z[4] = 1.0;
        assert_eq!(snr(&z, &r).unwrap(), f64::INFINITY);
    }

    #[test]
    fn fwhm_examples() {
        assert_eq!(fwhm_profile(&[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(fwhm_profile(&[1.0; 5]), Err(Error::NoCrossing { .. })));
        assert!(matches!(fwhm_profile(&[1.0, 0.0, 0.0]), Err(Error::NoCrossing { side: "left" })));
        // Multimodal: outermost crossings.
        let w = fwhm_profile(&[0.0, 1.0, 0.2, 1.0, 0.0]).unwrap();
        assert!((w - 3.0).abs() < 1e-15);
    }

    #[test]
    fn fwhm_uses_row_of_global_max_and_pitch() {
        let mut c = DVector::zeros(15);
        c[5 + 2] = 1.0;
        c[3] = 0.5;
        assert_eq!(fwhm(&c, (5, 3), 2.0).unwrap(), 2.0);
    }

    #[test]
    fn csv_layout() {
        let rows = vec![
            FrameMetrics {
                frame: 1,
                method: "joint".into(),
                iron_mass_ug: 31.0,
                eps_bg: 0.01,
                snr: f64::INFINITY,
                fwhm_mm: None,
            },
        ];
        let csv = metrics_csv(&rows);
        assert_eq!(csv, "frame,method,iron_mass_ug,eps_bg,snr,fwhm_mm\n1,joint,3.1e1,1e-2,inf,NA\n");
    }

    #[test]
    fn frame_metrics_without_dot() {
        let r = RegionSpec::central_block((4, 4), 2, 1.0, 1.0).unwrap();
        let m = frame_metrics(3, "static", &v(&[0.0; 16]), &r, 1.0).unwrap();
        assert_eq!(m.fwhm_mm, None);
        assert_eq!(m.iron_mass_ug, 0.0);
    }
}
