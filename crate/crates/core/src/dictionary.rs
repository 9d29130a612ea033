//! Background dictionary construction from an archive of empty-bore scans.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::fingerprint;
use crate::model::{BackgroundArchive, CMatrix, Dictionary};
use crate::svd::left_svd;

/// Singular values at or below `s_1 * DEFAULT_RANK_THRESHOLD` count as zero.
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-12;
/// Default `s_i / s_1` cut used to suggest an elbow in the spectrum.
pub const DEFAULT_ELBOW_THRESHOLD: f64 = 1e-2;

/// Number of singular values strictly above `s_1 * threshold`.
pub fn numerical_rank(singular_values: &[f64], threshold: f64) -> usize {
    match singular_values.first() {
        Some(&s1) if s1 > 0.0 => singular_values.iter().filter(|&&s| s > s1 * threshold).count(),
        _ => 0,
    }
}

/// Rotates every column so its largest-magnitude entry is real and positive.
/// The lowest row index wins ties.
pub fn apply_phase_convention(basis: &mut CMatrix) {
    for mut col in basis.column_iter_mut() {
        let mut best = 0;
        let mut best_mag = -1.0;
        for (i, z) in col.iter().enumerate() {
            let mag = z.norm();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        if best_mag <= 0.0 {
            continue;
        }
        let rot = col[best].conj() / best_mag;
        for z in col.iter_mut() {
            *z *= rot;
        }
        col[best] = Complex64::new(col[best].re, 0.0);
    }
}

/// Builds `W` from the `q` leading left singular vectors of the archive.
pub fn build_dictionary(archive: &BackgroundArchive, q: usize) -> Result<Dictionary> {
    build_dictionary_with(archive, q, DEFAULT_RANK_THRESHOLD)
}

pub fn build_dictionary_with(
    archive: &BackgroundArchive,
    q: usize,
    rank_threshold: f64,
) -> Result<Dictionary> {
    let x = archive.scans();
    let k = x.nrows().min(x.ncols());
    if q == 0 || q > k {
        return Err(Error::InvalidArgument(format!(
            "dictionary rank {q} must lie in 1..={k}"
        )));
    }
    let svd = left_svd(x);
    let rank = numerical_rank(&svd.singular_values, rank_threshold);
    if q > rank {
        return Err(Error::RankDeficient {
            requested: q,
            numerical_rank: rank,
        });
    }
    let mut basis = svd.u.columns(0, q).into_owned();
    apply_phase_convention(&mut basis);
    Ok(Dictionary {
        basis,
        singular_values: svd.singular_values,
        rank_threshold,
        source_fingerprint: fingerprint(x),
        freq_selection: archive.freq_selection().clone(),
    })
}

/// Singular spectrum of an archive with a suggested truncation point.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    /// One-based index of the first `s_i` with `s_i / s_1 < threshold`;
    /// `None` for a flat spectrum that never drops below it.
    pub elbow: Option<usize>,
}

impl SpectrumReport {
    pub fn relative(&self) -> Vec<f64> {
        let s1 = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .map(|&s| if s1 > 0.0 { s / s1 } else { 0.0 })
            .collect()
    }

    /// CSV with columns `index,singular_value,relative,is_elbow`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,singular_value,relative,is_elbow\n");
        for (i, (s, r)) in self.singular_values.iter().zip(self.relative()).enumerate() {
            let idx = i + 1;
            let _ = writeln!(out, "{idx},{s:e},{r:e},{}", self.elbow == Some(idx));
        }
        out
    }
}

pub fn spectrum_report(archive: &BackgroundArchive, threshold: f64) -> SpectrumReport {
    let svd = left_svd(archive.scans());
    let s1 = svd.singular_values.first().copied().unwrap_or(0.0);
    let elbow = if s1 > 0.0 {
        svd.singular_values
            .iter()
            .position(|&s| s / s1 < threshold)
            .map(|i| i + 1)
    } else {
        None
    };
    SpectrumReport {
        singular_values: svd.singular_values,
        threshold,
        elbow,
    }
}
