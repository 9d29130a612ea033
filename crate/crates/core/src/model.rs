//! Shared domain types and the slicing/stacking primitives used by every
//! reconstruction pipeline.
//!
//! Matrices are dense `nalgebra` matrices of `Complex64`. The slicing
//! operators use one-based inclusive index ranges at the API surface.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Scalar};
use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::SolverChoice;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Which band-pass variant produced a frequency selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionLabel {
    /// Band starts at the excitation frequency (feed-through kept).
    Including,
    /// Band starts at the second harmonic of the excitation frequency.
    Excluding,
    Custom,
}

/// Descriptor of which spectral rows were retained before reconstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySelection {
    f_excitation: f64,
    f_start: f64,
    f_stop: f64,
    kept_indices: Vec<usize>,
    label: SelectionLabel,
}

impl FrequencySelection {
    pub fn new(
        f_excitation: f64,
        f_start: f64,
        f_stop: f64,
        kept_indices: Vec<usize>,
        label: SelectionLabel,
    ) -> Result<Self> {
        if !(f_excitation.is_finite() && f_start.is_finite() && f_stop.is_finite()) {
            return Err(Error::InvalidArgument(
                "frequency selection bounds must be finite".into(),
            ));
        }
        if kept_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "kept_indices must be strictly increasing".into(),
            ));
        }
        let expected_start = match label {
            SelectionLabel::Including => Some(f_excitation),
            SelectionLabel::Excluding => Some(2.0 * f_excitation),
            SelectionLabel::Custom => None,
        };
        if let Some(expected) = expected_start {
            if (f_start - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "label {label:?} requires f_start = {expected}, got {f_start}"
                )));
            }
        }
        Ok(Self {
            f_excitation,
            f_start,
            f_stop,
            kept_indices,
            label,
        })
    }

    /// Band-pass selection over a list of bin frequencies: keeps every bin
    /// with `f_start <= f <= f_stop`, where `f_start` follows from `label`.
    pub fn band_pass(
        f_excitation: f64,
        f_stop: f64,
        bin_frequencies: &[f64],
        label: SelectionLabel,
    ) -> Result<Self> {
        let f_start = match label {
            SelectionLabel::Including => f_excitation,
            SelectionLabel::Excluding => 2.0 * f_excitation,
            SelectionLabel::Custom => {
                return Err(Error::InvalidArgument(
                    "band_pass needs the including or excluding label".into(),
                ))
            }
        };
        let kept = bin_frequencies
            .iter()
            .enumerate()
            .filter(|(_, &f)| f >= f_start && f <= f_stop)
            .map(|(i, _)| i)
            .collect();
        Self::new(f_excitation, f_start, f_stop, kept, label)
    }

    /// Custom selection keeping rows `0..m` with no band semantics.
    pub fn all_rows(m: usize) -> Self {
        Self {
            f_excitation: 0.0,
            f_start: 0.0,
            f_stop: 0.0,
            kept_indices: (0..m).collect(),
            label: SelectionLabel::Custom,
        }
    }

    pub fn f_excitation(&self) -> f64 {
        self.f_excitation
    }

    pub fn f_start(&self) -> f64 {
        self.f_start
    }

    pub fn f_stop(&self) -> f64 {
        self.f_stop
    }

    pub fn kept_indices(&self) -> &[usize] {
        &self.kept_indices
    }

    pub fn label(&self) -> SelectionLabel {
        self.label
    }

    pub fn len(&self) -> usize {
        self.kept_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_indices.is_empty()
    }

    /// Errors unless both selections keep exactly the same rows.
    pub fn ensure_compatible(&self, other: &FrequencySelection, what: &str) -> Result<()> {
        if self.kept_indices != other.kept_indices {
            return Err(Error::FrequencyMismatch(format!(
                "{what}: kept_indices differ ({} vs {} rows)",
                self.kept_indices.len(),
                other.kept_indices.len()
            )));
        }
        Ok(())
    }

    fn ensure_tags(&self, rows: usize, what: &str) -> Result<()> {
        if self.kept_indices.len() != rows {
            return Err(Error::DimensionMismatch(format!(
                "{what} has {rows} rows but its frequency selection keeps {}",
                self.kept_indices.len()
            )));
        }
        Ok(())
    }
}

fn ensure_finite(m: &CMatrix, what: &str) -> Result<()> {
    if let Some(pos) = m.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "{what} has a non-finite entry at flat index {pos}"
        )));
    }
    Ok(())
}

/// Forward operator mapping a pixel concentration to spectral measurements.
#[derive(Clone, Debug)]
pub struct SystemMatrix {
    entries: CMatrix,
    grid_shape: (usize, usize),
    pixel_volume: f64,
    freq_selection: FrequencySelection,
}

impl SystemMatrix {
    /// `grid_shape` is `(nx, ny)`; pixel `(i, j)` lives in column `i + nx * j`.
    /// `pixel_volume` is in litres.
    pub fn new(
        entries: CMatrix,
        grid_shape: (usize, usize),
        pixel_volume: f64,
        freq_selection: FrequencySelection,
    ) -> Result<Self> {
        let (m, n) = entries.shape();
        if m == 0 || n == 0 {
            return Err(Error::DimensionMismatch(
                "system matrix needs at least one row and one column".into(),
            ));
        }
        if grid_shape.0 * grid_shape.1 != n {
            return Err(Error::DimensionMismatch(format!(
                "grid {}x{} does not match {n} columns",
                grid_shape.0, grid_shape.1
            )));
        }
        if !(pixel_volume.is_finite() && pixel_volume > 0.0) {
            return Err(Error::InvalidArgument("pixel volume must be positive".into()));
        }
        ensure_finite(&entries, "system matrix")?;
        freq_selection.ensure_tags(m, "system matrix")?;
        Ok(Self {
            entries,
            grid_shape,
            pixel_volume,
            freq_selection,
        })
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        self.grid_shape
    }

    pub fn pixel_volume(&self) -> f64 {
        self.pixel_volume
    }

    pub fn freq_selection(&self) -> &FrequencySelection {
        &self.freq_selection
    }
}

/// Ordered measurement frames, stored as the columns of an `M x L` matrix.
#[derive(Clone, Debug)]
pub struct FrameSeries {
    frames: CMatrix,
    frame_period: f64,
    freq_selection: FrequencySelection,
}

impl FrameSeries {
    pub fn new(frames: CMatrix, frame_period: f64, freq_selection: FrequencySelection) -> Result<Self> {
        if frames.ncols() == 0 {
            return Err(Error::DimensionMismatch("frame series needs at least one frame".into()));
        }
        ensure_finite(&frames, "frame series")?;
        freq_selection.ensure_tags(frames.nrows(), "frame series")?;
        Ok(Self {
            frames,
            frame_period,
            freq_selection,
        })
    }

    pub fn frames(&self) -> &CMatrix {
        &self.frames
    }

    /// Frame with zero-based index `idx`.
    pub fn frame(&self, idx: usize) -> CVector {
        self.frames.column(idx).into_owned()
    }

    pub fn frame_len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn freq_selection(&self) -> &FrequencySelection {
        &self.freq_selection
    }

    /// Sub-series of the one-based inclusive frame range `first..=last`.
    pub fn sub_series(&self, first: usize, last: usize) -> Result<FrameSeries> {
        let l = self.frame_count();
        if first < 1 || first > last || last > l {
            return Err(Error::IndexOutOfRange(format!(
                "frame range {first}..={last} outside 1..={l}"
            )));
        }
        let frames = self.frames.columns(first - 1, last - first + 1).into_owned();
        FrameSeries::new(frames, self.frame_period, self.freq_selection.clone())
    }
}

/// Empty-bore scans `X` (one scan per column) used to learn the background subspace.
#[derive(Clone, Debug)]
pub struct BackgroundArchive {
    scans: CMatrix,
    freq_selection: FrequencySelection,
}

impl BackgroundArchive {
    pub fn new(scans: CMatrix, freq_selection: FrequencySelection) -> Result<Self> {
        if scans.ncols() == 0 || scans.nrows() == 0 {
            return Err(Error::DimensionMismatch("background archive is empty".into()));
        }
        ensure_finite(&scans, "background archive")?;
        freq_selection.ensure_tags(scans.nrows(), "background archive")?;
        Ok(Self {
            scans,
            freq_selection,
        })
    }

    pub fn scans(&self) -> &CMatrix {
        &self.scans
    }

    pub fn scan_count(&self) -> usize {
        self.scans.ncols()
    }

    pub fn freq_selection(&self) -> &FrequencySelection {
        &self.freq_selection
    }
}

/// Orthonormal background basis `W` with the spectrum it was cut from.
#[derive(Clone, Debug)]
pub struct Dictionary {
    pub(crate) basis: CMatrix,
    pub(crate) singular_values: Vec<f64>,
    pub(crate) rank_threshold: f64,
    pub(crate) source_fingerprint: String,
    pub(crate) freq_selection: FrequencySelection,
}

impl Dictionary {
    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn rank_kept(&self) -> usize {
        self.basis.ncols()
    }

    pub fn rank_threshold(&self) -> f64 {
        self.rank_threshold
    }

    pub fn source_fingerprint(&self) -> &str {
        &self.source_fingerprint
    }

    pub fn freq_selection(&self) -> &FrequencySelection {
        &self.freq_selection
    }

    /// Reassembles a dictionary from persisted parts, re-checking its invariants.
    pub fn from_parts(
        basis: CMatrix,
        singular_values: Vec<f64>,
        rank_threshold: f64,
        source_fingerprint: String,
        freq_selection: FrequencySelection,
    ) -> Result<Self> {
        freq_selection.ensure_tags(basis.nrows(), "dictionary")?;
        if basis.ncols() == 0 || basis.ncols() > singular_values.len() {
            return Err(Error::DimensionMismatch(format!(
                "dictionary rank {} incompatible with {} singular values",
                basis.ncols(),
                singular_values.len()
            )));
        }
        if singular_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "singular values must be nonincreasing".into(),
            ));
        }
        let gram = basis.adjoint() * &basis;
        let dev = orthonormality_defect(&gram);
        if dev > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "dictionary columns are not orthonormal (defect {dev:e})"
            )));
        }
        Ok(Self {
            basis,
            singular_values,
            rank_threshold,
            source_fingerprint,
            freq_selection,
        })
    }
}

/// Max-entry deviation of a Gram matrix from the identity.
pub fn orthonormality_defect(gram: &CMatrix) -> f64 {
    let mut dev = 0.0f64;
    for j in 0..gram.ncols() {
        for i in 0..gram.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    dev
}

/// Where the reference background `b_est` comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundSource {
    /// Mean of the listed one-based frames of the series.
    MeanOfFrames(Vec<usize>),
    File(PathBuf),
    Zero,
}

/// Regularization and solver settings shared by all pipelines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub lambda_rel: f64,
    pub beta: f64,
    pub dict_rank: usize,
    pub kaczmarz_iterations: usize,
    pub enforce_real_positive: bool,
    pub b_est_source: BackgroundSource,
    /// Per-frame solver; Kaczmarz unless the dense reference is requested.
    pub solver: SolverChoice,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            lambda_rel: 1.0,
            beta: 0.2f64.powi(10),
            dict_rank: 2,
            kaczmarz_iterations: 20,
            enforce_real_positive: false,
            b_est_source: BackgroundSource::MeanOfFrames((1..=5).collect()),
            solver: SolverChoice::Kaczmarz,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_rel.is_finite() && self.lambda_rel >= 0.0) {
            return Err(Error::Config(format!("lambda_rel must be finite and >= 0, got {}", self.lambda_rel)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be finite and > 0, got {}", self.beta)));
        }
        if self.kaczmarz_iterations == 0 {
            return Err(Error::Config("kaczmarz_iterations must be >= 1".into()));
        }
        if self.dict_rank == 0 {
            return Err(Error::Config("dict_rank must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-frame solver diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    /// `||A y - w||_2` at the returned solution.
    pub residual_norm: f64,
    /// `||A y - w||^2 + ||D y||^2`.
    pub objective: f64,
    pub sweeps: usize,
    /// `||(A^H A + D^H D) y - A^H w||_2`.
    pub normal_defect: f64,
}

/// Output of a reconstruction pipeline over `L` frames. Column `l` of each
/// matrix belongs to frame `l`.
#[derive(Clone, Debug)]
pub struct ReconResult {
    /// Real concentrations, `N x L` (after the optional projection).
    pub concentrations: DMatrix<f64>,
    /// Complex concentration block as returned by the solver, `N x L`.
    pub raw_concentrations: CMatrix,
    /// Dictionary coefficients, `Q x L` (`0 x L` for the baselines).
    pub coefficients: CMatrix,
    /// Background drift relative to `b_est`, `M x L`.
    pub backgrounds: CMatrix,
    /// `b_est + drift`, `M x L`.
    pub absolute_backgrounds: CMatrix,
    pub diagnostics: Vec<FrameDiagnostics>,
}

impl ReconResult {
    pub fn frame_count(&self) -> usize {
        self.concentrations.ncols()
    }

    /// Concentration image of zero-based frame `idx`.
    pub fn concentration(&self, idx: usize) -> DVector<f64> {
        self.concentrations.column(idx).into_owned()
    }
}

fn check_range(what: &str, j: usize, k: usize, len: usize) -> Result<()> {
    if j < 1 || j > k || k > len {
        return Err(Error::IndexOutOfRange(format!(
            "{what} range {j}..={k} invalid for length {len}"
        )));
    }
    Ok(())
}

/// Copy of entries `j..=k` (one-based, inclusive).
pub fn slice_vector<T: Scalar>(x: &DVector<T>, j: usize, k: usize) -> Result<DVector<T>> {
    check_range("vector", j, k, x.len())?;
    Ok(x.rows(j - 1, k - j + 1).into_owned())
}

/// Block with rows `j..=k` and columns `l..=m` (one-based, inclusive).
pub fn slice_matrix<T: Scalar>(
    a: &DMatrix<T>,
    j: usize,
    k: usize,
    l: usize,
    m: usize,
) -> Result<DMatrix<T>> {
    check_range("row", j, k, a.nrows())?;
    check_range("column", l, m, a.ncols())?;
    Ok(a.view((j - 1, l - 1), (k - j + 1, m - l + 1)).into_owned())
}

/// `(S W)`: the columns of `s` followed by the columns of `w`.
pub fn hstack<T: Scalar + Zero>(s: &DMatrix<T>, w: &DMatrix<T>) -> Result<DMatrix<T>> {
    if s.nrows() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "hstack of {} rows with {} rows",
            s.nrows(),
            w.nrows()
        )));
    }
    let mut out = DMatrix::<T>::zeros(s.nrows(), s.ncols() + w.ncols());
    out.columns_mut(0, s.ncols()).copy_from(s);
    out.columns_mut(s.ncols(), w.ncols()).copy_from(w);
    Ok(out)
}
