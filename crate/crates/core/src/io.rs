//! "MPIC v1" binary arrays and the JSON sidecars that travel with them.
//!
//! Layout: magic `MPIC`, version byte (1), dtype byte (0 real f64, 1 complex
//! f64 interleaved re/im), ndims byte (1 or 2), one reserved zero byte, then
//! `ndims` little-endian u64 dimension sizes and a row-major little-endian
//! IEEE-754 payload.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    BackgroundArchive, CMatrix, Dictionary, FrameSeries, FrequencySelection, ReconResult,
    SelectionLabel, SystemMatrix,
};

pub const MAGIC: [u8; 4] = *b"MPIC";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub enum MpicData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// A decoded MPIC array with row-major data.
#[derive(Clone, Debug, PartialEq)]
pub struct MpicArray {
    pub dims: Vec<usize>,
    pub data: MpicData,
}

impl MpicArray {
    pub fn from_complex_matrix(m: &CMatrix) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        Self {
            dims: vec![m.nrows(), m.ncols()],
            data: MpicData::Complex(data),
        }
    }

    pub fn from_real_matrix(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        Self {
            dims: vec![m.nrows(), m.ncols()],
            data: MpicData::Real(data),
        }
    }

    pub fn from_real_vector(v: &[f64]) -> Self {
        Self {
            dims: vec![v.len()],
            data: MpicData::Real(v.to_vec()),
        }
    }

    fn shape2(&self) -> (usize, usize) {
        match self.dims.as_slice() {
            [n] => (*n, 1),
            [r, c] => (*r, *c),
            _ => unreachable!("decoder only admits 1 or 2 dims"),
        }
    }

    /// Interprets the array as a complex matrix; real payloads are promoted
    /// and 1-D arrays become a single column.
    pub fn into_complex_matrix(self) -> CMatrix {
        let (r, c) = self.shape2();
        match self.data {
            MpicData::Complex(v) => CMatrix::from_row_slice(r, c, &v),
            MpicData::Real(v) => {
                let z: Vec<Complex64> = v.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
                CMatrix::from_row_slice(r, c, &z)
            }
        }
    }

    pub fn into_real_matrix(self, path: &Path) -> Result<DMatrix<f64>> {
        let (r, c) = self.shape2();
        match self.data {
            MpicData::Real(v) => Ok(DMatrix::from_row_slice(r, c, &v)),
            MpicData::Complex(_) => Err(Error::CorruptHeader {
                path: path.to_path_buf(),
                reason: "expected a real array, found complex".into(),
            }),
        }
    }
}

pub fn encode(array: &MpicArray) -> Vec<u8> {
    let (dtype, scalars) = match &array.data {
        MpicData::Real(v) => (0u8, v.len()),
        MpicData::Complex(v) => (1u8, 2 * v.len()),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * array.dims.len() + 8 * scalars);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(dtype);
    out.push(array.dims.len() as u8);
    out.push(0);
    for &d in &array.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match &array.data {
        MpicData::Real(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        MpicData::Complex(v) => v.iter().for_each(|z| {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }),
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<MpicArray> {
    let corrupt = |reason: &str| Error::CorruptHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("file shorter than the fixed header"));
    }
    if bytes[0..4] != MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version: bytes[4],
        });
    }
    let dtype = bytes[5];
    if dtype > 1 {
        return Err(corrupt("unknown dtype"));
    }
    let ndims = bytes[6] as usize;
    if !(1..=2).contains(&ndims) {
        return Err(corrupt("ndims must be 1 or 2"));
    }
    if bytes[7] != 0 {
        return Err(corrupt("reserved byte is not zero"));
    }
    let dims_end = HEADER_LEN + 8 * ndims;
    if bytes.len() < dims_end {
        return Err(corrupt("dimension table truncated"));
    }
    let dims: Vec<usize> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| corrupt("dimension product overflows"))?;
    let scalar_count = if dtype == 1 { count.checked_mul(2) } else { Some(count) }
        .ok_or_else(|| corrupt("dimension product overflows"))?;
    let expected = scalar_count
        .checked_mul(8)
        .ok_or_else(|| corrupt("dimension product overflows"))?;
    let payload = &bytes[dims_end..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(corrupt("trailing bytes after payload"));
    }
    let scalars = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let data = if dtype == 0 {
        MpicData::Real(scalars.collect())
    } else {
        let flat: Vec<f64> = scalars.collect();
        MpicData::Complex(
            flat.chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect(),
        )
    };
    Ok(MpicArray { dims, data })
}

pub fn write_array(array: &MpicArray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(array)).map_err(|e| Error::io(path, e))
}

pub fn read_array(path: impl AsRef<Path>) -> Result<MpicArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Writes a complex matrix as a 2-D complex MPIC file.
pub fn write_matrix(matrix: &CMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_array(&MpicArray::from_complex_matrix(matrix), path)
}

/// Reads any MPIC file as a complex matrix.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<CMatrix> {
    Ok(read_array(path)?.into_complex_matrix())
}

pub fn write_real_matrix(matrix: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    write_array(&MpicArray::from_real_matrix(matrix), path)
}

pub fn read_real_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    read_array(path)?.into_real_matrix(path)
}

pub fn write_real_vector(v: &[f64], path: impl AsRef<Path>) -> Result<()> {
    write_array(&MpicArray::from_real_vector(v), path)
}

pub fn read_real_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let m = read_array(path)?.into_real_matrix(path)?;
    Ok(m.iter().copied().collect())
}

/// Hex SHA-256 of the MPIC encoding of a complex matrix.
pub fn fingerprint(matrix: &CMatrix) -> String {
    let digest = Sha256::digest(encode(&MpicArray::from_complex_matrix(matrix)));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Sidecar path: `frames.mpic` -> `frames.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// JSON metadata written next to a frame series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSidecar {
    pub frame_period_s: f64,
    pub f_excitation_hz: f64,
    pub kept_indices: Vec<usize>,
    pub label: SelectionLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_start_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_stop_hz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SelectionSidecar {
    f_excitation_hz: f64,
    f_start_hz: f64,
    f_stop_hz: f64,
    kept_indices: Vec<usize>,
    label: SelectionLabel,
}

impl From<&FrequencySelection> for SelectionSidecar {
    fn from(fs: &FrequencySelection) -> Self {
        Self {
            f_excitation_hz: fs.f_excitation(),
            f_start_hz: fs.f_start(),
            f_stop_hz: fs.f_stop(),
            kept_indices: fs.kept_indices().to_vec(),
            label: fs.label(),
        }
    }
}

impl SelectionSidecar {
    fn into_selection(self) -> Result<FrequencySelection> {
        FrequencySelection::new(
            self.f_excitation_hz,
            self.f_start_hz,
            self.f_stop_hz,
            self.kept_indices,
            self.label,
        )
    }
}

pub fn write_frame_series(series: &FrameSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_matrix(series.frames(), path)?;
    let fs = series.freq_selection();
    let sidecar = FrameSidecar {
        frame_period_s: series.frame_period(),
        f_excitation_hz: fs.f_excitation(),
        kept_indices: fs.kept_indices().to_vec(),
        label: fs.label(),
        f_start_hz: Some(fs.f_start()),
        f_stop_hz: Some(fs.f_stop()),
    };
    write_json(&sidecar, &sidecar_path(path))
}

pub fn read_frame_series(path: impl AsRef<Path>) -> Result<FrameSeries> {
    let path = path.as_ref();
    let frames = read_matrix(path)?;
    let meta: FrameSidecar = read_json(&sidecar_path(path))?;
    let f_start = meta.f_start_hz.unwrap_or(match meta.label {
        SelectionLabel::Including => meta.f_excitation_hz,
        SelectionLabel::Excluding => 2.0 * meta.f_excitation_hz,
        SelectionLabel::Custom => 0.0,
    });
    let fs = FrequencySelection::new(
        meta.f_excitation_hz,
        f_start,
        meta.f_stop_hz.unwrap_or(0.0),
        meta.kept_indices,
        meta.label,
    )?;
    FrameSeries::new(frames, meta.frame_period_s, fs)
}

#[derive(Serialize, Deserialize)]
struct SystemSidecar {
    grid_shape: (usize, usize),
    pixel_volume_l: f64,
    freq_selection: SelectionSidecar,
}

pub fn write_system_matrix(s: &SystemMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_matrix(s.entries(), path)?;
    let sidecar = SystemSidecar {
        grid_shape: s.grid_shape(),
        pixel_volume_l: s.pixel_volume(),
        freq_selection: s.freq_selection().into(),
    };
    write_json(&sidecar, &sidecar_path(path))
}

pub fn read_system_matrix(path: impl AsRef<Path>) -> Result<SystemMatrix> {
    let path = path.as_ref();
    let entries = read_matrix(path)?;
    let meta: SystemSidecar = read_json(&sidecar_path(path))?;
    SystemMatrix::new(
        entries,
        meta.grid_shape,
        meta.pixel_volume_l,
        meta.freq_selection.into_selection()?,
    )
}

#[derive(Serialize, Deserialize)]
struct ArchiveSidecar {
    scan_count: usize,
    freq_selection: SelectionSidecar,
}

pub fn write_archive(archive: &BackgroundArchive, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_matrix(archive.scans(), path)?;
    let sidecar = ArchiveSidecar {
        scan_count: archive.scan_count(),
        freq_selection: archive.freq_selection().into(),
    };
    write_json(&sidecar, &sidecar_path(path))
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<BackgroundArchive> {
    let path = path.as_ref();
    let scans = read_matrix(path)?;
    let meta: ArchiveSidecar = read_json(&sidecar_path(path))?;
    if meta.scan_count != scans.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "sidecar lists {} scans, file holds {}",
            meta.scan_count,
            scans.ncols()
        )));
    }
    BackgroundArchive::new(scans, meta.freq_selection.into_selection()?)
}

#[derive(Serialize, Deserialize)]
struct DictionarySidecar {
    #[serde(rename = "Q")]
    q: usize,
    source_fingerprint: String,
    threshold: f64,
    freq_selection: SelectionSidecar,
}

/// Persists a dictionary as `<dir>/W.mpic`, `<dir>/singular_values.mpic`
/// and `<dir>/dictionary.json`.
pub fn write_dictionary(dict: &Dictionary, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix(dict.basis(), dir.join("W.mpic"))?;
    write_real_vector(dict.singular_values(), dir.join("singular_values.mpic"))?;
    let sidecar = DictionarySidecar {
        q: dict.rank_kept(),
        source_fingerprint: dict.source_fingerprint().to_string(),
        threshold: dict.rank_threshold(),
        freq_selection: dict.freq_selection().into(),
    };
    write_json(&sidecar, &dir.join("dictionary.json"))
}

pub fn read_dictionary(dir: impl AsRef<Path>) -> Result<Dictionary> {
    let dir = dir.as_ref();
    let basis = read_matrix(dir.join("W.mpic"))?;
    let sv = read_real_vector(dir.join("singular_values.mpic"))?;
    let meta: DictionarySidecar = read_json(&dir.join("dictionary.json"))?;
    if meta.q != basis.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "sidecar Q = {} but W has {} columns",
            meta.q,
            basis.ncols()
        )));
    }
    Dictionary::from_parts(
        basis,
        sv,
        meta.threshold,
        meta.source_fingerprint,
        meta.freq_selection.into_selection()?,
    )
}

/// Writes `C.mpic` (real `N x L`), `C_raw.mpic`, `Ncoef.mpic`, `B.mpic`,
/// `B_abs.mpic` and `diagnostics.json` into `dir`.
pub fn write_recon_result(result: &ReconResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_real_matrix(&result.concentrations, dir.join("C.mpic"))?;
    write_matrix(&result.raw_concentrations, dir.join("C_raw.mpic"))?;
    write_matrix(&result.coefficients, dir.join("Ncoef.mpic"))?;
    write_matrix(&result.backgrounds, dir.join("B.mpic"))?;
    write_matrix(&result.absolute_backgrounds, dir.join("B_abs.mpic"))?;
    write_json(&result.diagnostics, &dir.join("diagnostics.json"))
}

pub fn read_recon_result(dir: impl AsRef<Path>) -> Result<ReconResult> {
    let dir = dir.as_ref();
    Ok(ReconResult {
        concentrations: read_real_matrix(dir.join("C.mpic"))?,
        raw_concentrations: read_matrix(dir.join("C_raw.mpic"))?,
        coefficients: read_matrix(dir.join("Ncoef.mpic"))?,
        backgrounds: read_matrix(dir.join("B.mpic"))?,
        absolute_backgrounds: read_matrix(dir.join("B_abs.mpic"))?,
        diagnostics: read_json(&dir.join("diagnostics.json"))?,
    })
}
