//! Reproducible experiments: configuration, input loading, method runs,
//! metric tables, previews and run manifests. The command-line front end is a
//! thin layer over these functions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dictionary::{build_dictionary, spectrum_report, DEFAULT_ELBOW_THRESHOLD};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{frame_metrics, metrics_csv, reference_level, FrameMetrics, RegionSpec};
use crate::model::{BackgroundArchive, BackgroundSource, CVector, Dictionary, FrameSeries, ReconConfig, ReconResult, SystemMatrix};
use crate::recon::{background_mean, reconstruct_interp, reconstruct_joint, reconstruct_static, resolve_background};
use crate::scenario::{Scenario, ScenarioParams};
use crate::shifted::{reconstruct_shifted, ShiftOperator};

pub const SEED_ENV: &str = "MPIJR_SEED";

/// Reconstruction pipeline selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Joint,
    Static,
    Interp,
    Shifted,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Joint => "joint",
            Method::Static => "static",
            Method::Interp => "interp",
            Method::Shifted => "shifted",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Method::Joint),
            "static" => Ok(Method::Static),
            "interp" => Ok(Method::Interp),
            "shifted" => Ok(Method::Shifted),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Everything an experiment needs. Frame indices are one-based. `pre_frames`,
/// `post_frames` and the background source index the whole acquisition;
/// `pair` and `sweep_frame` index the reconstructed range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Generate inputs in memory instead of reading files.
    pub simulation: Option<ScenarioParams>,
    pub system: Option<PathBuf>,
    pub series: Option<PathBuf>,
    pub archive: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub method: Method,
    pub methods: Vec<Method>,
    pub recon: ReconConfig,
    pub first_frame: Option<usize>,
    pub last_frame: Option<usize>,
    pub pre_frames: Vec<usize>,
    pub post_frames: Vec<usize>,
    pub pair: (usize, usize),
    pub shift1: (i64, i64),
    pub shift2: (i64, i64),
    pub betas: Vec<f64>,
    pub ranks: Vec<usize>,
    pub sweep_frame: usize,
    pub signal_block: usize,
    pub signal_corner: Option<(usize, usize)>,
    pub c_ref: Option<f64>,
    pub pixel_pitch_mm: f64,
    pub spectrum_threshold: f64,
    pub previews: bool,
    pub output: PathBuf,
    pub threads: usize,
}

/// `beta_j = (1/5)^(j-1)` for `j = 1..=count`.
pub fn beta_grid(count: usize) -> Vec<f64> {
    (0..count).map(|j| 0.2f64.powi(j as i32)).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            simulation: None,
            system: None,
            series: None,
            archive: None,
            dictionary: None,
            method: Method::Joint,
            methods: vec![Method::Static, Method::Interp, Method::Joint],
            recon: ReconConfig::default(),
            first_frame: None,
            last_frame: None,
            pre_frames: Vec::new(),
            post_frames: Vec::new(),
            pair: (1, 2),
            shift1: (1, 0),
            shift2: (-1, 0),
            betas: beta_grid(15),
            ranks: (1..=10).collect(),
            sweep_frame: 1,
            signal_block: 6,
            signal_corner: None,
            c_ref: None,
            pixel_pitch_mm: 1.0,
            spectrum_threshold: DEFAULT_ELBOW_THRESHOLD,
            previews: true,
            output: PathBuf::from("out"),
            threads: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
        // A manifest carries its resolved configuration.
        let value = match value.get("config_sha256") {
            Some(_) => value.get("config").cloned().unwrap_or(serde_json::Value::Null),
            None => value,
        };
        serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }

    /// Applies the `MPIJR_SEED` override, if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
        }
        Ok(())
    }

    /// Fills simulation-derived defaults and checks invariants. The result
    /// is what gets written to the manifest.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(sim) = self.simulation.as_mut() {
            sim.seed = self.seed;
            sim.validate()?;
            let pre = sim.pre_frames;
            let total = sim.acquisition_frames();
            if self.first_frame.is_none() && self.last_frame.is_none() {
                self.first_frame = Some(pre + 1);
                self.last_frame = Some(pre + sim.frames);
            }
            if self.pre_frames.is_empty() && pre > 0 {
                self.pre_frames = (1..=pre).collect();
            }
            if self.post_frames.is_empty() && sim.post_frames > 0 {
                self.post_frames = (total - sim.post_frames + 1..=total).collect();
            }
            if self.recon.b_est_source == ReconConfig::default().b_est_source {
                self.recon.b_est_source = if pre > 0 {
                    BackgroundSource::MeanOfFrames((1..=pre).collect())
                } else {
                    BackgroundSource::MeanOfFrames(vec![1])
                };
            }
            if self.pixel_pitch_mm == ExperimentConfig::default().pixel_pitch_mm {
                self.pixel_pitch_mm = sim.pixel_pitch_mm;
            }
            if self.signal_block == ExperimentConfig::default().signal_block {
                self.signal_block = sim.signal_block;
            }
        }
        self.recon.validate()?;
        if self.threads == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        if self.betas.is_empty() || self.ranks.is_empty() {
            return Err(Error::Config("sweep grids must be nonempty".into()));
        }
        if self.betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Config("sweep betas must be finite and > 0".into()));
        }
        if self.ranks.contains(&0) {
            return Err(Error::Config("sweep ranks must be >= 1".into()));
        }
        if !(self.pixel_pitch_mm.is_finite() && self.pixel_pitch_mm > 0.0) {
            return Err(Error::Config("pixel_pitch_mm must be > 0".into()));
        }
        if let Some(c) = self.c_ref {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config("c_ref must be > 0".into()));
            }
        }
        Ok(self)
    }

    /// SHA-256 of the configuration with the output directory and thread
    /// count cleared, since neither changes any result.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        c.threads = 1;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Inputs of an experiment, read from disk or generated.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub system: SystemMatrix,
    pub acquisition: FrameSeries,
    pub archive: Option<BackgroundArchive>,
    pub dictionary: Option<Dictionary>,
    /// Input file path -> SHA-256 of its bytes.
    pub hashes: BTreeMap<String, String>,
}

impl Inputs {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        if let Some(sim) = &cfg.simulation {
            let sc = Scenario::generate(sim)?;
            return Ok(Self {
                system: sc.system,
                acquisition: sc.acquisition,
                archive: Some(sc.archive),
                dictionary: None,
                hashes: BTreeMap::new(),
            });
        }
        let mut hashes = BTreeMap::new();
        let mut record = |p: &Path| -> Result<()> {
            hashes.insert(p.display().to_string(), file_sha256(p)?);
            Ok(())
        };
        let system_path = cfg
            .system
            .as_ref()
            .ok_or_else(|| Error::Config("no system matrix given (system or simulation)".into()))?;
        let series_path = cfg
            .series
            .as_ref()
            .ok_or_else(|| Error::Config("no frame series given (series or simulation)".into()))?;
        record(system_path)?;
        record(series_path)?;
        let system = io::read_system_matrix(system_path)?;
        let acquisition = io::read_frame_series(series_path)?;
        let archive = match &cfg.archive {
            Some(p) => {
                record(p)?;
                Some(io::read_archive(p)?)
            }
            None => None,
        };
        let dictionary = match &cfg.dictionary {
            Some(p) => {
                record(&p.join("W.mpic"))?;
                Some(io::read_dictionary(p)?)
            }
            None => None,
        };
        if let BackgroundSource::File(p) = &cfg.recon.b_est_source {
            record(p)?;
        }
        Ok(Self {
            system,
            acquisition,
            archive,
            dictionary,
            hashes,
        })
    }

    /// Rank-`q` dictionary: the leading columns of a stored dictionary, or
    /// one built from the archive.
    pub fn dictionary(&self, q: usize) -> Result<Dictionary> {
        if let Some(d) = &self.dictionary {
            if q <= d.rank_kept() {
                return Dictionary::from_parts(
                    d.basis().columns(0, q).into_owned(),
                    d.singular_values().to_vec(),
                    d.rank_threshold(),
                    d.source_fingerprint().to_string(),
                    d.freq_selection().clone(),
                );
            }
            if self.archive.is_none() {
                return Err(Error::Config(format!(
                    "stored dictionary has rank {}, {q} requested and no archive given",
                    d.rank_kept()
                )));
            }
        }
        let archive = self
            .archive
            .as_ref()
            .ok_or_else(|| Error::Config("joint reconstruction needs an archive or a dictionary".into()))?;
        build_dictionary(archive, q)
    }

    /// One-based acquisition frames selected for reconstruction.
    pub fn frame_range(&self, cfg: &ExperimentConfig) -> Result<(usize, usize)> {
        let first = cfg.first_frame.unwrap_or(1);
        let last = cfg.last_frame.unwrap_or(self.acquisition.frame_count());
        if first < 1 || first > last || last > self.acquisition.frame_count() {
            return Err(Error::Config(format!(
                "frame range {first}..={last} is empty or outside 1..={}",
                self.acquisition.frame_count()
            )));
        }
        Ok((first, last))
    }

    pub fn series(&self, cfg: &ExperimentConfig) -> Result<FrameSeries> {
        let (first, last) = self.frame_range(cfg)?;
        self.acquisition.sub_series(first, last)
    }

    fn mean_or_config_error(&self, idx: &[usize], what: &str) -> Result<CVector> {
        if idx.is_empty() {
            return Err(Error::Config(format!("{what} frames are required for interpolation")));
        }
        Ok(background_mean(&self.acquisition, idx)?.b_est)
    }
}

/// Concentration images of one method. Column `k` belongs to the one-based
/// reconstructed frame `frames[k]`.
#[derive(Clone, Debug)]
pub struct MethodRun {
    pub method: Method,
    pub label: String,
    pub frames: Vec<usize>,
    pub concentrations: DMatrix<f64>,
    pub result: Option<ReconResult>,
}

/// Runs one pipeline on the configured frame range.
pub fn run_method(method: Method, inputs: &Inputs, cfg: &ExperimentConfig) -> Result<MethodRun> {
    let series = inputs.series(cfg)?;
    let b_est = resolve_background(&cfg.recon.b_est_source, &inputs.acquisition)?;
    let result = match method {
        Method::Static => reconstruct_static(&inputs.system, &series, &b_est, &cfg.recon)?,
        Method::Interp => {
            let u_pre = inputs.mean_or_config_error(&cfg.pre_frames, "pre")?;
            let u_post = inputs.mean_or_config_error(&cfg.post_frames, "post")?;
            reconstruct_interp(&inputs.system, &series, &u_pre, &u_post, &cfg.recon)?
        }
        Method::Joint => {
            let dict = inputs.dictionary(cfg.recon.dict_rank)?;
            reconstruct_joint(&inputs.system, &dict, &series, &b_est, &cfg.recon)?
        }
        Method::Shifted => {
            let (i, j) = cfg.pair;
            let l = series.frame_count();
            if i < 1 || j < 1 || i > l || j > l {
                return Err(Error::Config(format!("pair ({i}, {j}) outside 1..={l}")));
            }
            let grid = inputs.system.grid_shape();
            let op1 = ShiftOperator::new(grid, cfg.shift1.0, cfg.shift1.1)?;
            let op2 = ShiftOperator::new(grid, cfg.shift2.0, cfg.shift2.1)?;
            let res = reconstruct_shifted(
                &inputs.system,
                &series.frame(i - 1),
                &series.frame(j - 1),
                &op1,
                &op2,
                &b_est.b_est,
                &cfg.recon,
            )?;
            let n = res.concentration.len();
            return Ok(MethodRun {
                method,
                label: method.name().to_string(),
                frames: vec![i],
                concentrations: DMatrix::from_column_slice(n, 1, res.concentration.as_slice()),
                result: None,
            });
        }
    };
    Ok(MethodRun {
        method,
        label: method.name().to_string(),
        frames: (1..=series.frame_count()).collect(),
        concentrations: result.concentrations.clone(),
        result: Some(result),
    })
}

/// Region with `c_ref` from the config, or from the reference
/// reconstruction: the peak signal-region value of its first frame.
pub fn region_for(cfg: &ExperimentConfig, system: &SystemMatrix, reference: &MethodRun) -> Result<RegionSpec> {
    let grid = system.grid_shape();
    let base = match cfg.signal_corner {
        Some(corner) => RegionSpec::block(grid, corner, (cfg.signal_block, cfg.signal_block), 1.0, system.pixel_volume())?,
        None => RegionSpec::central_block(grid, cfg.signal_block, 1.0, system.pixel_volume())?,
    };
    let c_ref = match cfg.c_ref {
        Some(c) => c,
        None => {
            let level = reference_level(&reference.concentrations.column(0).into_owned(), &base)?;
            if level > 0.0 {
                level
            } else {
                eprintln!("warning: reference reconstruction has no signal; using c_ref = 1");
                1.0
            }
        }
    };
    base.with_c_ref(c_ref)
}

pub fn metrics_rows(run: &MethodRun, region: &RegionSpec, pixel_pitch_mm: f64) -> Result<Vec<FrameMetrics>> {
    run.frames
        .iter()
        .enumerate()
        .map(|(k, &frame)| {
            frame_metrics(frame, &run.label, &run.concentrations.column(k).into_owned(), region, pixel_pitch_mm)
        })
        .collect()
}

/// 16-bit binary PGM of an `nx x ny` image, row `j` holding pixels
/// `(0..nx, j)`, scaled linearly from `[0, window]` to `[0, 65535]`.
pub fn pgm_bytes(image: &[f64], grid_shape: (usize, usize), window: f64) -> Vec<u8> {
    let (nx, ny) = grid_shape;
    let mut out = format!("P5\n{nx} {ny}\n65535\n").into_bytes();
    let window = if window > 0.0 && window.is_finite() { window } else { 1.0 };
    for &v in image.iter().take(nx * ny) {
        let level = (v / window).clamp(0.0, 1.0);
        let level = if level.is_nan() { 0.0 } else { level };
        let q = (level * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

fn write_previews(runs: &[MethodRun], grid: (usize, usize), dir: &Path, outputs: &mut Vec<String>) -> Result<()> {
    let peak = runs[0].concentrations.iter().copied().fold(0.0, f64::max);
    let window = 0.25 * peak;
    let dir = dir.join("previews");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for run in runs {
        for (k, frame) in run.frames.iter().enumerate() {
            let path = dir.join(format!("{}_frame{frame:04}.pgm", run.label));
            let col: Vec<f64> = run.concentrations.column(k).iter().copied().collect();
            write_bytes(&path, &pgm_bytes(&col, grid, window))?;
            outputs.push(relative(&path, dir.parent().unwrap_or(&dir)));
        }
    }
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}

/// Provenance record written next to every run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub c_ref: Option<f64>,
}

impl Manifest {
    fn new(command: &str, cfg: &ExperimentConfig, inputs: BTreeMap<String, String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: cfg.hash(),
            config: cfg.clone(),
            inputs,
            outputs: Vec::new(),
            c_ref: None,
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        io::write_json(self, &dir.join("manifest.json"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

/// Metadata stored with a reconstruction so `metrics` can run on it later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconMeta {
    pub method: Method,
    pub grid_shape: (usize, usize),
    pub pixel_volume: f64,
    pub frames: Vec<usize>,
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(f)
}

fn prepare_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str, outputs: &mut Vec<String>, base: &Path) -> Result<()> {
    write_bytes(path, text.as_bytes())?;
    outputs.push(relative(path, base));
    Ok(())
}

/// Single-method reconstruction: result matrices, metrics CSV, previews and
/// manifest under `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Manifest> {
    let cfg = cfg.clone().resolve()?;
    with_pool(cfg.threads, || {
        let out = &cfg.output;
        prepare_output(out)?;
        let inputs = Inputs::load(&cfg)?;
        let run = run_method(cfg.method, &inputs, &cfg)?;
        let region = region_for(&cfg, &inputs.system, &run)?;
        let mut manifest = Manifest::new(&format!("recon {}", cfg.method.name()), &cfg, inputs.hashes.clone());
        let mut outputs = Vec::new();

        let rdir = out.join(cfg.method.name());
        match &run.result {
            Some(result) => io::write_recon_result(result, &rdir)?,
            None => {
                prepare_output(&rdir)?;
                io::write_real_matrix(&run.concentrations, rdir.join("C.mpic"))?;
            }
        }
        io::write_json(
            &ReconMeta {
                method: cfg.method,
                grid_shape: inputs.system.grid_shape(),
                pixel_volume: inputs.system.pixel_volume(),
                frames: run.frames.clone(),
            },
            &rdir.join("recon.json"),
        )?;
        outputs.push(relative(&rdir, out));

        let rows = metrics_rows(&run, &region, cfg.pixel_pitch_mm)?;
        write_text(&out.join("metrics.csv"), &metrics_csv(&rows), &mut outputs, out)?;
        if cfg.previews {
            write_previews(std::slice::from_ref(&run), inputs.system.grid_shape(), out, &mut outputs)?;
        }
        manifest.c_ref = Some(region.c_ref());
        manifest.outputs = outputs;
        manifest.write(out)?;
        Ok(manifest)
    })
}

/// Per-method temporal statistics of the iron mass.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub label: String,
    pub mass_mean: f64,
    pub mass_std: f64,
    pub eps_bg_mean: f64,
}

fn summarize(label: &str, rows: &[FrameMetrics]) -> MethodSummary {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.iron_mass_ug).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r.iron_mass_ug - mean).powi(2)).sum::<f64>() / n;
    MethodSummary {
        label: label.to_string(),
        mass_mean: mean,
        mass_std: var.sqrt(),
        eps_bg_mean: rows.iter().map(|r| r.eps_bg).sum::<f64>() / n,
    }
}

/// Result of a method comparison.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub rows: Vec<Vec<FrameMetrics>>,
    pub summaries: Vec<MethodSummary>,
    pub manifest: Manifest,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |w| format!("{w:e}"))
}

fn fmt_f(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:e}")
    }
}

/// Runs every method in `cfg.methods` on the same frames with one shared
/// `c_ref` and writes `metrics.csv` (long form), `compare.csv` (one row per
/// frame, methods side by side) and `summary.csv`.
pub fn compare_methods(cfg: &ExperimentConfig) -> Result<Comparison> {
    let cfg = cfg.clone().resolve()?;
    if cfg.methods.len() < 2 {
        return Err(Error::Config("compare needs at least two methods".into()));
    }
    if cfg.methods.contains(&Method::Shifted) {
        return Err(Error::Config("shifted reconstructs a frame pair and cannot be compared per frame".into()));
    }
    with_pool(cfg.threads, || {
        let out = &cfg.output;
        prepare_output(out)?;
        let inputs = Inputs::load(&cfg)?;
        let mut labels: Vec<String> = Vec::new();
        let mut runs = Vec::new();
        for &m in &cfg.methods {
            let mut run = run_method(m, &inputs, &cfg)?;
            let dup = labels.iter().filter(|l| l.split('#').next() == Some(m.name())).count();
            if dup > 0 {
                run.label = format!("{}#{}", m.name(), dup + 1);
            }
            labels.push(run.label.clone());
            runs.push(run);
        }
        let region = region_for(&cfg, &inputs.system, &runs[0])?;
        let rows: Vec<Vec<FrameMetrics>> = runs
            .iter()
            .map(|r| metrics_rows(r, &region, cfg.pixel_pitch_mm))
            .collect::<Result<_>>()?;

        let mut outputs = Vec::new();
        let long: Vec<FrameMetrics> = rows.iter().flatten().cloned().collect();
        write_text(&out.join("metrics.csv"), &metrics_csv(&long), &mut outputs, out)?;

        let mut wide = String::from("frame");
        for l in &labels {
            let _ = write!(wide, ",{l}_iron_mass_ug,{l}_eps_bg,{l}_snr,{l}_fwhm_mm");
        }
        wide.push('\n');
        for k in 0..runs[0].frames.len() {
            let _ = write!(wide, "{}", runs[0].frames[k]);
            for r in &rows {
                let m = &r[k];
                let _ = write!(wide, ",{},{},{},{}", fmt_f(m.iron_mass_ug), fmt_f(m.eps_bg), fmt_f(m.snr), fmt_opt(m.fwhm_mm));
            }
            wide.push('\n');
        }
        write_text(&out.join("compare.csv"), &wide, &mut outputs, out)?;

        let summaries: Vec<MethodSummary> = labels.iter().zip(&rows).map(|(l, r)| summarize(l, r)).collect();
        let mut summary = String::from("method,iron_mass_mean_ug,iron_mass_std_ug,eps_bg_mean\n");
        for s in &summaries {
            let _ = writeln!(summary, "{},{},{},{}", s.label, fmt_f(s.mass_mean), fmt_f(s.mass_std), fmt_f(s.eps_bg_mean));
        }
        write_text(&out.join("summary.csv"), &summary, &mut outputs, out)?;
        if cfg.previews {
            write_previews(&runs, inputs.system.grid_shape(), out, &mut outputs)?;
        }

        let mut manifest = Manifest::new("compare", &cfg, inputs.hashes.clone());
        manifest.c_ref = Some(region.c_ref());
        manifest.outputs = outputs;
        manifest.write(out)?;
        Ok(Comparison {
            labels,
            rows,
            summaries,
            manifest,
        })
    })
}

/// One grid point of a parameter sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub beta: f64,
    pub q: usize,
    pub frame: usize,
    pub metrics: FrameMetrics,
    pub coefficient_norm: f64,
}

pub const SWEEP_HEADER: &str = "beta,q,frame,iron_mass_ug,eps_bg,snr,fwhm_mm,coef_norm";

/// Joint reconstructions of `cfg.sweep_frame` over `betas x ranks`. `c_ref`
/// comes from the static reconstruction of the same frame unless given.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<(Vec<SweepRow>, Manifest)> {
    let mut cfg = cfg.clone().resolve()?;
    let (first, last) = (cfg.first_frame.unwrap_or(1), cfg.last_frame);
    let frame = first + cfg.sweep_frame - 1;
    if cfg.sweep_frame == 0 || last.is_some_and(|l| frame > l) {
        return Err(Error::Config(format!("sweep_frame {} outside the frame range", cfg.sweep_frame)));
    }
    cfg.first_frame = Some(frame);
    cfg.last_frame = Some(frame);
    let cfg = cfg;
    with_pool(cfg.threads, || {
        let out = &cfg.output;
        prepare_output(out)?;
        let inputs = Inputs::load(&cfg)?;
        let reference = run_method(Method::Static, &inputs, &cfg)?;
        let region = region_for(&cfg, &inputs.system, &reference)?;
        let series = inputs.series(&cfg)?;
        let b_est = resolve_background(&cfg.recon.b_est_source, &inputs.acquisition)?;
        let dicts: Vec<Dictionary> = cfg.ranks.iter().map(|&q| inputs.dictionary(q)).collect::<Result<_>>()?;
        let grid: Vec<(f64, usize)> = cfg
            .betas
            .iter()
            .flat_map(|&b| (0..cfg.ranks.len()).map(move |k| (b, k)))
            .collect();
        let rows: Vec<SweepRow> = grid
            .par_iter()
            .map(|&(beta, k)| {
                let rc = ReconConfig {
                    beta,
                    dict_rank: cfg.ranks[k],
                    ..cfg.recon.clone()
                };
                let res = reconstruct_joint(&inputs.system, &dicts[k], &series, &b_est, &rc)?;
                let metrics = frame_metrics(cfg.sweep_frame, "joint", &res.concentration(0), &region, cfg.pixel_pitch_mm)?;
                Ok(SweepRow {
                    beta,
                    q: cfg.ranks[k],
                    frame: cfg.sweep_frame,
                    metrics,
                    coefficient_norm: res.coefficients.column(0).norm(),
                })
            })
            .collect::<Result<_>>()?;

        let mut csv = String::from(SWEEP_HEADER);
        csv.push('\n');
        for r in &rows {
            let m = &r.metrics;
            let _ = writeln!(
                csv,
                "{:e},{},{},{},{},{},{},{:e}",
                r.beta,
                r.q,
                r.frame,
                fmt_f(m.iron_mass_ug),
                fmt_f(m.eps_bg),
                fmt_f(m.snr),
                fmt_opt(m.fwhm_mm),
                r.coefficient_norm
            );
        }
        let mut outputs = Vec::new();
        write_text(&out.join("sweep.csv"), &csv, &mut outputs, out)?;
        let mut manifest = Manifest::new("sweep", &cfg, inputs.hashes.clone());
        manifest.c_ref = Some(region.c_ref());
        manifest.outputs = outputs;
        manifest.write(out)?;
        Ok((rows, manifest))
    })
}

/// Metrics for a reconstruction written earlier by `run_experiment`.
pub fn metrics_from_dir(recon_dir: &Path, cfg: &ExperimentConfig) -> Result<Manifest> {
    let cfg = cfg.clone().resolve()?;
    let meta: ReconMeta = io::read_json(&recon_dir.join("recon.json"))?;
    let c_path = recon_dir.join("C.mpic");
    let c = io::read_real_matrix(&c_path)?;
    let run = MethodRun {
        method: meta.method,
        label: meta.method.name().to_string(),
        frames: meta.frames.clone(),
        concentrations: c,
        result: None,
    };
    let grid = meta.grid_shape;
    let base = match cfg.signal_corner {
        Some(corner) => RegionSpec::block(grid, corner, (cfg.signal_block, cfg.signal_block), 1.0, meta.pixel_volume)?,
        None => RegionSpec::central_block(grid, cfg.signal_block, 1.0, meta.pixel_volume)?,
    };
    let c_ref = match cfg.c_ref {
        Some(c) => c,
        None => {
            let level = reference_level(&run.concentrations.column(0).into_owned(), &base)?;
            if level > 0.0 {
                level
            } else {
                1.0
            }
        }
    };
    let region = base.with_c_ref(c_ref)?;
    let out = &cfg.output;
    prepare_output(out)?;
    let rows = metrics_rows(&run, &region, cfg.pixel_pitch_mm)?;
    let mut outputs = Vec::new();
    write_text(&out.join("metrics.csv"), &metrics_csv(&rows), &mut outputs, out)?;
    let mut inputs = BTreeMap::new();
    inputs.insert(c_path.display().to_string(), file_sha256(&c_path)?);
    let mut manifest = Manifest::new("metrics", &cfg, inputs);
    manifest.c_ref = Some(c_ref);
    manifest.outputs = outputs;
    manifest.write(out)?;
    Ok(manifest)
}

/// Writes a simulated experiment: `system.mpic`, `archive.mpic`,
/// `frames.mpic` (whole acquisition) with sidecars, the planted truth, and an
/// `experiment.json` that reconstructs it from those files.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Manifest> {
    let mut cfg = cfg.clone();
    if cfg.simulation.is_none() {
        cfg.simulation = Some(ScenarioParams::default());
    }
    let cfg = cfg.resolve()?;
    let out = &cfg.output;
    prepare_output(out)?;
    let params = cfg.simulation.clone().expect("set above");
    let sc = Scenario::generate(&params)?;
    let mut outputs = Vec::new();
    let files = [
        ("system.mpic", 0),
        ("archive.mpic", 1),
        ("frames.mpic", 2),
        ("truth_C.mpic", 3),
        ("truth_B.mpic", 4),
        ("planted_basis.mpic", 5),
    ];
    for (name, kind) in files {
        let path = out.join(name);
        match kind {
            0 => io::write_system_matrix(&sc.system, &path)?,
            1 => io::write_archive(&sc.archive, &path)?,
            2 => io::write_frame_series(&sc.acquisition, &path)?,
            3 => io::write_real_matrix(&sc.truth.concentrations, &path)?,
            4 => io::write_matrix(&sc.truth.backgrounds, &path)?,
            _ => io::write_matrix(&sc.planted, &path)?,
        }
        outputs.push(name.to_string());
    }
    io::write_json(&params, &out.join("scenario.json"))?;
    outputs.push("scenario.json".into());

    let follow_up = ExperimentConfig {
        simulation: None,
        system: Some(out.join("system.mpic")),
        series: Some(out.join("frames.mpic")),
        archive: Some(out.join("archive.mpic")),
        output: out.join("recon"),
        ..cfg.clone()
    };
    io::write_json(&follow_up, &out.join("experiment.json"))?;
    outputs.push("experiment.json".into());

    let mut manifest = Manifest::new("sim generate", &cfg, BTreeMap::new());
    manifest.outputs = outputs;
    manifest.write(out)?;
    Ok(manifest)
}

/// `dict build`: writes the rank-`recon.dict_rank` dictionary to `cfg.output`.
pub fn dict_build(cfg: &ExperimentConfig) -> Result<Manifest> {
    let cfg = cfg.clone().resolve()?;
    let (archive, hashes) = load_archive(&cfg)?;
    let dict = build_dictionary(&archive, cfg.recon.dict_rank)?;
    io::write_dictionary(&dict, &cfg.output)?;
    let mut manifest = Manifest::new("dict build", &cfg, hashes);
    manifest.outputs = vec!["W.mpic".into(), "singular_values.mpic".into(), "dictionary.json".into()];
    manifest.write(&cfg.output)?;
    Ok(manifest)
}

/// `dict spectrum`: singular spectrum CSV with the suggested elbow.
pub fn dict_spectrum(cfg: &ExperimentConfig) -> Result<Manifest> {
    let cfg = cfg.clone().resolve()?;
    let (archive, hashes) = load_archive(&cfg)?;
    let report = spectrum_report(&archive, cfg.spectrum_threshold);
    let out = &cfg.output;
    prepare_output(out)?;
    let mut outputs = Vec::new();
    write_text(&out.join("spectrum.csv"), &report.to_csv(), &mut outputs, out)?;
    let mut manifest = Manifest::new("dict spectrum", &cfg, hashes);
    manifest.outputs = outputs;
    manifest.write(out)?;
    Ok(manifest)
}

fn load_archive(cfg: &ExperimentConfig) -> Result<(BackgroundArchive, BTreeMap<String, String>)> {
    if let Some(sim) = &cfg.simulation {
        return Ok((Scenario::generate(sim)?.archive, BTreeMap::new()));
    }
    let path = cfg
        .archive
        .as_ref()
        .ok_or_else(|| Error::Config("no background archive given (archive or simulation)".into()))?;
    let mut hashes = BTreeMap::new();
    hashes.insert(path.display().to_string(), file_sha256(path)?);
    Ok((io::read_archive(path)?, hashes))
}

/// Reruns the command recorded in a manifest, writing to `output` if given.
pub fn replay(manifest_path: &Path, output: Option<PathBuf>) -> Result<Manifest> {
    let manifest = Manifest::load(manifest_path)?;
    let mut cfg = manifest.config.clone();
    if let Some(o) = output {
        cfg.output = o;
    }
    match manifest.command.as_str() {
        "compare" => compare_methods(&cfg).map(|c| c.manifest),
        "sweep" => run_sweep(&cfg).map(|(_, m)| m),
        "sim generate" => simulate(&cfg),
        "dict build" => dict_build(&cfg),
        "dict spectrum" => dict_spectrum(&cfg),
        "metrics" => Err(Error::Config("metrics manifests do not record the reconstruction directory".into())),
        cmd => match cmd.strip_prefix("recon ") {
            Some(m) => {
                cfg.method = Method::parse(m)?;
                run_experiment(&cfg)
            }
            None => Err(Error::Config(format!("unknown command '{cmd}' in manifest"))),
        },
    }
}
