//! Frame-by-frame reconstruction pipelines: the joint tracer/background
//! estimator and the static and linearly interpolated subtraction baselines.

use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io;
use crate::model::{
    hstack, BackgroundSource, CMatrix, CVector, Dictionary, FrameDiagnostics, FrameSeries,
    ReconConfig, ReconResult, SystemMatrix,
};
use crate::solver::{FrameSolver, KaczmarzOptions, TikhonovProblem};

/// Reference background subtracted from every frame.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundEstimate {
    pub b_est: CVector,
    pub provenance: BackgroundSource,
}

impl BackgroundEstimate {
    pub fn zero(m: usize) -> Self {
        Self {
            b_est: CVector::zeros(m),
            provenance: BackgroundSource::Zero,
        }
    }

    pub fn from_vector(b_est: CVector, path: PathBuf) -> Self {
        Self {
            b_est,
            provenance: BackgroundSource::File(path),
        }
    }
}

/// `lambda = lambda_rel * trace(S^H S) / N`.
pub fn lambda_from_relative(system: &SystemMatrix, lambda_rel: f64) -> f64 {
    let trace: f64 = system.entries().iter().map(|z| z.norm_sqr()).sum();
    lambda_rel * trace / system.cols() as f64
}

/// Entry-wise mean of the listed one-based frames.
pub fn background_mean(series: &FrameSeries, indices: &[usize]) -> Result<BackgroundEstimate> {
    if indices.is_empty() {
        return Err(Error::IndexOutOfRange("no frames selected for the background mean".into()));
    }
    let l = series.frame_count();
    let mut acc = CVector::zeros(series.frame_len());
    for &i in indices {
        if i < 1 || i > l {
            return Err(Error::IndexOutOfRange(format!("frame {i} outside 1..={l}")));
        }
        acc += series.frames().column(i - 1);
    }
    Ok(BackgroundEstimate {
        b_est: acc.unscale(indices.len() as f64),
        provenance: BackgroundSource::MeanOfFrames(indices.to_vec()),
    })
}

/// Resolves a configured background source against a series.
pub fn resolve_background(source: &BackgroundSource, series: &FrameSeries) -> Result<BackgroundEstimate> {
    match source {
        BackgroundSource::MeanOfFrames(idx) => background_mean(series, idx),
        BackgroundSource::Zero => Ok(BackgroundEstimate::zero(series.frame_len())),
        BackgroundSource::File(path) => {
            let m = io::read_matrix(path)?;
            if m.ncols() != 1 || m.nrows() != series.frame_len() {
                return Err(Error::DimensionMismatch(format!(
                    "background file {} is {}x{}, expected {}x1",
                    path.display(),
                    m.nrows(),
                    m.ncols(),
                    series.frame_len()
                )));
            }
            Ok(BackgroundEstimate::from_vector(m.column(0).into_owned(), path.clone()))
        }
    }
}

/// `((L - l) u_pre + (l - 1) u_post) / (L - 1)` for one-based `l`.
pub fn interp_background(u_pre: &CVector, u_post: &CVector, l: usize, frames: usize) -> Result<CVector> {
    if frames < 2 {
        return Err(Error::DegenerateSeries);
    }
    if l < 1 || l > frames {
        return Err(Error::IndexOutOfRange(format!("frame {l} outside 1..={frames}")));
    }
    if u_pre.len() != u_post.len() {
        return Err(Error::DimensionMismatch("u_pre and u_post differ in length".into()));
    }
    if l == 1 {
        return Ok(u_pre.clone());
    }
    if l == frames {
        return Ok(u_post.clone());
    }
    // Written as an offset from u_pre so equal endpoints reproduce it exactly.
    let t = (l - 1) as f64 / (frames - 1) as f64;
    Ok(u_pre + (u_post - u_pre) * Complex64::new(t, 0.0))
}

fn check_series(system: &SystemMatrix, series: &FrameSeries, b_len: usize) -> Result<()> {
    system
        .freq_selection()
        .ensure_compatible(series.freq_selection(), "system matrix vs frames")?;
    if series.frame_len() != system.rows() {
        return Err(Error::DimensionMismatch(format!(
            "frames have {} rows, system matrix {}",
            series.frame_len(),
            system.rows()
        )));
    }
    if b_len != system.rows() {
        return Err(Error::DimensionMismatch(format!(
            "background estimate has length {b_len}, expected {}",
            system.rows()
        )));
    }
    Ok(())
}

struct FrameSolution {
    y: CVector,
    diagnostics: FrameDiagnostics,
}

/// Solves `argmin ||A y - w_l||^2 + ||D y||^2` for every data vector; frames
/// run in parallel on the current rayon pool and come back in order.
fn solve_frames(
    base: &TikhonovProblem,
    data: Vec<CVector>,
    config: &ReconConfig,
    n_block: usize,
) -> Result<Vec<FrameSolution>> {
    let opts = KaczmarzOptions {
        positive_block: config.enforce_real_positive.then_some(n_block),
        ..KaczmarzOptions::new(config.kaczmarz_iterations)
    };
    let solver = FrameSolver::new(base, config.solver, opts)?;
    data.into_par_iter()
        .map(|w| {
            let report = solver.solve(w)?;
            Ok(FrameSolution {
                diagnostics: FrameDiagnostics {
                    residual_norm: report.residual_norm,
                    objective: report.objective,
                    sweeps: report.sweeps,
                    normal_defect: report.normal_defect,
                },
                y: report.solution,
            })
        })
        .collect()
}

fn real_part(c: &CMatrix) -> DMatrix<f64> {
    c.map(|z| z.re)
}

/// Baseline: subtracts `b_est` from every frame and solves
/// `argmin ||S c - u_l + b_est||^2 + lambda ||c||^2`.
pub fn reconstruct_static(
    system: &SystemMatrix,
    series: &FrameSeries,
    b_est: &BackgroundEstimate,
    config: &ReconConfig,
) -> Result<ReconResult> {
    let m = series.frame_len();
    let backgrounds = CMatrix::from_fn(m, series.frame_count(), |i, _| b_est.b_est[i]);
    reconstruct_subtracted(system, series, backgrounds, config)
}

/// Baseline: subtracts the convex combination of `u_pre` and `u_post`
/// matching each frame's position in the series.
pub fn reconstruct_interp(
    system: &SystemMatrix,
    series: &FrameSeries,
    u_pre: &CVector,
    u_post: &CVector,
    config: &ReconConfig,
) -> Result<ReconResult> {
    let frames = series.frame_count();
    let mut backgrounds = CMatrix::zeros(series.frame_len(), frames);
    for l in 1..=frames {
        backgrounds.set_column(l - 1, &interp_background(u_pre, u_post, l, frames)?);
    }
    reconstruct_subtracted(system, series, backgrounds, config)
}

fn reconstruct_subtracted(
    system: &SystemMatrix,
    series: &FrameSeries,
    backgrounds: CMatrix,
    config: &ReconConfig,
) -> Result<ReconResult> {
    config.validate()?;
    check_series(system, series, backgrounds.nrows())?;
    let n = system.cols();
    let lambda = lambda_from_relative(system, config.lambda_rel);
    let base = TikhonovProblem::new(
        system.entries().clone(),
        CVector::zeros(system.rows()),
        regularization_weights(n, lambda, 0, config.beta),
    )?;
    let data = (0..series.frame_count())
        .map(|l| series.frames().column(l) - backgrounds.column(l))
        .collect();
    let solutions = solve_frames(&base, data, config, n)?;

    let frames = series.frame_count();
    let mut raw = CMatrix::zeros(n, frames);
    let mut diagnostics = Vec::with_capacity(frames);
    for (l, sol) in solutions.into_iter().enumerate() {
        raw.set_column(l, &sol.y);
        diagnostics.push(sol.diagnostics);
    }
    Ok(ReconResult {
        concentrations: real_part(&raw),
        raw_concentrations: raw,
        coefficients: CMatrix::zeros(0, frames),
        absolute_backgrounds: backgrounds.clone(),
        backgrounds,
        diagnostics,
    })
}

/// `D` weights: `sqrt(lambda)` on `n` pixels and `sqrt(beta)` on `q`
/// coefficients. A zero `lambda` is floored at the smallest positive normal
/// double so that `D` stays invertible.
fn regularization_weights(n: usize, lambda: f64, q: usize, beta: f64) -> Vec<f64> {
    TikhonovProblem::block_weights(n, lambda.max(f64::MIN_POSITIVE), q, beta)
}

/// Joint estimation of concentration and dictionary coefficients.
///
/// Per frame: `w_l = u_l - b_est`, `y_l = argmin ||(S W) y - w_l||^2 +
/// ||D y||^2` with `D = diag(sqrt(lambda) I_N, sqrt(beta) I_Q)`, then
/// `c_l = y_l[..N]`, `n_l = y_l[N..]` and drift `b_l = W n_l`.
pub fn reconstruct_joint(
    system: &SystemMatrix,
    dictionary: &Dictionary,
    series: &FrameSeries,
    b_est: &BackgroundEstimate,
    config: &ReconConfig,
) -> Result<ReconResult> {
    config.validate()?;
    dictionary
        .freq_selection()
        .ensure_compatible(system.freq_selection(), "dictionary vs system matrix")?;
    check_series(system, series, b_est.b_est.len())?;
    let w_mat = dictionary.basis();
    let n = system.cols();
    let q = w_mat.ncols();
    let lambda = lambda_from_relative(system, config.lambda_rel);
    let a = hstack(system.entries(), w_mat)?;
    let base = TikhonovProblem::new(
        a,
        CVector::zeros(system.rows()),
        regularization_weights(n, lambda, q, config.beta),
    )?;
    let data = (0..series.frame_count())
        .map(|l| series.frames().column(l) - &b_est.b_est)
        .collect();
    let solutions = solve_frames(&base, data, config, n)?;

    let frames = series.frame_count();
    let m = system.rows();
    let mut raw = CMatrix::zeros(n, frames);
    let mut coefficients = CMatrix::zeros(q, frames);
    let mut backgrounds = CMatrix::zeros(m, frames);
    let mut absolute = CMatrix::zeros(m, frames);
    let mut diagnostics = Vec::with_capacity(frames);
    for (l, sol) in solutions.into_iter().enumerate() {
        let c = sol.y.rows(0, n);
        let coef = sol.y.rows(n, q).into_owned();
        let drift = w_mat * &coef;
        raw.set_column(l, &c);
        absolute.set_column(l, &(&drift + &b_est.b_est));
        backgrounds.set_column(l, &drift);
        coefficients.set_column(l, &coef);
        diagnostics.push(sol.diagnostics);
    }
    Ok(ReconResult {
        concentrations: real_part(&raw),
        raw_concentrations: raw,
        coefficients,
        backgrounds,
        absolute_backgrounds: absolute,
        diagnostics,
    })
}

/// Joint objective `||S c - u + W n + b_est||^2 + lambda ||c||^2 + beta ||W n||^2`
/// before the orthonormality of `W` is used to replace `||W n||` by `||n||`.
#[allow(clippy::too_many_arguments)]
pub fn joint_objective_unreduced(
    s: &CMatrix,
    w: &CMatrix,
    u: &CVector,
    b_est: &CVector,
    c: &CVector,
    n: &CVector,
    lambda: f64,
    beta: f64,
) -> f64 {
    let wn = w * n;
    (s * c - u + &wn + b_est).norm_squared() + lambda * c.norm_squared() + beta * wn.norm_squared()
}

/// Same objective with the penalty written on the coefficients, `beta ||n||^2`.
#[allow(clippy::too_many_arguments)]
pub fn joint_objective_reduced(
    s: &CMatrix,
    w: &CMatrix,
    u: &CVector,
    b_est: &CVector,
    c: &CVector,
    n: &CVector,
    lambda: f64,
    beta: f64,
) -> f64 {
    (s * c - u + w * n + b_est).norm_squared() + lambda * c.norm_squared() + beta * n.norm_squared()
}
