//! Synthetic stand-ins for scanner data: system matrices, phantoms, background
//! archives and drifting frame series with planted ground truth.
//!
//! Every generator is a pure function of its seed and parameters. Random
//! streams come from `ChaCha8Rng`, so outputs are identical across platforms.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BackgroundArchive, CMatrix, CVector, FrameSeries, FrequencySelection, SystemMatrix};

/// Seeded generator used by every simulation routine.
pub fn sim_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Circular complex Gaussian sample with `E|z|^2 = sigma^2`.
pub fn complex_gaussian<R: Rng>(rng: &mut R, sigma: f64) -> Complex64 {
    let s = sigma / 2f64.sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Matrix of i.i.d. circular complex Gaussians, filled column by column.
pub fn random_complex_matrix(seed: u64, rows: usize, cols: usize, sigma: f64) -> CMatrix {
    let mut rng = sim_rng(seed);
    let mut m = CMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_gaussian(&mut rng, sigma);
        }
    }
    m
}

/// Modified Gram-Schmidt applied twice; columns must be linearly independent.
pub fn orthonormalize_columns(m: &CMatrix) -> Result<CMatrix> {
    let mut q = m.clone();
    for j in 0..q.ncols() {
        for _ in 0..2 {
            for k in 0..j {
                let proj = q.column(k).dotc(&q.column(j));
                let qk = q.column(k).into_owned();
                q.column_mut(j).axpy(-proj, &qk, Complex64::new(1.0, 0.0));
            }
        }
        let norm = q.column(j).norm();
        if norm <= 1e-12 * m.column(j).norm().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidArgument(format!(
                "column {j} is linearly dependent on earlier columns"
            )));
        }
        q.column_mut(j).unscale_mut(norm);
    }
    Ok(q)
}

/// Spatial frequencies of an `nx x ny` grid ordered by radius, then by
/// `(ky, kx)`. Entries are signed DFT indices.
fn frequency_ladder(nx: usize, ny: usize) -> Vec<(i64, i64)> {
    let signed = |k: usize, n: usize| -> i64 {
        let k = k as i64;
        let n = n as i64;
        if k > n / 2 {
            k - n
        } else {
            k
        }
    };
    let mut ks: Vec<(i64, i64)> = (0..ny)
        .flat_map(|ky| (0..nx).map(move |kx| (signed(kx, nx), signed(ky, ny))))
        .collect();
    ks.sort_by(|a, b| {
        let ra = (a.0 as f64 / nx as f64).powi(2) + (a.1 as f64 / ny as f64).powi(2);
        let rb = (b.0 as f64 / nx as f64).powi(2) + (b.1 as f64 / ny as f64).powi(2);
        ra.total_cmp(&rb).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0))
    });
    ks
}

/// Synthetic system matrix with harmonic rows.
///
/// Row `r` is the plane wave of the `r`-th lowest spatial frequency of the
/// grid (cycling when `M > N`) with a seeded random phase, attenuated by the
/// Fourier response of a Gaussian blur of width `smoothness` pixels and
/// normalized so that `smoothness = 0` gives unit-norm rows. Larger
/// smoothness damps high frequencies and raises the condition number.
pub fn gen_system_matrix(
    seed: u64,
    m: usize,
    grid_shape: (usize, usize),
    smoothness: f64,
    pixel_volume: f64,
) -> Result<SystemMatrix> {
    let (nx, ny) = grid_shape;
    let n = nx * ny;
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("system matrix needs M, N >= 1".into()));
    }
    if !(smoothness.is_finite() && smoothness >= 0.0) {
        return Err(Error::InvalidArgument("smoothness must be >= 0".into()));
    }
    let ladder = frequency_ladder(nx, ny);
    let mut rng = sim_rng(seed);
    let scale = 1.0 / (n as f64).sqrt();
    let mut s = CMatrix::zeros(m, n);
    for r in 0..m {
        let (kx, ky) = ladder[r % n];
        let phase: f64 = rng.random::<f64>() * 2.0 * PI;
        let fx = kx as f64 / nx as f64;
        let fy = ky as f64 / ny as f64;
        let gain = (-2.0 * PI * PI * smoothness * smoothness * (fx * fx + fy * fy)).exp();
        for j in 0..ny {
            for i in 0..nx {
                let arg = 2.0 * PI * (fx * i as f64 + fy * j as f64) + phase;
                s[(r, i + nx * j)] = Complex64::from_polar(gain * scale, arg);
            }
        }
    }
    SystemMatrix::new(s, grid_shape, pixel_volume, FrequencySelection::all_rows(m))
}

/// Archive `X = G C + E` with a planted orthonormal basis `G`.
///
/// When `planted` is `None` a random orthonormal `M x r` basis is drawn.
/// Coefficients are unit circular Gaussians; `E` has per-entry std
/// `noise_sigma`. Returns the archive and the planted basis.
pub fn gen_background_archive(
    seed: u64,
    m: usize,
    theta: usize,
    rank: usize,
    noise_sigma: f64,
    planted: Option<&CMatrix>,
) -> Result<(BackgroundArchive, CMatrix)> {
    if rank > m.min(theta) {
        return Err(Error::InvalidArgument(format!(
            "planted rank {rank} exceeds min(M, Theta) = {}",
            m.min(theta)
        )));
    }
    let g = match planted {
        Some(g) => {
            if g.shape() != (m, rank) {
                return Err(Error::DimensionMismatch(format!(
                    "planted basis is {}x{}, expected {m}x{rank}",
                    g.nrows(),
                    g.ncols()
                )));
            }
            g.clone()
        }
        None => orthonormalize_columns(&random_complex_matrix(seed ^ 0x6261736973, m, rank, 1.0))?,
    };
    let coeffs = random_complex_matrix(seed ^ 0x636f6566, rank, theta, 1.0);
    let mut x = &g * coeffs;
    if noise_sigma > 0.0 {
        x += random_complex_matrix(seed ^ 0x6e6f697365, m, theta, noise_sigma);
    }
    Ok((BackgroundArchive::new(x, FrequencySelection::all_rows(m))?, g))
}

/// Per-frame amplitude of one drift fingerprint. Curves are evaluated at the
/// normalized time `t = l / L` for one-based frame `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AmplitudeCurve {
    Linear { offset: f64, slope: f64 },
    /// `amplitude * (1 - exp(-rate * t))`.
    ExponentialSettling { amplitude: f64, rate: f64 },
    Sinusoidal { amplitude: f64, periods: f64, phase: f64 },
    /// Linear interpolation between `(t, a)` knots, constant outside.
    Piecewise { knots: Vec<(f64, f64)> },
    Sum { parts: Vec<AmplitudeCurve> },
}

impl AmplitudeCurve {
    pub fn eval(&self, l: usize, frames: usize) -> f64 {
        let t = l as f64 / frames as f64;
        match self {
            AmplitudeCurve::Linear { offset, slope } => offset + slope * t,
            AmplitudeCurve::ExponentialSettling { amplitude, rate } => amplitude * (1.0 - (-rate * t).exp()),
            AmplitudeCurve::Sinusoidal { amplitude, periods, phase } => {
                amplitude * (2.0 * PI * periods * t + phase).sin()
            }
            AmplitudeCurve::Piecewise { knots } => piecewise(knots, t),
            AmplitudeCurve::Sum { parts } => parts.iter().map(|p| p.eval(l, frames)).sum(),
        }
    }
}

fn piecewise(knots: &[(f64, f64)], t: f64) -> f64 {
    match knots {
        [] => 0.0,
        [(_, a)] => *a,
        _ => {
            if t <= knots[0].0 {
                return knots[0].1;
            }
            for w in knots.windows(2) {
                let ((t0, a0), (t1, a1)) = (w[0], w[1]);
                if t <= t1 {
                    let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                    return a0 + f * (a1 - a0);
                }
            }
            knots[knots.len() - 1].1
        }
    }
}

/// Background model `b_l = b_static + sum_k a_k(l) g_k`, plus measurement noise.
#[derive(Clone, Debug)]
pub struct DriftModel {
    pub b_static: CVector,
    /// Orthonormal `M x r` fingerprints.
    pub fingerprints: CMatrix,
    pub curves: Vec<AmplitudeCurve>,
    /// Per-entry std of the circular complex measurement noise.
    pub noise_sigma: f64,
}

impl DriftModel {
    pub fn new(b_static: CVector, fingerprints: CMatrix, curves: Vec<AmplitudeCurve>, noise_sigma: f64) -> Result<Self> {
        if fingerprints.nrows() != b_static.len() {
            return Err(Error::DimensionMismatch("fingerprints and b_static differ in length".into()));
        }
        if fingerprints.ncols() != curves.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} fingerprints but {} amplitude curves",
                fingerprints.ncols(),
                curves.len()
            )));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("noise_sigma must be >= 0".into()));
        }
        Ok(Self {
            b_static,
            fingerprints,
            curves,
            noise_sigma,
        })
    }

    /// Constant background `b_static`, no drift and no noise.
    pub fn still(b_static: CVector) -> Self {
        let m = b_static.len();
        Self {
            b_static,
            fingerprints: CMatrix::zeros(m, 0),
            curves: Vec::new(),
            noise_sigma: 0.0,
        }
    }

    /// Noise-free background of one-based frame `l` out of `frames`.
    pub fn background(&self, l: usize, frames: usize) -> CVector {
        let mut b = self.b_static.clone();
        for (k, curve) in self.curves.iter().enumerate() {
            let a = curve.eval(l, frames);
            b.axpy(Complex64::new(a, 0.0), &self.fingerprints.column(k), Complex64::new(1.0, 0.0));
        }
        b
    }
}

/// Tracer concentration over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PhantomSpec {
    Empty,
    /// Square dot of `edge x edge` pixels whose top-left pixel is
    /// `center - edge / 2`, present on one-based frames `first..=last`.
    StaticDot {
        center: (usize, usize),
        edge: usize,
        mass_ug: f64,
        first: usize,
        last: usize,
    },
    /// Gamma-variate bolus `peak * ((t - t0)/tau)^alpha * exp(alpha - (t - t0)/tau) / alpha^alpha`
    /// (normalized to reach `peak_concentration` at `t = t0 + alpha * tau`), uniform on two
    /// vertical tubes. `t` is in seconds.
    DynamicBolus {
        tube_columns: (usize, usize),
        tube_rows: (usize, usize),
        tube_width: usize,
        peak_concentration: f64,
        t0: f64,
        alpha: f64,
        tau: f64,
    },
}

impl PhantomSpec {
    /// Dot of `mass_ug` present on every frame.
    pub fn static_dot(center: (usize, usize), edge: usize, mass_ug: f64) -> Self {
        PhantomSpec::StaticDot {
            center,
            edge,
            mass_ug,
            first: 1,
            last: usize::MAX,
        }
    }

    pub fn validate(&self, grid: (usize, usize)) -> Result<()> {
        let (nx, ny) = grid;
        match self {
            PhantomSpec::Empty => Ok(()),
            PhantomSpec::StaticDot { center, edge, mass_ug, .. } => {
                let lo = (center.0 as i64 - (*edge / 2) as i64, center.1 as i64 - (*edge / 2) as i64);
                if *edge == 0
                    || lo.0 < 0
                    || lo.1 < 0
                    || lo.0 as usize + edge > nx
                    || lo.1 as usize + edge > ny
                {
                    return Err(Error::InvalidArgument("dot does not fit inside the grid".into()));
                }
                if !(mass_ug.is_finite() && *mass_ug >= 0.0) {
                    return Err(Error::InvalidArgument("dot mass must be >= 0".into()));
                }
                Ok(())
            }
            PhantomSpec::DynamicBolus {
                tube_columns,
                tube_rows,
                tube_width,
                peak_concentration,
                alpha,
                tau,
                ..
            } => {
                let fits = tube_columns.0 + tube_width <= nx
                    && tube_columns.1 + tube_width <= nx
                    && tube_rows.0 <= tube_rows.1
                    && tube_rows.1 < ny
                    && *tube_width > 0;
                if !fits {
                    return Err(Error::InvalidArgument("tube mask does not fit inside the grid".into()));
                }
                if !(*peak_concentration >= 0.0 && *alpha > 0.0 && *tau > 0.0) {
                    return Err(Error::InvalidArgument("bolus parameters must be positive".into()));
                }
                Ok(())
            }
        }
    }

    /// Linear pixel indices covered by the phantom.
    pub fn mask(&self, grid: (usize, usize)) -> Vec<usize> {
        let (nx, _) = grid;
        let mut idx = match self {
            PhantomSpec::Empty => Vec::new(),
            PhantomSpec::StaticDot { center, edge, .. } => {
                let x0 = center.0 - edge / 2;
                let y0 = center.1 - edge / 2;
                (y0..y0 + edge)
                    .flat_map(|j| (x0..x0 + edge).map(move |i| i + nx * j))
                    .collect()
            }
            PhantomSpec::DynamicBolus {
                tube_columns,
                tube_rows,
                tube_width,
                ..
            } => {
                let mut v = Vec::new();
                for j in tube_rows.0..=tube_rows.1 {
                    for &c0 in &[tube_columns.0, tube_columns.1] {
                        for i in c0..c0 + tube_width {
                            v.push(i + nx * j);
                        }
                    }
                }
                v
            }
        };
        idx.sort_unstable();
        idx.dedup();
        idx
    }

    /// Per-pixel concentration on the mask at one-based frame `l`.
    fn level(&self, l: usize, frame_period: f64, pixel_volume: f64) -> f64 {
        match self {
            PhantomSpec::Empty => 0.0,
            PhantomSpec::StaticDot {
                edge,
                mass_ug,
                first,
                last,
                ..
            } => {
                if l >= *first && l <= *last {
                    mass_ug / (pixel_volume * (edge * edge) as f64)
                } else {
                    0.0
                }
            }
            PhantomSpec::DynamicBolus {
                peak_concentration,
                t0,
                alpha,
                tau,
                ..
            } => {
                let t = (l - 1) as f64 * frame_period;
                gamma_variate(t, *t0, *alpha, *tau) * peak_concentration
            }
        }
    }

    /// Ground-truth concentration image at one-based frame `l`.
    pub fn concentration(&self, grid: (usize, usize), l: usize, frame_period: f64, pixel_volume: f64) -> Vec<f64> {
        let mut c = vec![0.0; grid.0 * grid.1];
        let level = self.level(l, frame_period, pixel_volume);
        if level != 0.0 {
            for i in self.mask(grid) {
                c[i] = level;
            }
        }
        c
    }
}

/// Gamma variate normalized to peak value 1 at `t0 + alpha * tau`.
pub fn gamma_variate(t: f64, t0: f64, alpha: f64, tau: f64) -> f64 {
    if t <= t0 {
        return 0.0;
    }
    let x = (t - t0) / (alpha * tau);
    (x.powf(alpha) * (alpha * (1.0 - x)).exp()).max(0.0)
}

/// Total iron mass (µg) of the phantom at one-based frame `l`.
///
/// For a static dot this is the mass field itself (or zero outside its frame
/// window); for a bolus it is `ΔV` times the summed concentration on the mask.
pub fn iron_mass_of_phantom(spec: &PhantomSpec, grid: (usize, usize), l: usize, frame_period: f64, pixel_volume: f64) -> f64 {
    match spec {
        PhantomSpec::Empty => 0.0,
        PhantomSpec::StaticDot { mass_ug, first, last, .. } => {
            if l >= *first && l <= *last {
                *mass_ug
            } else {
                0.0
            }
        }
        PhantomSpec::DynamicBolus { .. } => {
            let level = spec.level(l, frame_period, pixel_volume);
            pixel_volume * level * spec.mask(grid).len() as f64
        }
    }
}

/// Planted truth returned with a simulated series.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// `N x L` real concentrations.
    pub concentrations: DMatrix<f64>,
    /// `M x L` noise-free backgrounds `b_static + drift`.
    pub backgrounds: CMatrix,
    /// `M x L` noise draw added to the frames.
    pub noise: CMatrix,
}

/// Noise stream of a frame series: column `l` is drawn after column `l - 1`.
pub fn frame_noise(seed: u64, m: usize, frames: usize, sigma: f64) -> CMatrix {
    if sigma == 0.0 {
        return CMatrix::zeros(m, frames);
    }
    random_complex_matrix(seed ^ 0x6672616d65, m, frames, sigma)
}

/// `u_l = S c*_l + b_static + sum_k a_k(l) g_k + noise_l` for `l = 1..=frames`.
pub fn gen_frame_series(
    system: &SystemMatrix,
    phantom: &PhantomSpec,
    drift: &DriftModel,
    frames: usize,
    frame_period: f64,
    seed: u64,
) -> Result<(FrameSeries, GroundTruth)> {
    let m = system.rows();
    let n = system.cols();
    if drift.b_static.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "drift model has length {}, system matrix has {m} rows",
            drift.b_static.len()
        )));
    }
    if frames == 0 {
        return Err(Error::InvalidArgument("need at least one frame".into()));
    }
    phantom.validate(system.grid_shape())?;

    let mut concentrations = DMatrix::<f64>::zeros(n, frames);
    let mut backgrounds = CMatrix::zeros(m, frames);
    let noise = frame_noise(seed, m, frames, drift.noise_sigma);
    let mut u = CMatrix::zeros(m, frames);
    for l in 1..=frames {
        let c = phantom.concentration(system.grid_shape(), l, frame_period, system.pixel_volume());
        let c_vec = CVector::from_iterator(n, c.iter().map(|&x| Complex64::new(x, 0.0)));
        let b = drift.background(l, frames);
        let ideal = system.entries() * c_vec;
        u.set_column(l - 1, &(ideal + &b + noise.column(l - 1)));
        concentrations.set_column(l - 1, &nalgebra::DVector::from_vec(c));
        backgrounds.set_column(l - 1, &b);
    }
    let series = FrameSeries::new(u, frame_period, system.freq_selection().clone())?;
    Ok((
        series,
        GroundTruth {
            concentrations,
            backgrounds,
            noise,
        },
    ))
}
