//! Complete synthetic drift experiments: system matrix, background archive,
//! an acquisition with empty frames before and after the tracer series, and
//! the planted truth.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BackgroundArchive, CMatrix, CVector, FrameSeries, SystemMatrix};
use crate::simkit::{
    gen_background_archive, gen_frame_series, gen_system_matrix, iron_mass_of_phantom, orthonormalize_columns,
    random_complex_matrix, AmplitudeCurve, DriftModel, GroundTruth, PhantomSpec,
};

/// Time course of the background drift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    /// No drift: the background equals `b_static` throughout.
    None,
    /// Both fingerprints ramp linearly over the acquisition.
    Linear,
    /// Exponential settling on the first fingerprint and a slow sinusoid on
    /// the second.
    Nonlinear,
}

/// Parameters of a synthetic experiment. Magnitudes of drift, static
/// background and noise are given relative to `||S c*||` of the tracer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub seed: u64,
    pub m: usize,
    pub grid_shape: (usize, usize),
    pub smoothness: f64,
    /// Pixel volume; concentrations are µg per unit of this volume.
    pub pixel_volume: f64,
    pub pixel_pitch_mm: f64,
    pub theta: usize,
    pub frames: usize,
    pub pre_frames: usize,
    pub post_frames: usize,
    pub frame_period: f64,
    /// `None` centres the dot on the grid.
    pub dot_center: Option<(usize, usize)>,
    pub dot_edge: usize,
    pub dot_mass_ug: f64,
    pub drift: DriftKind,
    pub drift_scale: f64,
    pub static_scale: f64,
    pub noise_rel: f64,
    /// Archive noise relative to the largest planted singular value.
    pub archive_noise_rel: f64,
    /// Signal mask edge for the metrics region.
    pub signal_block: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            seed: 1,
            m: 96,
            grid_shape: (16, 16),
            smoothness: 1.0,
            pixel_volume: 6.7e-4,
            pixel_pitch_mm: 2.0,
            theta: 64,
            frames: 48,
            pre_frames: 5,
            post_frames: 5,
            frame_period: 0.5,
            dot_center: None,
            dot_edge: 2,
            dot_mass_ug: 31.0,
            drift: DriftKind::Nonlinear,
            drift_scale: 3.0,
            static_scale: 5.0,
            noise_rel: 0.01,
            archive_noise_rel: 1e-4,
            signal_block: 6,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("scenario: {what}")));
        if self.m == 0 || self.grid_shape.0 == 0 || self.grid_shape.1 == 0 {
            return bad("M and grid dimensions must be positive");
        }
        if self.frames == 0 {
            return bad("frames must be >= 1");
        }
        if self.theta < 2 || self.theta > self.m {
            return bad("theta must lie in 2..=M");
        }
        for (name, v) in [
            ("smoothness", self.smoothness),
            ("drift_scale", self.drift_scale),
            ("static_scale", self.static_scale),
            ("noise_rel", self.noise_rel),
            ("archive_noise_rel", self.archive_noise_rel),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("{name} must be finite and >= 0"));
            }
        }
        for (name, v) in [
            ("pixel_volume", self.pixel_volume),
            ("pixel_pitch_mm", self.pixel_pitch_mm),
            ("frame_period", self.frame_period),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be finite and > 0"));
            }
        }
        self.phantom().validate(self.grid_shape)?;
        if self.signal_block == 0 || self.signal_block > self.grid_shape.0.min(self.grid_shape.1) {
            return bad("signal_block must lie in 1..=min(grid dimensions)");
        }
        Ok(())
    }

    pub fn dot_center(&self) -> (usize, usize) {
        self.dot_center.unwrap_or((self.grid_shape.0 / 2, self.grid_shape.1 / 2))
    }

    pub fn acquisition_frames(&self) -> usize {
        self.pre_frames + self.frames + self.post_frames
    }

    pub fn phantom(&self) -> PhantomSpec {
        if self.dot_mass_ug == 0.0 {
            return PhantomSpec::Empty;
        }
        PhantomSpec::StaticDot {
            center: self.dot_center(),
            edge: self.dot_edge,
            mass_ug: self.dot_mass_ug,
            first: self.pre_frames + 1,
            last: self.pre_frames + self.frames,
        }
    }

    fn curves(&self) -> Vec<AmplitudeCurve> {
        let a = self.drift_scale;
        match self.drift {
            DriftKind::None => Vec::new(),
            DriftKind::Linear => vec![
                AmplitudeCurve::Linear { offset: 0.0, slope: a },
                AmplitudeCurve::Linear { offset: 0.0, slope: -0.5 * a },
            ],
            DriftKind::Nonlinear => vec![
                AmplitudeCurve::ExponentialSettling { amplitude: a, rate: 3.0 },
                AmplitudeCurve::Sinusoidal {
                    amplitude: 0.5 * a,
                    periods: 1.0,
                    phase: 0.0,
                },
            ],
        }
    }
}

/// Generated experiment.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub system: SystemMatrix,
    pub archive: BackgroundArchive,
    /// Planted background basis (the drift fingerprints).
    pub planted: CMatrix,
    pub drift: DriftModel,
    /// Every frame of the acquisition: empty pre frames, tracer frames, empty post frames.
    pub acquisition: FrameSeries,
    pub truth: GroundTruth,
}

impl Scenario {
    pub fn generate(params: &ScenarioParams) -> Result<Self> {
        params.validate()?;
        let p = params;
        let system = gen_system_matrix(p.seed, p.m, p.grid_shape, p.smoothness, p.pixel_volume)?;
        let phantom = p.phantom();
        // Magnitudes are tied to the tracer's signal norm; an empty phantom
        // uses the norm a 31 µg dot would have.
        let reference_dot = PhantomSpec::StaticDot {
            center: p.dot_center(),
            edge: p.dot_edge,
            mass_ug: if p.dot_mass_ug > 0.0 { p.dot_mass_ug } else { 31.0 },
            first: 1,
            last: 1,
        };
        let c_dot = reference_dot.concentration(p.grid_shape, 1, p.frame_period, p.pixel_volume);
        let c_dot = CVector::from_iterator(c_dot.len(), c_dot.iter().map(|&x| Complex64::new(x, 0.0)));
        let signal_norm = (system.entries() * c_dot).norm();

        let rank = match p.drift {
            DriftKind::None => 0,
            _ => 2,
        };
        let fingerprints = orthonormalize_columns(&random_complex_matrix(p.seed ^ 0x6472696674, p.m, 2, 1.0))?;
        let b_static = random_complex_matrix(p.seed ^ 0x73746174, p.m, 1, 1.0).column(0).into_owned();
        let b_static = &b_static * Complex64::new(p.static_scale * signal_norm / b_static.norm().max(f64::MIN_POSITIVE), 0.0);
        let noise_sigma = p.noise_rel * signal_norm / (p.m as f64).sqrt();
        let drift = DriftModel::new(
            b_static,
            fingerprints.columns(0, rank).into_owned(),
            p.curves().into_iter().map(|c| scale_curve(c, signal_norm)).collect(),
            noise_sigma,
        )?;

        // Archive spanned by the drift fingerprints; the coefficients are unit
        // Gaussians, so the leading singular value is about sqrt(theta).
        let archive_sigma = p.archive_noise_rel * (p.theta as f64).sqrt();
        let (archive, planted) =
            gen_background_archive(p.seed ^ 0x61726368, p.m, p.theta, 2, archive_sigma, Some(&fingerprints))?;

        let (acquisition, truth) =
            gen_frame_series(&system, &phantom, &drift, p.acquisition_frames(), p.frame_period, p.seed)?;
        Ok(Self {
            params: p.clone(),
            system,
            archive,
            planted,
            drift,
            acquisition,
            truth,
        })
    }

    /// Tracer frames only (one-based acquisition frames `pre+1..=pre+L`).
    pub fn series(&self) -> Result<FrameSeries> {
        let p = &self.params;
        self.acquisition.sub_series(p.pre_frames + 1, p.pre_frames + p.frames)
    }

    /// Mean of the empty frames before the tracer series, or the first
    /// tracer frame when there are none.
    pub fn u_pre(&self) -> CVector {
        let p = &self.params;
        if p.pre_frames == 0 {
            return self.acquisition.frames().column(0).into_owned();
        }
        mean_columns(self.acquisition.frames(), 0, p.pre_frames)
    }

    /// Mean of the empty frames after the tracer series, or the last tracer
    /// frame when there are none.
    pub fn u_post(&self) -> CVector {
        let p = &self.params;
        let total = p.acquisition_frames();
        if p.post_frames == 0 {
            return self.acquisition.frames().column(total - 1).into_owned();
        }
        mean_columns(self.acquisition.frames(), total - p.post_frames, p.post_frames)
    }

    /// Planted concentration of tracer frame `l` (one-based).
    pub fn true_concentration(&self, l: usize) -> nalgebra::DVector<f64> {
        self.truth.concentrations.column(self.params.pre_frames + l - 1).into_owned()
    }

    pub fn true_mass(&self, l: usize) -> f64 {
        let p = &self.params;
        iron_mass_of_phantom(&p.phantom(), p.grid_shape, p.pre_frames + l, p.frame_period, p.pixel_volume)
    }
}

fn mean_columns(m: &CMatrix, first: usize, count: usize) -> CVector {
    let mut acc = CVector::zeros(m.nrows());
    for j in first..first + count {
        acc += m.column(j);
    }
    acc.unscale(count as f64)
}

fn scale_curve(curve: AmplitudeCurve, s: f64) -> AmplitudeCurve {
    match curve {
        AmplitudeCurve::Linear { offset, slope } => AmplitudeCurve::Linear {
            offset: offset * s,
            slope: slope * s,
        },
        AmplitudeCurve::ExponentialSettling { amplitude, rate } => AmplitudeCurve::ExponentialSettling {
            amplitude: amplitude * s,
            rate,
        },
        AmplitudeCurve::Sinusoidal { amplitude, periods, phase } => AmplitudeCurve::Sinusoidal {
            amplitude: amplitude * s,
            periods,
            phase,
        },
        AmplitudeCurve::Piecewise { knots } => AmplitudeCurve::Piecewise {
            knots: knots.into_iter().map(|(t, a)| (t, a * s)).collect(),
        },
        AmplitudeCurve::Sum { parts } => AmplitudeCurve::Sum {
            parts: parts.into_iter().map(|c| scale_curve(c, s)).collect(),
        },
    }
}
