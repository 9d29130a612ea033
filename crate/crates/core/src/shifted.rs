//! Two-frame estimator with a field-of-view shift between the frames.
//!
//! Both frames share one concentration `c` and one background offset `b`,
//! while the concentration is seen through a different integer pixel shift
//! in each frame. The unknowns `(c; b)` are found from the stacked problem
//! `A = [[S1, I], [S2, I]]`, `y = (u1 - b_est; u2 - b_est)`,
//! `D = diag(sqrt(lambda) I_N, sqrt(beta) I_M)` with the same solver used by
//! the joint pipeline.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CMatrix, CVector, FrameDiagnostics, ReconConfig, SystemMatrix};
use crate::recon::lambda_from_relative;
use crate::solver::{solve, KaczmarzOptions, TikhonovProblem};

/// Integer pixel shift on an `nx x ny` grid with zero padding.
/// Pixel `(i, j)` has linear index `i + nx * j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftOperator {
    grid_shape: (usize, usize),
    shift: (i64, i64),
}

impl ShiftOperator {
    pub fn new(grid_shape: (usize, usize), dx: i64, dy: i64) -> Result<Self> {
        let (nx, ny) = grid_shape;
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument("grid dimensions must be positive".into()));
        }
        if dx.unsigned_abs() >= nx as u64 || dy.unsigned_abs() >= ny as u64 {
            return Err(Error::InvalidArgument(format!(
                "shift ({dx}, {dy}) too large for a {nx}x{ny} grid"
            )));
        }
        Ok(Self {
            grid_shape,
            shift: (dx, dy),
        })
    }

    pub fn identity(grid_shape: (usize, usize)) -> Result<Self> {
        Self::new(grid_shape, 0, 0)
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        self.grid_shape
    }

    pub fn shift(&self) -> (i64, i64) {
        self.shift
    }

    pub fn pixels(&self) -> usize {
        self.grid_shape.0 * self.grid_shape.1
    }

    /// Linear index of `(i + dx, j + dy)` for pixel `index`, if inside the grid.
    fn forward(&self, index: usize) -> Option<usize> {
        let (nx, ny) = self.grid_shape;
        let i = (index % nx) as i64 + self.shift.0;
        let j = (index / nx) as i64 + self.shift.1;
        (i >= 0 && j >= 0 && i < nx as i64 && j < ny as i64).then(|| i as usize + nx * j as usize)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.pixels() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {len} on a {}x{} grid",
                self.grid_shape.0, self.grid_shape.1
            )));
        }
        Ok(())
    }
}

/// `out(i, j) = c(i - dx, j - dy)` inside the grid, zero elsewhere.
pub fn apply_shift<T>(op: &ShiftOperator, c: &DVector<T>) -> Result<DVector<T>>
where
    T: nalgebra::Scalar + num_traits::Zero,
{
    op.check_len(c.len())?;
    let mut out = DVector::from_element(c.len(), T::zero());
    for (src, value) in c.iter().enumerate() {
        if let Some(dst) = op.forward(src) {
            out[dst] = value.clone();
        }
    }
    Ok(out)
}

/// `S^q` with `S^q c = S apply_shift(c)`: column `n` of the result is the
/// column of `S` that pixel `n` lands on, or zero when it leaves the grid.
pub fn shifted_system(s: &CMatrix, op: &ShiftOperator) -> Result<CMatrix> {
    op.check_len(s.ncols())?;
    let mut out = CMatrix::zeros(s.nrows(), s.ncols());
    for n in 0..s.ncols() {
        if let Some(src) = op.forward(n) {
            out.set_column(n, &s.column(src));
        }
    }
    Ok(out)
}

/// Result of a shifted two-frame reconstruction.
#[derive(Clone, Debug)]
pub struct ShiftedResult {
    /// Complex concentration as returned by the solver, length `N`.
    pub raw_concentration: CVector,
    /// Real part of `raw_concentration`.
    pub concentration: DVector<f64>,
    /// Background offset `b` relative to `b_est`, length `M`.
    pub background: CVector,
    /// `b_est + b`.
    pub absolute_background: CVector,
    pub diagnostics: FrameDiagnostics,
}

/// Builds the stacked Tikhonov problem for one pair of frames.
#[allow(clippy::too_many_arguments)]
pub fn shifted_problem(
    system: &SystemMatrix,
    u1: &CVector,
    u2: &CVector,
    op1: &ShiftOperator,
    op2: &ShiftOperator,
    b_est: &CVector,
    lambda: f64,
    beta: f64,
) -> Result<TikhonovProblem> {
    let m = system.rows();
    let n = system.cols();
    for op in [op1, op2] {
        if op.grid_shape() != system.grid_shape() {
            return Err(Error::DimensionMismatch(format!(
                "shift grid {:?} differs from system grid {:?}",
                op.grid_shape(),
                system.grid_shape()
            )));
        }
    }
    for (name, v) in [("u1", u1), ("u2", u2), ("b_est", b_est)] {
        if v.len() != m {
            return Err(Error::DimensionMismatch(format!("{name} has length {}, expected {m}", v.len())));
        }
    }
    let s1 = shifted_system(system.entries(), op1)?;
    let s2 = shifted_system(system.entries(), op2)?;
    let one = Complex64::new(1.0, 0.0);
    let mut a = CMatrix::zeros(2 * m, n + m);
    a.view_mut((0, 0), (m, n)).copy_from(&s1);
    a.view_mut((m, 0), (m, n)).copy_from(&s2);
    for i in 0..m {
        a[(i, n + i)] = one;
        a[(m + i, n + i)] = one;
    }
    let mut y = CVector::zeros(2 * m);
    y.rows_mut(0, m).copy_from(&(u1 - b_est));
    y.rows_mut(m, m).copy_from(&(u2 - b_est));
    let weights = TikhonovProblem::block_weights(n, lambda.max(f64::MIN_POSITIVE), m, beta);
    TikhonovProblem::new(a, y, weights)
}

/// Solves the stacked problem for one pair of frames with `lambda` derived
/// from `config.lambda_rel` and the solver selected in `config`.
pub fn reconstruct_shifted(
    system: &SystemMatrix,
    u1: &CVector,
    u2: &CVector,
    op1: &ShiftOperator,
    op2: &ShiftOperator,
    b_est: &CVector,
    config: &ReconConfig,
) -> Result<ShiftedResult> {
    config.validate()?;
    let n = system.cols();
    let m = system.rows();
    let lambda = lambda_from_relative(system, config.lambda_rel);
    let problem = shifted_problem(system, u1, u2, op1, op2, b_est, lambda, config.beta)?;
    let opts = KaczmarzOptions {
        positive_block: config.enforce_real_positive.then_some(n),
        ..KaczmarzOptions::new(config.kaczmarz_iterations)
    };
    let report = solve(&problem, config.solver, &opts)?;
    let raw = report.solution.rows(0, n).into_owned();
    let background = report.solution.rows(n, m).into_owned();
    Ok(ShiftedResult {
        concentration: raw.map(|z| z.re),
        raw_concentration: raw,
        absolute_background: &background + b_est,
        background,
        diagnostics: FrameDiagnostics {
            residual_norm: report.residual_norm,
            objective: report.objective,
            sweeps: report.sweeps,
            normal_defect: report.normal_defect,
        },
    })
}
