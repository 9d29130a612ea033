//! Tikhonov least squares `argmin ||A y - w||^2 + ||D y||^2` with diagonal
//! positive `D`.
//!
//! The iterative path substitutes `z = D y` and runs cyclic Kaczmarz on the
//! consistent extended system `(A D^-1 | I_M) (z; tau) = w`. Started from
//! zero, the iterate converges to the minimum-norm solution of that system,
//! whose `z` block is the regularized solution and whose `tau` block is the
//! residual `w - A y`. A direct QR solve of the stacked problem serves as
//! the reference.

use nalgebra::linalg::QR;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CMatrix, CVector};

/// One regularized least-squares instance.
#[derive(Clone, Debug)]
pub struct TikhonovProblem {
    a: CMatrix,
    w: CVector,
    d: Vec<f64>,
}

impl TikhonovProblem {
    /// `d` holds the diagonal of `D` and must be strictly positive.
    pub fn new(a: CMatrix, w: CVector, d: Vec<f64>) -> Result<Self> {
        if a.nrows() != w.len() {
            return Err(Error::DimensionMismatch(format!(
                "operator has {} rows, data has {}",
                a.nrows(),
                w.len()
            )));
        }
        if a.ncols() != d.len() {
            return Err(Error::DimensionMismatch(format!(
                "operator has {} columns, weights have {}",
                a.ncols(),
                d.len()
            )));
        }
        if let Some(k) = d.iter().position(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "regularization weight {k} is {} but must be finite and > 0",
                d[k]
            )));
        }
        Ok(Self { a, w, d })
    }

    /// Block weights: `sqrt(lambda)` on the first `n` unknowns, `sqrt(beta)` on the next `q`.
    pub fn block_weights(n: usize, lambda: f64, q: usize, beta: f64) -> Vec<f64> {
        let mut d = vec![lambda.sqrt(); n];
        d.extend(std::iter::repeat_n(beta.sqrt(), q));
        d
    }

    pub fn operator(&self) -> &CMatrix {
        &self.a
    }

    pub fn data(&self) -> &CVector {
        &self.w
    }

    pub fn weights(&self) -> &[f64] {
        &self.d
    }

    /// Same operator and weights with new data.
    pub fn with_data(&self, w: CVector) -> Result<Self> {
        Self::new(self.a.clone(), w, self.d.clone())
    }

    pub fn residual(&self, y: &CVector) -> CVector {
        &self.a * y - &self.w
    }

    pub fn objective(&self, y: &CVector) -> f64 {
        let penalty: f64 = y.iter().zip(&self.d).map(|(v, d)| d * d * v.norm_sqr()).sum();
        self.residual(y).norm_squared() + penalty
    }

    /// `||(A^H A + D^H D) y - A^H w||_2`.
    pub fn normal_defect(&self, y: &CVector) -> f64 {
        let mut g = self.a.adjoint() * self.residual(y);
        for (gk, (yk, dk)) in g.iter_mut().zip(y.iter().zip(&self.d)) {
            *gk += yk * (dk * dk);
        }
        g.norm()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KaczmarzOptions {
    pub sweeps: usize,
    /// Relaxation factor applied to every row update.
    pub relaxation: f64,
    /// When set, the first `n` entries of `y` are projected onto the
    /// nonnegative reals after every full sweep.
    pub positive_block: Option<usize>,
}

impl KaczmarzOptions {
    pub fn new(sweeps: usize) -> Self {
        Self {
            sweeps,
            relaxation: 1.0,
            positive_block: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverReport {
    pub solution: CVector,
    /// Auxiliary block; tends to `w - A y`.
    pub tau: CVector,
    pub sweeps: usize,
    pub residual_norm: f64,
    pub normal_defect: f64,
    pub objective: f64,
}

/// Kaczmarz iterate on the extended system, exposed so callers can drive
/// sweeps one at a time.
#[derive(Clone, Debug)]
pub struct KaczmarzState<'p> {
    problem: &'p TikhonovProblem,
    /// Row-major `A D^-1`.
    rows: Vec<Complex64>,
    /// `||a_i||^2 + 1` for each row.
    denominators: Vec<f64>,
    z: Vec<Complex64>,
    tau: Vec<Complex64>,
    relaxation: f64,
    sweeps_done: usize,
}

impl<'p> KaczmarzState<'p> {
    pub fn new(problem: &'p TikhonovProblem, relaxation: f64) -> Self {
        let (m, k) = problem.a.shape();
        let mut rows = Vec::with_capacity(m * k);
        let mut denominators = Vec::with_capacity(m);
        for i in 0..m {
            let mut norm = 0.0;
            for j in 0..k {
                let v = problem.a[(i, j)] / problem.d[j];
                norm += v.norm_sqr();
                rows.push(v);
            }
            denominators.push(norm + 1.0);
        }
        Self {
            problem,
            rows,
            denominators,
            z: vec![Complex64::new(0.0, 0.0); k],
            tau: vec![Complex64::new(0.0, 0.0); m],
            relaxation,
            sweeps_done: 0,
        }
    }

    /// Replaces the iterate, e.g. to start from a known point.
    pub fn set_iterate(&mut self, z: &CVector, tau: &CVector) {
        self.z.copy_from_slice(z.as_slice());
        self.tau.copy_from_slice(tau.as_slice());
    }

    pub fn z(&self) -> CVector {
        CVector::from_column_slice(&self.z)
    }

    pub fn tau(&self) -> CVector {
        CVector::from_column_slice(&self.tau)
    }

    /// `y = D^-1 z`.
    pub fn solution(&self) -> CVector {
        CVector::from_iterator(self.z.len(), self.z.iter().zip(&self.problem.d).map(|(z, d)| z / *d))
    }

    /// `||(A D^-1) z + tau - w||_2`.
    pub fn extended_residual(&self) -> f64 {
        let k = self.z.len();
        self.problem
            .w
            .iter()
            .enumerate()
            .map(|(i, wi)| {
                let row = &self.rows[i * k..(i + 1) * k];
                let az: Complex64 = row.iter().zip(&self.z).map(|(a, z)| a * z).sum();
                (az + self.tau[i] - wi).norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// One cyclic pass over rows `1..=M`.
    pub fn sweep(&mut self) -> Result<()> {
        let k = self.z.len();
        for (i, wi) in self.problem.w.iter().enumerate() {
            let row = &self.rows[i * k..(i + 1) * k];
            let inner: Complex64 = row.iter().zip(&self.z).map(|(a, z)| a * z).sum();
            let step = (wi - inner - self.tau[i]) * (self.relaxation / self.denominators[i]);
            if !(step.re.is_finite() && step.im.is_finite()) {
                return Err(Error::NonFinite {
                    row: i,
                    sweep: self.sweeps_done,
                });
            }
            for (z, a) in self.z.iter_mut().zip(row) {
                *z += step * a.conj();
            }
            self.tau[i] += step;
        }
        self.sweeps_done += 1;
        Ok(())
    }

    /// Clamps `y_k = max(Re y_k, 0)` for `k < n` and re-derives `z = D y`.
    fn project_block(&mut self, n: usize) {
        for (z, d) in self.z.iter_mut().zip(&self.problem.d).take(n) {
            let y = (z.re / d).max(0.0);
            *z = Complex64::new(y * d, 0.0);
        }
    }
}

/// Runs `sweeps` Kaczmarz sweeps from zero with unit relaxation.
pub fn kaczmarz_solve(problem: &TikhonovProblem, sweeps: usize) -> Result<SolverReport> {
    kaczmarz_solve_with(problem, &KaczmarzOptions::new(sweeps))
}

pub fn kaczmarz_solve_with(problem: &TikhonovProblem, opts: &KaczmarzOptions) -> Result<SolverReport> {
    if opts.sweeps == 0 {
        return Err(Error::InvalidArgument("at least one sweep is required".into()));
    }
    let mut state = KaczmarzState::new(problem, opts.relaxation);
    for _ in 0..opts.sweeps {
        state.sweep()?;
        if let Some(n) = opts.positive_block {
            state.project_block(n.min(problem.d.len()));
        }
    }
    let solution = state.solution();
    Ok(SolverReport {
        residual_norm: problem.residual(&solution).norm(),
        normal_defect: problem.normal_defect(&solution),
        objective: problem.objective(&solution),
        tau: state.tau(),
        sweeps: opts.sweeps,
        solution,
    })
}

/// Direct solve via a QR factorization of the stacked matrix `[A; D]`.
pub fn dense_solve(problem: &TikhonovProblem) -> Result<CVector> {
    DenseFactor::new(problem)?.solve(&problem.w)
}

/// QR factorization of the stacked matrix `[A; D]`, reusable for any data
/// vector. With `[A; D] = Q R` the minimizer is `R^{-1} Q_top^H w`, where
/// `Q_top` holds the first `M` rows of `Q`.
#[derive(Clone, Debug)]
pub struct DenseFactor {
    q_top_adjoint: CMatrix,
    r: CMatrix,
}

impl DenseFactor {
    pub fn new(problem: &TikhonovProblem) -> Result<Self> {
        let (m, k) = problem.a.shape();
        let mut stacked = CMatrix::zeros(m + k, k);
        stacked.rows_mut(0, m).copy_from(&problem.a);
        for (j, &d) in problem.d.iter().enumerate() {
            stacked[(m + j, j)] = Complex64::new(d, 0.0);
        }
        let qr = QR::new(stacked);
        let r = qr.r();
        if let Some(j) = (0..k).find(|&j| r[(j, j)].norm() == 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stacked system is singular at column {j}"
            )));
        }
        Ok(Self {
            q_top_adjoint: qr.q().rows(0, m).adjoint(),
            r,
        })
    }

    pub fn solve(&self, w: &CVector) -> Result<CVector> {
        if w.len() != self.q_top_adjoint.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "data has length {}, operator has {} rows",
                w.len(),
                self.q_top_adjoint.ncols()
            )));
        }
        self.r
            .solve_upper_triangular(&(&self.q_top_adjoint * w))
            .ok_or_else(|| Error::InvalidArgument("triangular solve failed".into()))
    }
}

/// Which algorithm a pipeline uses for its per-frame Tikhonov solves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    #[default]
    Kaczmarz,
    /// Direct QR solve; the positivity projection, if requested, is applied once at the end.
    Dense,
}

impl SolverChoice {
    pub fn label(self) -> &'static str {
        match self {
            SolverChoice::Kaczmarz => "kaczmarz",
            SolverChoice::Dense => "dense",
        }
    }
}

/// Solves one operator against many data vectors. This is the single entry
/// point every reconstruction pipeline goes through; the dense variant
/// factors the operator once.
#[derive(Clone, Debug)]
pub struct FrameSolver<'p> {
    base: &'p TikhonovProblem,
    choice: SolverChoice,
    opts: KaczmarzOptions,
    factor: Option<DenseFactor>,
}

impl<'p> FrameSolver<'p> {
    pub fn new(base: &'p TikhonovProblem, choice: SolverChoice, opts: KaczmarzOptions) -> Result<Self> {
        let factor = match choice {
            SolverChoice::Dense => Some(DenseFactor::new(base)?),
            SolverChoice::Kaczmarz => None,
        };
        Ok(Self {
            base,
            choice,
            opts,
            factor,
        })
    }

    pub fn choice(&self) -> SolverChoice {
        self.choice
    }

    pub fn solve(&self, w: CVector) -> Result<SolverReport> {
        let problem = self.base.with_data(w)?;
        match &self.factor {
            None => kaczmarz_solve_with(&problem, &self.opts),
            Some(factor) => {
                let mut y = factor.solve(&problem.w)?;
                if let Some(n) = self.opts.positive_block {
                    y = project_real_positive(&y, n);
                }
                let residual = problem.residual(&y);
                Ok(SolverReport {
                    tau: -residual.clone(),
                    sweeps: 0,
                    residual_norm: residual.norm(),
                    normal_defect: problem.normal_defect(&y),
                    objective: problem.objective(&y),
                    solution: y,
                })
            }
        }
    }
}

/// Solves `problem` with its own data vector.
pub fn solve(problem: &TikhonovProblem, choice: SolverChoice, opts: &KaczmarzOptions) -> Result<SolverReport> {
    FrameSolver::new(problem, choice, opts.clone())?.solve(problem.w.clone())
}

/// Replaces the first `n` entries by `max(Re, 0)`; `n` is clamped to the length.
pub fn project_real_positive(y: &CVector, n: usize) -> CVector {
    let mut out = y.clone();
    for v in out.iter_mut().take(n) {
        *v = Complex64::new(v.re.max(0.0), 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cvec(v: &[f64]) -> CVector {
        CVector::from_iterator(v.len(), v.iter().map(|&x| z(x, 0.0)))
    }

    #[test]
    fn identity_problem() {
        let p = TikhonovProblem::new(CMatrix::identity(2, 2), cvec(&[2.0, 0.0]), vec![1.0, 1.0]).unwrap();
        let rep = kaczmarz_solve(&p, 60).unwrap();
        assert!((rep.solution - cvec(&[1.0, 0.0])).norm() < 1e-12);
        let y = dense_solve(&p).unwrap();
        assert!((y - cvec(&[1.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn scalar_problem() {
        let a = CMatrix::from_element(1, 1, z(2.0, 0.0));
        let p = TikhonovProblem::new(a, cvec(&[3.0]), vec![2f64.sqrt()]).unwrap();
        // Single row: Kaczmarz hits the minimum-norm point after one update.
        let rep = kaczmarz_solve(&p, 1).unwrap();
        assert!((rep.solution[0] - z(1.0, 0.0)).norm() < 1e-14);
        assert!((dense_solve(&p).unwrap()[0] - z(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn dense_examples() {
        let w = CVector::from_iterator(3, (0..3).map(|i| z(i as f64, -1.0)));
        let p = TikhonovProblem::new(CMatrix::zeros(3, 4), w, vec![1.0; 4]).unwrap();
        assert!(dense_solve(&p).unwrap().norm() < 1e-14);

        let p = TikhonovProblem::new(CMatrix::identity(3, 3), cvec(&[4.0, 8.0, 0.0]), vec![3f64.sqrt(); 3]).unwrap();
        let y = dense_solve(&p).unwrap();
        assert!((y - cvec(&[1.0, 2.0, 0.0])).norm() < 1e-14);
        assert!(p.normal_defect(&dense_solve(&p).unwrap()) < 1e-14);
    }

    #[test]
    fn rejects_nonpositive_weights_and_bad_shapes() {
        assert!(TikhonovProblem::new(CMatrix::identity(2, 2), cvec(&[1.0, 1.0]), vec![1.0, 0.0]).is_err());
        assert!(TikhonovProblem::new(CMatrix::identity(2, 2), cvec(&[1.0]), vec![1.0, 1.0]).is_err());
        assert!(TikhonovProblem::new(CMatrix::identity(2, 2), cvec(&[1.0, 1.0]), vec![1.0]).is_err());
        let p = TikhonovProblem::new(CMatrix::identity(2, 2), cvec(&[1.0, 1.0]), vec![1.0, 1.0]).unwrap();
        assert!(kaczmarz_solve(&p, 0).is_err());
    }

    #[test]
    fn overflow_names_row() {
        let mut a = CMatrix::identity(2, 2);
        a[(1, 0)] = z(1e300, 0.0);
        let p = TikhonovProblem::new(a, cvec(&[1.0, 1e300]), vec![1e-300, 1.0]).unwrap();
        match kaczmarz_solve(&p, 3) {
            Err(Error::NonFinite { row, .. }) => assert!(row <= 1),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn zero_rows_still_update_tau() {
        let mut a = CMatrix::identity(3, 2);
        a[(1, 1)] = z(0.0, 0.0);
        let p = TikhonovProblem::new(a, cvec(&[1.0, 5.0, 0.0]), vec![1.0, 1.0]).unwrap();
        let rep = kaczmarz_solve(&p, 50).unwrap();
        // Row 2 is zero, so its residual is the whole data entry.
        assert!((rep.tau[1] - z(5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let y = CVector::from_vec(vec![z(1.0, 2.0), z(-3.0, 0.0), z(0.0, 5.0)]);
        let p = project_real_positive(&y, 2);
        assert_eq!(p, CVector::from_vec(vec![z(1.0, 0.0), z(0.0, 0.0), z(0.0, 5.0)]));
        let pos = cvec(&[1.0, 2.0]);
        assert_eq!(project_real_positive(&pos, 2), pos);
        assert_eq!(project_real_positive(&y, 0), y);
    }

    #[test]
    fn positive_mode_keeps_block_nonnegative() {
        let a = CMatrix::from_row_slice(2, 2, &[z(1.0, 0.0), z(0.5, 0.0), z(0.2, 0.0), z(1.0, 0.0)]);
        let p = TikhonovProblem::new(a, cvec(&[-1.0, 2.0]), vec![0.5, 0.5]).unwrap();
        let opts = KaczmarzOptions {
            positive_block: Some(1),
            ..KaczmarzOptions::new(30)
        };
        let rep = kaczmarz_solve_with(&p, &opts).unwrap();
        assert!(rep.solution[0].re >= 0.0 && rep.solution[0].im == 0.0);
    }
}
