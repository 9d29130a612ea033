//! One-sided (Hestenes) Jacobi SVD for dense complex matrices.
//!
//! Only the left singular vectors and the singular values are produced,
//! which is all the dictionary builder needs. Columns of a working copy are
//! rotated pairwise until they are mutually orthogonal; their norms are the
//! singular values and the normalized columns are the left singular vectors.

use num_complex::Complex64;

use crate::model::CMatrix;

const MAX_SWEEPS: usize = 80;

/// Left singular vectors and singular values of an `M x T` matrix.
#[derive(Clone, Debug)]
pub struct LeftSvd {
    /// `M x k` with `k = min(M, T)`; columns ordered by nonincreasing singular value.
    pub u: CMatrix,
    /// Length `k`, nonincreasing.
    pub singular_values: Vec<f64>,
    pub sweeps: usize,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn left_svd(x: &CMatrix) -> LeftSvd {
    let (m, t) = x.shape();
    let k = m.min(t);
    // Column-major storage: column j is cols[j*m..(j+1)*m].
    let mut cols: Vec<Complex64> = x.as_slice().to_vec();
    let tol = f64::EPSILON * (m.max(1) as f64).sqrt();
    let mut sweeps = 0;

    for sweep in 0..MAX_SWEEPS {
        sweeps = sweep + 1;
        let mut rotated = false;
        for p in 0..t {
            for q in (p + 1)..t {
                let (head, tail) = cols.split_at_mut(q * m);
                let gp = &mut head[p * m..(p + 1) * m];
                let gq = &mut tail[..m];
                let alpha = norm_sqr(gp);
                let beta = norm_sqr(gq);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(gp, gq);
                let g_abs = gamma.norm();
                if g_abs <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotate g_q by the phase of gamma so the pair becomes real-coupled.
                let phase = gamma / g_abs;
                let zeta = (beta - alpha) / (2.0 * g_abs);
                let t_rot = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t_rot * t_rot).sqrt();
                let s = c * t_rot;
                let phase_conj = phase.conj();
                for (a, b) in gp.iter_mut().zip(gq.iter_mut()) {
                    let bp = phase_conj * *b;
                    let new_a = *a * c - bp * s;
                    let new_b = *a * s + bp * c;
                    *a = new_a;
                    *b = new_b;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut norms: Vec<(usize, f64)> = (0..t)
        .map(|j| (j, norm_sqr(&cols[j * m..(j + 1) * m]).sqrt()))
        .collect();
    // Stable sort keeps the lower column index first on exact ties.
    norms.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut u = CMatrix::zeros(m, k);
    let mut singular_values = Vec::with_capacity(k);
    for (out, &(j, s)) in norms.iter().take(k).enumerate() {
        singular_values.push(s);
        if s > 0.0 {
            let col = &cols[j * m..(j + 1) * m];
            for i in 0..m {
                u[(i, out)] = col[i] / s;
            }
        }
    }
    LeftSvd {
        u,
        singular_values,
        sweeps,
    }
}
