//! Operation examples checked against independent oracles (nalgebra's SVD and
//! LU, brute-force sums, regenerated noise streams).

use mpijr::dictionary::{build_dictionary, spectrum_report};
use mpijr::recon::{background_mean, lambda_from_relative, reconstruct_static, BackgroundEstimate};
use mpijr::shifted::{reconstruct_shifted, ShiftOperator};
use mpijr::simkit::{
    frame_noise, gen_background_archive, gen_frame_series, gen_system_matrix, iron_mass_of_phantom,
    random_complex_matrix, DriftModel, PhantomSpec,
};
use mpijr::solver::{dense_solve, kaczmarz_solve, SolverChoice, TikhonovProblem};
use mpijr::{BackgroundSource, CMatrix, CVector, FrameSeries, FrequencySelection, ReconConfig, SystemMatrix};
use num_complex::Complex64;

fn reference_singular_values(x: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = x.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn real_vec(v: &[f64]) -> CVector {
    CVector::from_iterator(v.len(), v.iter().map(|&x| Complex64::new(x, 0.0)))
}

#[test]
fn dictionary_truncation_error_is_the_singular_tail() {
    let x = random_complex_matrix(8, 8, 5, 1.0);
    let archive = mpijr::BackgroundArchive::new(x.clone(), FrequencySelection::all_rows(8)).unwrap();
    let dict = build_dictionary(&archive, 3).unwrap();
    let w = dict.basis();
    let s = reference_singular_values(&x);
    let tail = (s[3] * s[3] + s[4] * s[4]).sqrt();
    let err = (&x - w * (w.adjoint() * &x)).norm();
    assert!((err - tail).abs() <= 1e-12 * tail, "{err} vs {tail}");
    for (own, reference) in dict.singular_values().iter().zip(&s) {
        assert!((own - reference).abs() <= 1e-12 * s[0]);
    }
}

#[test]
fn planted_rank_three_is_recovered() {
    // Small enough that the noise edge sigma * (sqrt(M) + sqrt(Theta)) stays
    // below the 1e-2 elbow threshold.
    let (clean, _) = gen_background_archive(17, 12, 16, 3, 0.0, None).unwrap();
    let s1 = reference_singular_values(clean.scans())[0];
    let (archive, g) = gen_background_archive(17, 12, 16, 3, 1e-3 * s1, None).unwrap();

    let report = spectrum_report(&archive, 1e-2);
    assert_eq!(report.elbow, Some(4));

    let w = build_dictionary(&archive, 3).unwrap().basis().clone();
    let cosines = (w.adjoint() * &g).svd(false, false).singular_values;
    let smallest = cosines.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
    let angle = smallest.acos();
    assert!(angle <= 1e-2, "largest principal angle {angle}");
}

#[test]
fn kaczmarz_matches_dense_on_seeded_problem() {
    let a = random_complex_matrix(6, 6, 4, 1.0);
    let w = random_complex_matrix(7, 6, 1, 1.0).column(0).into_owned();
    let p = TikhonovProblem::new(a.clone(), w.clone(), vec![0.1f64.sqrt(); 4]).unwrap();
    let y_d = dense_solve(&p).unwrap();
    // This weakly regularized problem contracts by about 0.95 per cyclic
    // sweep, so 200 sweeps stop near 3e-6; 1000 reach rounding level.
    let y_k = kaczmarz_solve(&p, 1000).unwrap().solution;
    assert!((&y_k - &y_d).norm() <= 1e-8 * y_d.norm());

    // Normal equations (A^H A + 0.1 I) y = A^H w solved by LU.
    let h = a.adjoint() * &a + CMatrix::identity(4, 4) * Complex64::new(0.1, 0.0);
    let y_n = h.lu().solve(&(a.adjoint() * &w)).unwrap();
    assert!((&y_d - &y_n).norm() <= 1e-12 * y_n.norm());
}

#[test]
fn lambda_scale_matches_entrywise_sum() {
    let s = random_complex_matrix(21, 6, 4, 1.0);
    let mut sum = 0.0;
    for i in 0..6 {
        for j in 0..4 {
            sum += s[(i, j)].re * s[(i, j)].re + s[(i, j)].im * s[(i, j)].im;
        }
    }
    let system = SystemMatrix::new(s, (2, 2), 1.0, FrequencySelection::all_rows(6)).unwrap();
    let lambda = lambda_from_relative(&system, 1.0);
    assert!((lambda - sum / 4.0).abs() <= 1e-14 * lambda);
}

#[test]
fn background_mean_matches_brute_force() {
    let frames = random_complex_matrix(33, 10, 8, 1.0);
    let series = FrameSeries::new(frames.clone(), 1.0, FrequencySelection::all_rows(10)).unwrap();
    let est = background_mean(&series, &[1, 2, 3, 4, 5]).unwrap();
    for i in 0..10 {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..5 {
            acc += frames[(i, j)];
        }
        assert!((est.b_est[i] - acc / 5.0).norm() <= 1e-15 * acc.norm().max(1.0));
    }
}

#[test]
fn static_recovers_noise_free_phantom() {
    let system = gen_system_matrix(3, 96, (8, 8), 0.5, 1.0).unwrap();
    let phantom = PhantomSpec::static_dot((4, 4), 2, 5.0);
    let drift = DriftModel::still(CVector::zeros(96));
    let (series, truth) = gen_frame_series(&system, &phantom, &drift, 1, 1.0, 3).unwrap();
    let cfg = ReconConfig {
        lambda_rel: 1e-6,
        solver: SolverChoice::Dense,
        ..ReconConfig::default()
    };
    let res = reconstruct_static(&system, &series, &BackgroundEstimate::zero(96), &cfg).unwrap();
    let truth = truth.concentrations.column(0).into_owned();
    let err = (res.concentration(0) - &truth).norm() / truth.norm();
    assert!(err <= 1e-3, "relative error {err}");
}

#[test]
fn shifted_pair_recovers_common_concentration() {
    let grid = (4, 4);
    let m = 60;
    let s = random_complex_matrix(41, m, 16, 1.0);
    let system = SystemMatrix::new(s, grid, 1.0, FrequencySelection::all_rows(m)).unwrap();
    // With b nearly free, c is seen only through S (P1 - P2); these shifts
    // keep P1 - P2 injective.
    let op1 = ShiftOperator::identity(grid).unwrap();
    let op2 = ShiftOperator::new(grid, 1, 0).unwrap();
    // Interior support so neither shift moves mass off the grid.
    let mut c_star = vec![0.0; 16];
    c_star[5] = 2.0;
    c_star[6] = 1.0;
    c_star[9] = 3.0;
    let b_est = random_complex_matrix(42, m, 1, 1.0).column(0).into_owned();
    let b_star = random_complex_matrix(43, m, 1, 0.5).column(0).into_owned();
    let c_vec = real_vec(&c_star);
    let s1 = mpijr::shifted::shifted_system(system.entries(), &op1).unwrap();
    let s2 = mpijr::shifted::shifted_system(system.entries(), &op2).unwrap();
    let u1 = &s1 * &c_vec + &b_est + &b_star;
    let u2 = &s2 * &c_vec + &b_est + &b_star;
    let cfg = ReconConfig {
        lambda_rel: 1e-8,
        beta: 1e-8,
        solver: SolverChoice::Dense,
        ..ReconConfig::default()
    };
    let res = reconstruct_shifted(&system, &u1, &u2, &op1, &op2, &b_est, &cfg).unwrap();
    let truth = nalgebra::DVector::from_vec(c_star);
    let err = (&res.concentration - &truth).norm() / truth.norm();
    assert!(err <= 0.02, "relative error {err}");
}

#[test]
fn unsmoothed_system_is_well_conditioned() {
    let system = gen_system_matrix(5, 16, (4, 4), 0.0, 1.0).unwrap();
    let s = reference_singular_values(system.entries());
    let cond = s[0] / s[s.len() - 1];
    assert!(cond <= 5.0, "condition number {cond}");
}

#[test]
fn frame_residual_is_the_seeded_noise_draw() {
    let m = 20;
    let system = gen_system_matrix(9, m, (4, 4), 1.0, 1.0).unwrap();
    let phantom = PhantomSpec::static_dot((2, 2), 2, 3.0);
    let fingerprints = mpijr::simkit::orthonormalize_columns(&random_complex_matrix(10, m, 2, 1.0)).unwrap();
    let curves = vec![
        mpijr::simkit::AmplitudeCurve::ExponentialSettling { amplitude: 2.0, rate: 3.0 },
        mpijr::simkit::AmplitudeCurve::Linear { offset: 0.5, slope: -1.0 },
    ];
    let sigma = 0.05;
    let drift = DriftModel::new(random_complex_matrix(11, m, 1, 1.0).column(0).into_owned(), fingerprints, curves, sigma)
        .unwrap();
    let frames = 7;
    let (series, truth) = gen_frame_series(&system, &phantom, &drift, frames, 0.5, 12).unwrap();
    let noise = frame_noise(12, m, frames, sigma);
    for l in 0..frames {
        let c = real_vec(truth.concentrations.column(l).as_slice());
        let b = drift.background(l + 1, frames);
        let residual = series.frame(l) - system.entries() * c - b;
        let err = (&residual - noise.column(l)).norm();
        assert!(err <= 1e-12 * series.frame(l).norm(), "frame {l}: {err}");
    }
}

#[test]
fn bolus_mass_is_the_masked_sum() {
    let grid = (12, 10);
    let spec = PhantomSpec::DynamicBolus {
        tube_columns: (2, 8),
        tube_rows: (1, 8),
        tube_width: 2,
        peak_concentration: 40.0,
        t0: 1.0,
        alpha: 2.0,
        tau: 1.5,
    };
    let period = 0.5;
    let dv = 6.7e-4;
    // Peak at t = t0 + alpha * tau = 4 s, one-based frame 9.
    let peak_frame = 9;
    let c = spec.concentration(grid, peak_frame, period, dv);
    let brute: f64 = dv * c.iter().sum::<f64>();
    let mass = iron_mass_of_phantom(&spec, grid, peak_frame, period, dv);
    assert!((mass - brute).abs() <= 1e-12 * brute);
    assert!((mass - dv * 40.0 * 32.0).abs() <= 1e-12 * mass);
    assert_eq!(iron_mass_of_phantom(&PhantomSpec::Empty, grid, 1, period, dv), 0.0);
}

#[test]
fn background_estimate_provenance_is_kept() {
    let frames = random_complex_matrix(50, 4, 3, 1.0);
    let series = FrameSeries::new(frames, 1.0, FrequencySelection::all_rows(4)).unwrap();
    let est = background_mean(&series, &[2]).unwrap();
    assert_eq!(est.b_est, series.frame(1));
    assert!(matches!(est.provenance, BackgroundSource::MeanOfFrames(ref v) if v == &vec![2]));
}
