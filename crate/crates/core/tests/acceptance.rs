//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each and exits nonzero if any fails.

use std::time::Instant;

use mpijr::dictionary::build_dictionary;
use mpijr::harness::{beta_grid, compare_methods, replay, ExperimentConfig, Method};
use mpijr::metrics::{background_level, fwhm, fwhm_profile, iron_mass, reference_level, snr, RegionSpec};
use mpijr::recon::{reconstruct_interp, reconstruct_joint, reconstruct_static, BackgroundEstimate};
use mpijr::scenario::{DriftKind, Scenario, ScenarioParams};
use mpijr::shifted::{reconstruct_shifted, shifted_problem, shifted_system, ShiftOperator};
use mpijr::simkit::{gen_background_archive, random_complex_matrix, sim_rng};
use mpijr::solver::{dense_solve, kaczmarz_solve, SolverChoice, TikhonovProblem};
use mpijr::{BackgroundSource, CMatrix, CVector, FrameSeries, FrequencySelection, ReconConfig, SystemMatrix};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: &CVector, b: &CVector) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn system_of(s: CMatrix, grid: (usize, usize)) -> SystemMatrix {
    let m = s.nrows();
    SystemMatrix::new(s, grid, 1.0, FrequencySelection::all_rows(m)).unwrap()
}

fn series_of(frames: CMatrix) -> FrameSeries {
    let m = frames.nrows();
    FrameSeries::new(frames, 1.0, FrequencySelection::all_rows(m)).unwrap()
}

fn estimate(b: CVector) -> BackgroundEstimate {
    BackgroundEstimate {
        b_est: b,
        provenance: BackgroundSource::Zero,
    }
}

/// Normal-equation residual of an arbitrary quadratic, used as an oracle
/// that does not go through the library's stacked formulation.
fn solve_normal(h: &CMatrix, g: &CVector) -> CVector {
    h.clone().lu().solve(g).expect("nonsingular normal matrix")
}

// 1. Kaczmarz (200 sweeps) vs dense oracle on 50 seeded problems.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = sim_rng(1000 + seed);
        let m = rng.random_range(2..=20);
        let k = rng.random_range(2..=20);
        let n = rng.random_range(1..=k);
        let a = random_complex_matrix(seed, m, k, 1.0);
        let w = random_complex_matrix(seed + 500, m, 1, 1.0).column(0).into_owned();
        let scale = a.norm_squared() / k as f64;
        let lambda = scale * rng.random_range(0.1..1.0);
        let beta = scale * rng.random_range(0.1..1.0);
        let p = TikhonovProblem::new(a, w, TikhonovProblem::block_weights(n, lambda, k - n, beta)).unwrap();
        let y_k = kaczmarz_solve(&p, 200).unwrap().solution;
        let y_d = dense_solve(&p).unwrap();
        worst = worst.max(rel(&y_k, &y_d));
    }
    let secs = start.elapsed().as_secs_f64();

    let a = random_complex_matrix(6, 6, 4, 1.0);
    let w = random_complex_matrix(7, 6, 1, 1.0).column(0).into_owned();
    let p = TikhonovProblem::new(a, w, vec![0.1f64.sqrt(); 4]).unwrap();
    let y_d = dense_solve(&p).unwrap();
    let weak: Vec<String> = [200, 1000]
        .iter()
        .map(|&s| format!("{s} sweeps {:.1e}", rel(&kaczmarz_solve(&p, s).unwrap().solution, &y_d)))
        .collect();
    println!("    info: 6x4 problem with lambda = 0.1 (absolute): {}", weak.join(", "));

    check(
        worst <= 1e-8 && secs < 5.0,
        format!("max relative error {worst:.2e} (<= 1e-8), {secs:.2} s (< 5 s)"),
    )
}

// 2. Dictionary orthonormality and Eckart-Young error against nalgebra's SVD.
fn criterion_2() -> Outcome {
    let mut worst_orth: f64 = 0.0;
    let mut worst_ey: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = sim_rng(2000 + seed);
        let m = rng.random_range(6..=40);
        let theta = rng.random_range(4..=30);
        let rank = rng.random_range(1..=m.min(theta));
        let (archive, _) = gen_background_archive(seed, m, theta, rank, 0.05, None).unwrap();
        // q below min(M, Theta) keeps the optimal error nonzero.
        let q = rng.random_range(1..m.min(theta));
        let dict = build_dictionary(&archive, q).unwrap();
        let w = dict.basis();
        let gram = w.adjoint() * w;
        let orth = (&gram - CMatrix::identity(q, q)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst_orth = worst_orth.max(orth);

        let x = archive.scans();
        let reference = x.clone().svd(false, false).singular_values;
        let mut s: Vec<f64> = reference.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let tail = s.iter().skip(q).map(|v| v * v).sum::<f64>().sqrt();
        let err = (x - w * (w.adjoint() * x)).norm();
        worst_ey = worst_ey.max((err - tail).abs() / tail);
    }
    check(
        worst_orth <= 1e-10 && worst_ey <= 1e-9,
        format!("max |W^H W - I| {worst_orth:.2e} (<= 1e-10), Eckart-Young rel {worst_ey:.2e} (<= 1e-9)"),
    )
}

// 3. Minimizer of the (c, n) objective with beta ||W n||^2 (solved from its own
//    normal equations) equals the stacked Tikhonov minimizer.
fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = sim_rng(3000 + seed);
        let m = rng.random_range(8..=30);
        let n = rng.random_range(2..=20);
        let q = rng.random_range(1..=4);
        let (archive, _) = gen_background_archive(seed, m, 12.max(q), q, 0.01, None).unwrap();
        let w = build_dictionary(&archive, q).unwrap().basis().clone();
        let s = random_complex_matrix(seed + 1, m, n, 1.0);
        let u = random_complex_matrix(seed + 2, m, 1, 1.0).column(0).into_owned();
        let b_est = random_complex_matrix(seed + 3, m, 1, 0.5).column(0).into_owned();
        let lambda = rng.random_range(0.05..2.0);
        let beta = rng.random_range(1e-4..2.0);

        // Unreduced: minimize ||S c + W n - r||^2 + lambda ||c||^2 + beta ||W n||^2, r = u - b_est.
        let r = &u - &b_est;
        let k = n + q;
        let mut h = CMatrix::zeros(k, k);
        h.view_mut((0, 0), (n, n)).copy_from(&(s.adjoint() * &s + CMatrix::identity(n, n) * c(lambda)));
        h.view_mut((0, n), (n, q)).copy_from(&(s.adjoint() * &w));
        h.view_mut((n, 0), (q, n)).copy_from(&(w.adjoint() * &s));
        h.view_mut((n, n), (q, q)).copy_from(&(w.adjoint() * &w * c(1.0 + beta)));
        let mut g = CVector::zeros(k);
        g.rows_mut(0, n).copy_from(&(s.adjoint() * &r));
        g.rows_mut(n, q).copy_from(&(w.adjoint() * &r));
        let x8 = solve_normal(&h, &g);

        let a = mpijr::hstack(&s, &w).unwrap();
        let p = TikhonovProblem::new(a, r, TikhonovProblem::block_weights(n, lambda, q, beta)).unwrap();
        let x13 = dense_solve(&p).unwrap();
        worst = worst.max(rel(&x13, &x8));
    }
    check(worst <= 1e-10, format!("max relative difference {worst:.2e} (<= 1e-10)"))
}

fn scenario_inputs(params: &ScenarioParams) -> (Scenario, FrameSeries, BackgroundEstimate) {
    let sc = Scenario::generate(params).unwrap();
    let series = sc.series().unwrap();
    let b = estimate(sc.u_pre());
    (sc, series, b)
}

// 4. beta -> infinity reproduces static subtraction.
fn criterion_4() -> Outcome {
    let params = ScenarioParams {
        frames: 6,
        ..ScenarioParams::default()
    };
    let (sc, series, b_est) = scenario_inputs(&params);
    let dict = build_dictionary(&sc.archive, 2).unwrap();
    let mut worst: f64 = 0.0;
    for solver in [SolverChoice::Kaczmarz, SolverChoice::Dense] {
        let cfg = ReconConfig {
            beta: 1e12,
            solver,
            ..ReconConfig::default()
        };
        let joint = reconstruct_joint(&sc.system, &dict, &series, &b_est, &cfg).unwrap();
        let stat = reconstruct_static(&sc.system, &series, &b_est, &cfg).unwrap();
        for l in 0..series.frame_count() {
            let a = joint.raw_concentrations.column(l).into_owned();
            let b = stat.raw_concentrations.column(l).into_owned();
            worst = worst.max(rel(&a, &b));
        }
    }
    check(
        worst <= 1e-6,
        format!("max relative difference {worst:.2e} over 6 frames, Kaczmarz and dense (<= 1e-6)"),
    )
}

// 5. ||n(beta_j)|| nondecreasing along the beta grid.
fn criterion_5() -> Outcome {
    let params = ScenarioParams {
        frames: 4,
        ..ScenarioParams::default()
    };
    let (sc, series, b_est) = scenario_inputs(&params);
    let dict = build_dictionary(&sc.archive, 2).unwrap();
    let mut worst_violation: f64 = 0.0;
    for l in 0..series.frame_count() {
        let frame = series.sub_series(l + 1, l + 1).unwrap();
        let norms: Vec<f64> = beta_grid(15)
            .into_iter()
            .map(|beta| {
                let cfg = ReconConfig {
                    beta,
                    solver: SolverChoice::Dense,
                    ..ReconConfig::default()
                };
                let res = reconstruct_joint(&sc.system, &dict, &frame, &b_est, &cfg).unwrap();
                res.coefficients.column(0).norm()
            })
            .collect();
        for w in norms.windows(2) {
            worst_violation = worst_violation.max(w[0] - w[1]);
        }
    }
    check(
        worst_violation <= 1e-10,
        format!("largest decrease of ||n|| along the grid {worst_violation:.2e} (<= 1e-10)"),
    )
}

// 6. S orthogonal to span(W): c = 0 and n = n* / (1 + beta).
fn criterion_6() -> Outcome {
    let m = 24;
    let n = 9;
    let (archive, _) = gen_background_archive(61, m, 16, 3, 0.01, None).unwrap();
    let dict = build_dictionary(&archive, 3).unwrap();
    let w = dict.basis().clone();
    let s0 = random_complex_matrix(62, m, n, 1.0);
    let s = &s0 - &w * (w.adjoint() * &s0);
    let sys = system_of(s, (3, 3));
    let b_est = random_complex_matrix(63, m, 1, 1.0).column(0).into_owned();
    let n_star = random_complex_matrix(64, 3, 2, 1.0);
    let frames = CMatrix::from_fn(m, 2, |i, j| b_est[i] + (&w * n_star.column(j))[i]);
    let series = series_of(frames);
    let mut worst_c: f64 = 0.0;
    let mut worst_n: f64 = 0.0;
    for solver in [SolverChoice::Dense, SolverChoice::Kaczmarz] {
        for beta in [0.5, 0.01] {
            let cfg = ReconConfig {
                beta,
                solver,
                kaczmarz_iterations: 2000,
                ..ReconConfig::default()
            };
            let res = reconstruct_joint(&sys, &dict, &series, &estimate(b_est.clone()), &cfg).unwrap();
            for l in 0..2 {
                let ns = n_star.column(l).into_owned();
                worst_c = worst_c.max(res.raw_concentrations.column(l).norm() / ns.norm());
                let expected = &ns / c(1.0 + beta);
                worst_n = worst_n.max(rel(&res.coefficients.column(l).into_owned(), &expected));
            }
        }
    }
    check(
        worst_c <= 1e-9 && worst_n <= 1e-8,
        format!("max ||c||/||n*|| {worst_c:.2e} (<= 1e-9), max rel error of n {worst_n:.2e} (<= 1e-8)"),
    )
}

struct DriftRun {
    eps: [Vec<f64>; 3],
    mass: [Vec<f64>; 3],
}

const STATIC: usize = 0;
const INTERP: usize = 1;
const JOINT: usize = 2;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn reference_region(sc: &Scenario, reference: &DVector<f64>) -> RegionSpec {
    let p = &sc.params;
    let base = RegionSpec::central_block(p.grid_shape, p.signal_block, 1.0, p.pixel_volume).unwrap();
    let c_ref = reference_level(reference, &base).unwrap();
    base.with_c_ref(c_ref).unwrap()
}

fn drift_experiment(sc: &Scenario, cfg: &ReconConfig) -> (DriftRun, RegionSpec) {
    let series = sc.series().unwrap();
    let b_est = estimate(sc.u_pre());
    let dict = build_dictionary(&sc.archive, 2).unwrap();
    let results = [
        reconstruct_static(&sc.system, &series, &b_est, cfg).unwrap(),
        reconstruct_interp(&sc.system, &series, &sc.u_pre(), &sc.u_post(), cfg).unwrap(),
        reconstruct_joint(&sc.system, &dict, &series, &b_est, cfg).unwrap(),
    ];
    // c_ref is fixed once from the first static frame and shared by all methods.
    let region = reference_region(sc, &results[STATIC].concentration(0));
    let per = |k: usize, f: &dyn Fn(&DVector<f64>) -> f64| -> Vec<f64> {
        (0..series.frame_count()).map(|l| f(&results[k].concentration(l))).collect()
    };
    let eps = |k| per(k, &|x| background_level(x, &region).unwrap());
    let mass = |k| per(k, &|x| iron_mass(x, &region).unwrap());
    (
        DriftRun {
            eps: [eps(0), eps(1), eps(2)],
            mass: [mass(0), mass(1), mass(2)],
        },
        region,
    )
}

fn drift_numbers(run: &DriftRun, frames: usize) -> (f64, f64, usize) {
    let tail = frames - frames / 4;
    let eps_ratio = mean(&run.eps[JOINT][tail..]) / mean(&run.eps[STATIC][tail..]);
    let std_ratio = std(&run.mass[JOINT]) / std(&run.mass[STATIC]);
    let within = run.mass[JOINT].iter().filter(|m| ((*m / 31.0) - 1.0).abs() <= 0.15).count();
    (eps_ratio, std_ratio, within)
}

fn drift_config(solver: SolverChoice) -> ReconConfig {
    ReconConfig {
        lambda_rel: 1.0,
        beta: 0.2f64.powi(10),
        dict_rank: 2,
        solver,
        ..ReconConfig::default()
    }
}

// 7. Synthetic static-dot drift experiment.
fn criterion_7() -> Outcome {
    let start = Instant::now();
    let params = ScenarioParams::default();
    let sc = Scenario::generate(&params).unwrap();
    let (run, _) = drift_experiment(&sc, &drift_config(SolverChoice::Dense));
    let secs = start.elapsed().as_secs_f64();
    let l = params.frames;
    let (eps_ratio, std_ratio, within) = drift_numbers(&run, l);

    let (kz, _) = drift_experiment(&sc, &drift_config(SolverChoice::Kaczmarz));
    let (k_eps, k_std, k_within) = drift_numbers(&kz, l);
    println!(
        "    info: same scenario with 20 Kaczmarz sweeps: eps ratio {k_eps:.3}, std ratio {k_std:.3}, \
         mass within 15% on {k_within}/{l}, mean joint mass {:.2} ug",
        mean(&kz.mass[JOINT])
    );

    let ok = eps_ratio <= 0.2 && std_ratio <= 0.5 && within * 5 >= l * 4 && secs < 60.0;
    check(
        ok,
        format!(
            "(a) eps ratio {eps_ratio:.3} (<= 0.2), (b) mass std ratio {std_ratio:.3} (<= 0.5), \
             (c) mass within 15% on {within}/{l} (>= 80%), mean joint mass {:.2} ug, {secs:.1} s (< 60 s)",
            mean(&run.mass[JOINT])
        ),
    )
}

// 8. Linear drift is cancelled exactly by interpolation; under nonlinear
//    drift the joint estimate beats interpolation on >= 90% of frames.
fn criterion_8() -> Outcome {
    let dot = Scenario::generate(&ScenarioParams::default()).unwrap();
    let (run, region) = drift_experiment(&dot, &drift_config(SolverChoice::Dense));

    let linear = ScenarioParams {
        drift: DriftKind::Linear,
        dot_mass_ug: 0.0,
        noise_rel: 0.0,
        pre_frames: 0,
        post_frames: 0,
        ..ScenarioParams::default()
    };
    let sc = Scenario::generate(&linear).unwrap();
    let series = sc.series().unwrap();
    let res = reconstruct_interp(&sc.system, &series, &sc.u_pre(), &sc.u_post(), &ReconConfig::default()).unwrap();
    let worst_linear = (0..series.frame_count())
        .map(|l| background_level(&res.concentration(l), &region).unwrap())
        .fold(0.0, f64::max);

    let l = dot.params.frames;
    let wins = (0..l).filter(|&k| run.eps[JOINT][k] <= run.eps[INTERP][k]).count();
    check(
        worst_linear <= 1e-6 && wins * 10 >= l * 9,
        format!(
            "(a) max eps_bg under linear drift {worst_linear:.2e} (<= 1e-6), \
             (b) joint <= interp on {wins}/{l} frames (>= 90%)"
        ),
    )
}

// 9. Shifted-FoV estimator: first-order conditions and Kaczmarz vs oracle.
fn criterion_9() -> Outcome {
    let mut worst_grad: f64 = 0.0;
    let mut worst_kz: f64 = 0.0;
    for seed in 0..5u64 {
        let grid = (4, 4);
        let m = 40;
        let s = random_complex_matrix(900 + seed, m, 16, 1.0);
        let sys = system_of(s.clone(), grid);
        let u1 = random_complex_matrix(910 + seed, m, 1, 1.0).column(0).into_owned();
        let u2 = random_complex_matrix(920 + seed, m, 1, 1.0).column(0).into_owned();
        let b_est = random_complex_matrix(930 + seed, m, 1, 0.3).column(0).into_owned();
        let op1 = ShiftOperator::new(grid, 1, 0).unwrap();
        let op2 = ShiftOperator::new(grid, 0, -1).unwrap();
        let lambda = 0.8;
        let beta = 0.3;

        let p = shifted_problem(&sys, &u1, &u2, &op1, &op2, &b_est, lambda, beta).unwrap();
        let x = dense_solve(&p).unwrap();
        let cc = x.rows(0, 16).into_owned();
        let bb = x.rows(16, m).into_owned();
        // Gradient of sum_q ||S^q c - u^q + b_est + b||^2 + lambda ||c||^2 + beta ||b||^2.
        let s1 = shifted_system(&s, &op1).unwrap();
        let s2 = shifted_system(&s, &op2).unwrap();
        let r1 = &s1 * &cc - &u1 + &b_est + &bb;
        let r2 = &s2 * &cc - &u2 + &b_est + &bb;
        let gc = (s1.adjoint() * &r1 + s2.adjoint() * &r2 + &cc * c(lambda)) * c(2.0);
        let gb = (&r1 + &r2 + &bb * c(beta)) * c(2.0);
        let grad = (gc.norm_squared() + gb.norm_squared()).sqrt();
        let data = ((&u1 - &b_est).norm_squared() + (&u2 - &b_est).norm_squared()).sqrt();
        worst_grad = worst_grad.max(grad / data);

        let lambda_rel = lambda * 16.0 / s.norm_squared();
        let cfg = ReconConfig {
            lambda_rel,
            beta,
            kaczmarz_iterations: 1000,
            ..ReconConfig::default()
        };
        let kz = reconstruct_shifted(&sys, &u1, &u2, &op1, &op2, &b_est, &cfg).unwrap();
        let mut y = CVector::zeros(16 + m);
        y.rows_mut(0, 16).copy_from(&kz.raw_concentration);
        y.rows_mut(16, m).copy_from(&kz.background);
        worst_kz = worst_kz.max(rel(&y, &x));
    }
    check(
        worst_grad <= 1e-8 && worst_kz <= 1e-6,
        format!("max gradient / ||data|| {worst_grad:.2e} (<= 1e-8), Kaczmarz vs oracle {worst_kz:.2e} (<= 1e-6)"),
    )
}

// 10. Metrics examples.
fn criterion_10() -> Outcome {
    let mut failures = Vec::new();
    let mut expect = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let block = RegionSpec::block((4, 4), (1, 1), (2, 2), 1.0, 1.0).unwrap();
    expect(iron_mass(&DVector::from_element(16, 1.0), &block).unwrap() == 4.0, "mass of unit 4-pixel mask");
    expect(iron_mass(&DVector::zeros(16), &block).unwrap() == 0.0, "mass of zero image");

    // Tiny-lambda reconstruction of the planted 31 ug dot without background,
    // overdetermined so the minimizer is not a minimum-norm spread.
    let params = ScenarioParams {
        m: 300,
        drift: DriftKind::None,
        static_scale: 0.0,
        noise_rel: 0.0,
        frames: 1,
        pre_frames: 0,
        post_frames: 0,
        ..ScenarioParams::default()
    };
    let sc = Scenario::generate(&params).unwrap();
    let series = sc.series().unwrap();
    let cfg = ReconConfig {
        lambda_rel: 1e-6,
        solver: SolverChoice::Dense,
        ..ReconConfig::default()
    };
    let res = reconstruct_static(&sc.system, &series, &estimate(CVector::zeros(params.m)), &cfg).unwrap();
    let region = RegionSpec::central_block(params.grid_shape, 6, 1.0, params.pixel_volume).unwrap();
    let mass = iron_mass(&res.concentration(0), &region).unwrap();
    expect((29.45..=32.55).contains(&mass), &format!("dot mass {mass:.3} outside [29.45, 32.55]"));
    let truth_mass = iron_mass(&sc.true_concentration(1), &region).unwrap();
    expect((truth_mass - 31.0).abs() <= 1e-12 * 31.0, "ground-truth mass");

    let bg = RegionSpec::block((3, 3), (1, 1), (1, 1), 2.5, 1.0).unwrap();
    let mut img = DVector::zeros(9);
    img[4] = 7.0;
    expect(background_level(&img, &bg).unwrap() == 0.0, "eps of zero background");
    let mut img = DVector::from_element(9, 2.5);
    img[4] = 7.0;
    expect(background_level(&img, &bg).unwrap() == 1.0, "eps of background at c_ref");

    let mut rng = sim_rng(1010);
    let grid = (8, 8);
    let random_region = RegionSpec::block(grid, (2, 3), (3, 3), 0.7, 1.0).unwrap();
    let img = DVector::from_fn(64, |_, _| rng.random_range(-1.0..1.0));
    // Two-pass brute force: mean square over the complement, then root.
    let signal: Vec<usize> = (3..6).flat_map(|j| (2..5).map(move |i| i + 8 * j)).collect();
    let bgpix: Vec<usize> = (0..64).filter(|p| !signal.contains(p)).collect();
    let ms: f64 = bgpix.iter().map(|&p| img[p] * img[p]).sum::<f64>() / bgpix.len() as f64;
    let eps_brute = ms.sqrt() / 0.7;
    expect(
        (background_level(&img, &random_region).unwrap() - eps_brute).abs() <= 1e-12 * eps_brute,
        "eps vs brute force",
    );
    let peak = signal.iter().map(|&p| img[p].abs()).fold(0.0, f64::max);
    let snr_brute = peak / ms.sqrt();
    expect((snr(&img, &random_region).unwrap() - snr_brute).abs() <= 1e-12 * snr_brute, "snr vs brute force");

    let mut img = DVector::from_element(9, 2.0);
    img[4] = 10.0;
    expect(snr(&img, &bg).unwrap() == 5.0, "snr 10 over 2");
    expect(snr(&(&img * 3.25), &bg).unwrap() == 5.0, "snr scale invariance");

    expect(fwhm_profile(&[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap() == 1.0, "fwhm of a spike");
    expect(fwhm_profile(&[1.0; 7]).is_err(), "fwhm of a constant profile");
    let sigma = 2.0;
    let nx = 41;
    let gauss = DVector::from_fn(nx * 3, |p, _| {
        let x = (p % nx) as f64 - 20.0;
        let y = (p / nx) as f64 - 1.0;
        (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
    });
    let width = fwhm(&gauss, (nx, 3), 1.0).unwrap();
    let analytic = 2.0 * (2.0 * 2f64.ln()).sqrt() * sigma;
    expect((width - analytic).abs() <= 0.05, &format!("gaussian fwhm {width:.4} vs {analytic:.4}"));

    let detail = format!(
        "all metric examples; dot mass {mass:.3} ug, gaussian FWHM {width:.4} vs {analytic:.4} (+-0.05)"
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failed: {}", failures.join(", ")))
    }
}

// 11. Replay from a manifest and thread-count variation leave CSVs identical.
fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        simulation: Some(ScenarioParams {
            frames: 12,
            ..ScenarioParams::default()
        }),
        methods: vec![Method::Static, Method::Interp, Method::Joint],
        output: dir.path().join("a"),
        previews: false,
        ..ExperimentConfig::default()
    };
    let first = compare_methods(&cfg).unwrap();
    let replayed = replay(&dir.path().join("a/manifest.json"), Some(dir.path().join("b"))).unwrap();
    let threaded = compare_methods(&ExperimentConfig {
        threads: 4,
        output: dir.path().join("c"),
        ..cfg.clone()
    })
    .unwrap();
    let mut same = first.manifest.config_sha256 == replayed.config_sha256
        && first.manifest.config_sha256 == threaded.manifest.config_sha256;
    for name in ["metrics.csv", "compare.csv", "summary.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        let t = std::fs::read(dir.path().join("c").join(name)).unwrap();
        same &= a == b && a == t;
    }
    check(same, "replayed and 4-thread CSVs byte-identical to the 1-thread run".to_string())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 Kaczmarz matches dense oracle", criterion_1),
        ("2 dictionary orthonormality and Eckart-Young", criterion_2),
        ("3 unreduced and stacked objectives agree", criterion_3),
        ("4 beta limit equals static subtraction", criterion_4),
        ("5 coefficient norm monotone in beta", criterion_5),
        ("6 orthogonal decoupling", criterion_6),
        ("7 synthetic static-dot drift experiment", criterion_7),
        ("8 linear drift cancellation and joint vs interp", criterion_8),
        ("9 shifted-FoV optimality and Kaczmarz", criterion_9),
        ("10 metric examples", criterion_10),
        ("11 replay and thread determinism", criterion_11),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS - {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL - {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
