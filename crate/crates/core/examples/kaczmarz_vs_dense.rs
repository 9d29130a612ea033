//! Regularized Kaczmarz against the dense QR solve, including the slow
//! convergence at very small background weights.
//!
//! ```bash
//! cargo run --release --example kaczmarz_vs_dense
//! ```

use mpijr::dictionary::build_dictionary;
use mpijr::hstack;
use mpijr::recon::lambda_from_relative;
use mpijr::scenario::{Scenario, ScenarioParams};
use mpijr::simkit::random_complex_matrix;
use mpijr::solver::{dense_solve, kaczmarz_solve, TikhonovProblem};

fn main() -> mpijr::Result<()> {
    let a = random_complex_matrix(1, 20, 12, 1.0);
    let w = random_complex_matrix(2, 20, 1, 1.0).column(0).into_owned();
    let p = TikhonovProblem::new(a, w, TikhonovProblem::block_weights(8, 4.0, 4, 2.0))?;
    let exact = dense_solve(&p)?;
    for sweeps in [5, 20, 200] {
        let y = kaczmarz_solve(&p, sweeps)?.solution;
        println!("random 20x12, {sweeps:>4} sweeps: rel. error {:.2e}", (&y - &exact).norm() / exact.norm());
    }

    // One frame of the drift scenario with Q = 2 and beta = 0.2^10.
    let sc = Scenario::generate(&ScenarioParams {
        frames: 1,
        ..ScenarioParams::default()
    })?;
    let dict = build_dictionary(&sc.archive, 2)?;
    let lambda = lambda_from_relative(&sc.system, 1.0);
    let n = sc.system.cols();
    let a = hstack(sc.system.entries(), dict.basis())?;
    let r = sc.series()?.frame(0) - sc.u_pre();
    for beta in [1e-1, 0.2f64.powi(10)] {
        let p = TikhonovProblem::new(a.clone(), r.clone(), TikhonovProblem::block_weights(n, lambda, 2, beta))?;
        let exact = dense_solve(&p)?;
        let c_exact = exact.rows(0, n).norm();
        for sweeps in [20, 200] {
            let y = kaczmarz_solve(&p, sweeps)?.solution;
            println!(
                "scenario beta {beta:.1e}, {sweeps:>4} sweeps: ||c|| = {:.3e} (exact {c_exact:.3e})",
                y.rows(0, n).norm()
            );
        }
    }
    Ok(())
}
