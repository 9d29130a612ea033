//! Two frames taken with shifted fields of view share one background.
//!
//! ```bash
//! cargo run --example shifted_fov
//! ```

use mpijr::shifted::{reconstruct_shifted, shifted_system, ShiftOperator};
use mpijr::simkit::{gen_system_matrix, random_complex_matrix, PhantomSpec};
use mpijr::solver::SolverChoice;
use mpijr::{CVector, ReconConfig};
use num_complex::Complex64;

fn main() -> mpijr::Result<()> {
    let grid = (12, 12);
    let system = gen_system_matrix(4, 200, grid, 0.5, 1.0)?;
    let dot = PhantomSpec::static_dot((6, 5), 2, 10.0).concentration(grid, 1, 1.0, 1.0);
    let c = CVector::from_iterator(dot.len(), dot.iter().map(|&x| Complex64::new(x, 0.0)));

    let op1 = ShiftOperator::identity(grid)?;
    let op2 = ShiftOperator::new(grid, 2, 0)?;
    let b_est = random_complex_matrix(5, system.rows(), 1, 1.0).column(0).into_owned();
    let drift = random_complex_matrix(6, system.rows(), 1, 0.3).column(0).into_owned();
    let u1 = shifted_system(system.entries(), &op1)? * &c + &b_est + &drift;
    let u2 = shifted_system(system.entries(), &op2)? * &c + &b_est + &drift;

    let cfg = ReconConfig {
        lambda_rel: 1e-6,
        beta: 1e-6,
        solver: SolverChoice::Dense,
        ..ReconConfig::default()
    };
    let res = reconstruct_shifted(&system, &u1, &u2, &op1, &op2, &b_est, &cfg)?;
    let truth = nalgebra::DVector::from_vec(dot);
    println!("relative concentration error {:.2e}", (&res.concentration - &truth).norm() / truth.norm());
    println!("relative background error    {:.2e}", (&res.background - &drift).norm() / drift.norm());
    Ok(())
}
