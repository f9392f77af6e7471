//! Bound states of the 2D hydrogen atom on a finite-difference grid. The solver sees
//! `−H + κI`, whose top eigenvectors are the lowest states of `H`.

use omm::eval::eigenvalue_estimates;
use omm::problems::{schrodinger_fd, FdProblem};
use omm::{fit_full_batch, NestingConfig, OptimizerConfig, UpdateRule};

fn main() -> omm::Result<()> {
    let n = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(64);
    let problem = FdProblem::hydrogen(n);
    let fd = schrodinger_fd(&problem)?;
    let cfg = OptimizerConfig {
        rule: UpdateRule::Momentum { beta: 0.9 },
        lr: 2e-3,
        max_steps: 40_000,
        trace_every: 1000,
        ..OptimizerConfig::default()
    };
    let (v, trace) = fit_full_batch(&fd.operator, 6, &NestingConfig::unnested(1), &cfg, None)?;
    println!(
        "n={n}, h={:.4}, shift κ={:.2}, {:?}",
        fd.spacing, fd.shift, trace.status
    );
    let ritz = eigenvalue_estimates(&fd.operator, &v)?;
    for (r, exact) in ritz.iter().zip(problem.analytic_eigenvalues(6)) {
        println!("  −E = {:>9.5}   continuum {exact:.5}", r - fd.shift);
    }
    Ok(())
}
