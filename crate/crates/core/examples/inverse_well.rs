//! Lowest states of the 2D infinite well without ever inverting `H`: optimize `G` with `V = HG`
//! so that OMM on `H⁻¹` is evaluated from `HG` and `H²G` alone.

use omm::eval::eigenvalue_estimates;
use omm::optimize::fit_method;
use omm::problems::{schrodinger_fd, FdProblem};
use omm::{Method, OptimizerConfig, UpdateRule};

fn main() -> omm::Result<()> {
    let problem = FdProblem::infinite_well(40, 5.0);
    let fd = schrodinger_fd(&problem)?;
    let h = &fd.operator;
    let cfg = OptimizerConfig {
        rule: UpdateRule::Momentum { beta: 0.99 },
        lr: 2e-5,
        max_steps: 40_000,
        tolerance: Some(1e-14),
        trace_every: 1000,
        ..OptimizerConfig::default()
    };
    let (g, trace) = fit_method(h, 6, &Method::OmmInverse, &cfg, None)?;
    let v = h.apply_block(&g)?;
    let mut ritz = eigenvalue_estimates(h, &v)?;
    ritz.sort_by(f64::total_cmp);
    println!(
        "{:?} after {} steps",
        trace.status,
        trace.last().map_or(0, |r| r.step)
    );
    for (r, exact) in ritz.iter().zip(problem.analytic_eigenvalues(6)) {
        println!(
            "  E = {r:.5}  (ratio {:.3})  continuum {exact:.5}",
            r / ritz[0] * 2.0
        );
    }
    Ok(())
}
