//! Recover the top-5 eigenspace of a random 50 × 50 PSD matrix with OMM-1 and OMM-2.

use omm::eval::projector_error;
use omm::problems::{log_uniform_spectrum, random_psd};
use omm::{fit_full_batch, NestingConfig, OptimizerConfig, UpdateRule};

fn main() -> omm::Result<()> {
    let (d, k) = (50, 5);
    let spectrum = {
        let mut s = log_uniform_spectrum(d, 0.1, 10.0, 7);
        s.sort_by(|a, b| b.total_cmp(a));
        s
    };
    let (a, reference) = random_psd(d, &spectrum, 7)?;
    let target = -reference.top_sum(k);
    for (p, beta, steps) in [(1, 0.9, 20_000), (2, 0.99, 100_000)] {
        let cfg = OptimizerConfig {
            rule: UpdateRule::Momentum { beta },
            lr: 0.01,
            max_steps: steps,
            tolerance: Some(1e-14),
            trace_every: 1000,
            ..OptimizerConfig::default()
        };
        let (v, trace) = fit_full_batch(&a, k, &NestingConfig::unnested(p), &cfg, None)?;
        println!(
            "p={p}: objective {:.10} (optimum {target:.10}), projector error {:.2e}, {:?} after {} steps",
            trace.final_objective().unwrap_or(f64::NAN),
            projector_error(&v, &reference, k)?,
            trace.status,
            trace.last().map_or(0, |r| r.step),
        );
    }
    Ok(())
}
