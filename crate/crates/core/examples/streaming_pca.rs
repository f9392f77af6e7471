//! Streaming PCA from Gaussian minibatches with Sanger's rule and with sequential OMM.

use omm::problems::{gaussian_stream, random_psd};
use omm::{fit_streaming, mode_cosine, NestingConfig, OptimizerConfig, Schedule, UpdateRule};

fn main() -> omm::Result<()> {
    let spectrum: Vec<f64> = (0..20).map(|i| 10.0 - 0.5 * i as f64).collect();
    let (cov, reference) = random_psd(20, &spectrum, 6)?;
    let steps = 50_000;
    let cfg = OptimizerConfig {
        rule: UpdateRule::adam(),
        lr: 0.003,
        schedule: Schedule::Cosine { total_steps: steps },
        max_steps: steps,
        trace_every: 5000,
        ..OptimizerConfig::default()
    };
    for (name, nesting) in [
        ("sanger", NestingConfig::sanger()),
        ("omm-seq", NestingConfig::sequential()),
    ] {
        let mut stream = gaussian_stream(&cov, 64, 1)?;
        let (v, trace) = fit_streaming(&mut stream, 4, &nesting, &cfg, None)?;
        for r in &trace.records {
            println!(
                "{name} step {:>6}: minibatch objective {:.4}",
                r.step, r.objective
            );
        }
        println!(
            "{name}: mean |cos| {:.5}",
            mode_cosine(&v, &reference)?.mean
        );
    }
    Ok(())
}
