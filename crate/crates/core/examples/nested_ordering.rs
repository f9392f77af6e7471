//! Sequential and joint nesting recover the individual eigenvectors in order, not just the span.

use omm::problems::random_psd;
use omm::{fit_full_batch, mode_cosine, NestingConfig, OptimizerConfig};

fn main() -> omm::Result<()> {
    let spectrum: Vec<f64> = (1..=30).rev().map(f64::from).collect();
    let (a, reference) = random_psd(30, &spectrum, 5)?;
    let cfg = OptimizerConfig {
        lr: 0.005,
        max_steps: 20_000,
        trace_every: 1000,
        ..OptimizerConfig::default()
    };
    for (name, nesting) in [
        ("unnested", NestingConfig::unnested(1)),
        ("sequential", NestingConfig::sequential()),
        ("joint", NestingConfig::joint(None)),
    ] {
        let (v, _) = fit_full_batch(&a, 8, &nesting, &cfg, None)?;
        let cos = mode_cosine(&v, &reference)?;
        let shown: Vec<String> = cos.per_mode.iter().map(|c| format!("{c:.4}")).collect();
        println!("{name:>10}: |cos| per mode [{}]", shown.join(", "));
    }
    Ok(())
}
