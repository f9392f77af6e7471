//! OMM on an indefinite matrix can run off to −∞; shifting the spectrum fixes it.

use nalgebra::DMatrix;
use omm::optimize::shift_spectrum;
use omm::{fit_full_batch, NestingConfig, OptimizerConfig, SymmetricOperator};

fn main() -> omm::Result<()> {
    let a = SymmetricOperator::diagonal(&[1.0, -1.0])?;
    let init = DMatrix::from_column_slice(2, 1, &[0.1, 1.2]);
    let cfg = OptimizerConfig {
        lr: 0.1,
        max_steps: 500,
        ..OptimizerConfig::default()
    };
    let (_, trace) = fit_full_batch(&a, 1, &NestingConfig::unnested(1), &cfg, Some(&init))?;
    for r in &trace.records {
        println!("unshifted step {}: objective {:.4e}", r.step, r.objective);
    }
    println!("unshifted: {:?}", trace.status);

    let shifted = shift_spectrum(&a, 1.0)?;
    let (v, trace) = fit_full_batch(&shifted, 1, &NestingConfig::unnested(1), &cfg, Some(&init))?;
    println!(
        "shifted by 1: {:?} at step {}, v = ({:.6}, {:.6})",
        trace.status,
        trace.last().map_or(0, |r| r.step),
        v[0],
        v[1]
    );
    Ok(())
}
