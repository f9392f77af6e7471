//! Closed-form gradients against central differences, and Sanger's update against its
//! column-wise definition.

use nalgebra::DMatrix;
use omm::gradients::{finite_difference_check, lora_gradient, omm_gradient, sanger_pseudogradient};
use omm::objectives::{lora_objective, omm_objective};
use omm::SymmetricOperator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> omm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (d, k) = (8, 3);
    let m = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let a = SymmetricOperator::dense((&m + m.transpose()) * 0.5)?;
    let v = DMatrix::<f64>::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng)) * 0.5;

    for p in 1..=3 {
        let g = omm_gradient(&a, &v, p)?;
        let err = finite_difference_check(|x| omm_objective(&a, x, p).unwrap(), &g, &v, 1e-5);
        println!("OMM-{p}: max relative error {err:.2e}");
    }
    let g = lora_gradient(&a, &v)?;
    let err = finite_difference_check(|x| lora_objective(&a, x).unwrap(), &g, &v, 1e-5);
    println!("LoRA: max relative error {err:.2e}");

    let pseudo = sanger_pseudogradient(&a, &v)?;
    let av = a.apply_block(&v)?;
    let mut worst = 0.0f64;
    for i in 0..k {
        let mut update = av.column(i).into_owned();
        for j in 0..=i {
            update -= v.column(j) * v.column(j).dot(&av.column(i));
        }
        worst = worst.max((pseudo.value.column(i) + update).amax());
    }
    println!(
        "Sanger: pseudo-gradient = {}, deviation from the update rule {worst:.1e}",
        pseudo.pseudo
    );
    Ok(())
}
