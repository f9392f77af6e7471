//! Self-verification suites behind `omm check`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::gradients::{
    finite_difference_check, inverse_parameterized_gradient, lora_gradient, omm_gradient,
    omm_joint_gradient, omm_seq_gradient, sanger_pseudogradient,
};
use crate::linalg::{qr_orthonormalize, SymmetricOperator};
use crate::objectives::{
    inverse_parameterized_objective, lora_objective, omm_joint_objective, omm_objective,
    omm_objective_neumann_form, omm_regularized_objective,
};
use crate::problems::{log_uniform_spectrum, random_psd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
pub enum Suite {
    Grad,
    Forms,
    Identities,
    All,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// worst observed error
    pub value: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: value <= tolerance,
            value,
            tolerance,
        }
    }
}

/// Knobs for negative controls.
#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    pub seed: u64,
    /// Flip the sign of the OMM-1 gradient so `grad/omm-p1` must fail.
    pub inject_wrong_sign: bool,
}

const INSTANCES: usize = 20;
const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-5;

fn gaussian(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

struct Instance {
    op: SymmetricOperator,
    v: DMatrix<f64>,
}

/// PSD matrix with spectrum log-uniform in `[0.1, 10]` and a moderately scaled random basis.
fn instance(seed: u64, d: usize, k: usize) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (op, _) = random_psd(d, &log_uniform_spectrum(d, 0.1, 10.0, seed), seed)?;
    let v = gaussian(d, k, &mut rng) / (d as f64).sqrt();
    Ok(Instance { op, v })
}

fn dims(i: usize) -> (usize, usize) {
    (6 + i % 11, 1 + i % 4)
}

pub fn gradient_suite(opts: CheckOptions) -> Result<Vec<CheckResult>> {
    let mut worst = [0.0f64; 7];
    let sign = if opts.inject_wrong_sign { -1.0 } else { 1.0 };
    for i in 0..INSTANCES {
        let seed = opts.seed.wrapping_mul(1000).wrapping_add(i as u64);
        let (d, k) = dims(i);
        let Instance { op, v } = instance(seed, d, k)?;
        let fd = |f: &dyn Fn(&DMatrix<f64>) -> f64, g: &DMatrix<f64>, x: &DMatrix<f64>| {
            finite_difference_check(f, g, x, FD_STEP)
        };

        let g1 = omm_gradient(&op, &v, 1)? * sign;
        worst[0] = worst[0].max(fd(
            &|x| omm_objective(&op, x, 1).unwrap_or(f64::NAN),
            &g1,
            &v,
        ));
        let g2 = omm_gradient(&op, &v, 2)?;
        worst[1] = worst[1].max(fd(
            &|x| omm_objective(&op, x, 2).unwrap_or(f64::NAN),
            &g2,
            &v,
        ));

        // column i of the sequential gradient differentiates the prefix objective in v_i only
        let gs = omm_seq_gradient(&op, &v)?;
        for c in 0..k {
            let prefix = v.columns(0, c + 1).into_owned();
            let f = |x: &DMatrix<f64>| {
                let mut p = prefix.clone();
                p.set_column(c, &x.column(0));
                omm_objective(&op, &p, 1).unwrap_or(f64::NAN)
            };
            let col = gs.columns(c, 1).into_owned();
            worst[2] = worst[2].max(fd(&f, &col, &v.columns(c, 1).into_owned()));
        }

        let alpha: Vec<f64> = (0..k).map(|j| 1.0 + j as f64).collect();
        let gj = omm_joint_gradient(&op, &v, &alpha)?;
        worst[3] = worst[3].max(fd(
            &|x| omm_joint_objective(&op, x, &alpha).unwrap_or(f64::NAN),
            &gj,
            &v,
        ));

        let gl = lora_gradient(&op, &v)?;
        worst[4] = worst[4].max(fd(&|x| lora_objective(&op, x).unwrap_or(f64::NAN), &gl, &v));

        let l = op.clone().shifted(1.0);
        let g = &v * 0.5;
        let gi = inverse_parameterized_gradient(&l, &g)?;
        worst[5] = worst[5].max(fd(
            &|x| inverse_parameterized_objective(&l, x).unwrap_or(f64::NAN),
            &gi,
            &g,
        ));

        // Sanger is not a gradient; compare with the explicit projected update instead
        let a = op.to_dense();
        let sanger = sanger_pseudogradient(&op, &v)?.value;
        for c in 0..k {
            let p = v.columns(0, c + 1);
            let proj = DMatrix::<f64>::identity(d, d) - p * p.transpose();
            let want = -(&proj * &a * v.column(c));
            let err = (sanger.column(c) - &want).amax() / want.amax().max(1.0);
            worst[6] = worst[6].max(err);
        }
    }
    Ok(vec![
        CheckResult::new("grad/omm-p1", worst[0], FD_TOL),
        CheckResult::new("grad/omm-p2", worst[1], FD_TOL),
        CheckResult::new("grad/omm-seq", worst[2], FD_TOL),
        CheckResult::new("grad/omm-jnt", worst[3], FD_TOL),
        CheckResult::new("grad/lora", worst[4], FD_TOL),
        CheckResult::new("grad/omm-inverse", worst[5], FD_TOL),
        CheckResult::new("grad/sanger-update", worst[6], 1e-12),
    ])
}

pub fn forms_suite(opts: CheckOptions) -> Result<Vec<CheckResult>> {
    let mut worst = [0.0f64; 3];
    for i in 0..100 {
        let seed = opts.seed.wrapping_mul(1000).wrapping_add(500 + i as u64);
        let (d, k) = dims(i);
        let Instance { op, v } = instance(seed, d, k)?;
        for p in 1..=3 {
            let a = omm_objective(&op, &v, p)?;
            let b = omm_objective_neumann_form(&op, &v, p)?;
            worst[p - 1] = worst[p - 1].max((a - b).abs() / (1.0 + a.abs()));
        }
    }
    Ok((1..=3)
        .map(|p| CheckResult::new(&format!("forms/p{p}"), worst[p - 1], 1e-10))
        .collect())
}

pub fn identities_suite(opts: CheckOptions) -> Result<Vec<CheckResult>> {
    let mut identity = [0.0f64; 2];
    let mut reduction = [0.0f64; 2];
    let mut shift = 0.0f64;
    let mut pca = 0.0f64;
    for i in 0..INSTANCES {
        let seed = opts.seed.wrapping_mul(1000).wrapping_add(900 + i as u64);
        let (d, k) = dims(i);
        let Instance { op, v } = instance(seed, d, k)?;
        let a = op.to_dense();
        let q = qr_orthonormalize(&v)?;
        let r = DMatrix::<f64>::identity(d, d) - &q * q.transpose();
        for p in 2..=3 {
            let g = omm_gradient(&op, &q, p)?;
            let c = (2 * p - 2) as f64;
            let full = (&r * &a + &a * &r + &r * &a * &r * c) * &q * -2.0;
            let reduced = &r * &a * &q * -2.0;
            let scale = g.norm().max(1.0);
            identity[p - 2] = identity[p - 2].max((&g - full).norm() / scale);
            reduction[p - 2] = reduction[p - 2].max((&g - reduced).norm() / scale);
        }

        // regularization by κ‖VᵀV − I‖² equals the κ-shift up to the constant κk
        for kappa in [0.5, 2.0] {
            let shifted = op.clone().shifted(kappa);
            let diff = omm_regularized_objective(&op, &v, kappa)? - omm_objective(&shifted, &v, 1)?;
            shift = shift.max((diff - kappa * k as f64).abs());
        }

        // tr((I − VVᵀ)² Σ) = mean ‖x − VVᵀx‖² for the empirical covariance Σ
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(d, 200, &mut rng);
        let cov = &x * x.transpose() / 200.0;
        let res = (DMatrix::<f64>::identity(d, d) - &q * q.transpose()) * &x;
        let mean_sq = res.norm_squared() / 200.0;
        let lhs = omm_objective(&SymmetricOperator::dense(cov.clone())?, &q, 1)? + cov.trace();
        pca = pca.max((lhs - mean_sq).abs() / mean_sq.abs().max(1e-300));
    }
    Ok(vec![
        CheckResult::new("identities/orthonormal-gradient-p2", identity[0], 1e-10),
        CheckResult::new("identities/orthonormal-gradient-p3", identity[1], 1e-10),
        CheckResult::new("identities/reduction-p2", reduction[0], 1e-10),
        CheckResult::new("identities/reduction-p3", reduction[1], 1e-10),
        CheckResult::new("identities/regularization-shift", shift, 1e-10),
        CheckResult::new("identities/pca-reconstruction", pca, 1e-10),
    ])
}

pub fn run_suite(suite: Suite, opts: CheckOptions) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Grad | Suite::All) {
        out.extend(gradient_suite(opts)?);
    }
    if matches!(suite, Suite::Forms | Suite::All) {
        out.extend(forms_suite(opts)?);
    }
    if matches!(suite, Suite::Identities | Suite::All) {
        out.extend(identities_suite(opts)?);
    }
    Ok(out)
}
