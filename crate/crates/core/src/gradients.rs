//! Closed-form gradients for every objective and nesting mode, and a finite-difference checker.
//!
//! Nested variants are written as explicit masked products of the `k × k` moments rather than
//! through an autodiff tape: the sequential gradient uses upper-triangular masks (column `i`
//! only sees the prefix `v_1..v_i`) and the joint gradient uses the cumulative-weight mask `P`.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_rows, Error, Result};
use crate::linalg::{BlockOperator, MomentPair};
use crate::objectives::{joint_from_moments, omm_from_moments, InverseParts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NestingMode {
    #[default]
    None,
    Joint,
    Sequential,
    Sanger,
}

/// How the `k` columns are coupled. `order` is the OMM order `p`; only `NestingMode::None`
/// accepts `p > 1`. `weights` are the joint weights `α` (uniform `1/k` when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestingConfig {
    pub mode: NestingMode,
    pub weights: Option<Vec<f64>>,
    pub order: usize,
}

impl Default for NestingConfig {
    fn default() -> Self {
        Self {
            mode: NestingMode::None,
            weights: None,
            order: 1,
        }
    }
}

impl NestingConfig {
    pub fn unnested(p: usize) -> Self {
        Self {
            order: p,
            ..Self::default()
        }
    }

    pub fn joint(weights: Option<Vec<f64>>) -> Self {
        Self {
            mode: NestingMode::Joint,
            weights,
            order: 1,
        }
    }

    pub fn sequential() -> Self {
        Self {
            mode: NestingMode::Sequential,
            ..Self::default()
        }
    }

    pub fn sanger() -> Self {
        Self {
            mode: NestingMode::Sanger,
            ..Self::default()
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidNesting("order p must be at least 1".into()));
        }
        if self.order > 1 && self.mode != NestingMode::None {
            return Err(Error::InvalidNesting(format!(
                "order p = {} is only supported without nesting ({:?} requires p = 1)",
                self.order, self.mode
            )));
        }
        if let Some(w) = &self.weights {
            if self.mode != NestingMode::Joint {
                return Err(Error::InvalidNesting(
                    "weights are only used by joint nesting".into(),
                ));
            }
            if w.len() != k {
                return Err(Error::InvalidNesting(format!(
                    "expected {k} weights, got {}",
                    w.len()
                )));
            }
            cumulative_weights(w)?;
        }
        Ok(())
    }

    /// Joint weights for `k` columns, uniform `1/k` by default.
    pub fn weights_for(&self, k: usize) -> Vec<f64> {
        self.weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / k as f64; k])
    }
}

/// `m_i = Σ_{j ≥ i} α_j`. Weights must be finite and strictly positive.
pub fn cumulative_weights(alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::InvalidNesting("joint weights are empty".into()));
    }
    if let Some(bad) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::InvalidNesting(format!(
            "joint weights must be positive, got {bad}"
        )));
    }
    let mut m = alpha.to_vec();
    for i in (0..m.len() - 1).rev() {
        m[i] += m[i + 1];
    }
    Ok(m)
}

/// Joint-nesting mask `P_ij = m_{max(i, j)}`.
pub fn joint_mask(alpha: &[f64]) -> Result<DMatrix<f64>> {
    let m = cumulative_weights(alpha)?;
    let k = m.len();
    Ok(DMatrix::from_fn(k, k, |i, j| m[i.max(j)]))
}

/// A descent direction. `pseudo` marks directions that are not the gradient of any function
/// (Sanger's rule); optimizers treat both kinds the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub value: DMatrix<f64>,
    pub pseudo: bool,
}

impl Gradient {
    fn exact(value: DMatrix<f64>) -> Self {
        Self {
            value,
            pseudo: false,
        }
    }

    pub fn norm(&self) -> f64 {
        self.value.norm()
    }
}

fn finite(g: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if g.iter().all(|x| x.is_finite()) {
        Ok(g)
    } else {
        Err(Error::NonFinite(what))
    }
}

fn upper(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.upper_triangle()
}

/// `−2 Σ_{i<2p} Rⁱ A R^{2p−1−i} V` with `R = I − VVᵀ`, using `R^m V = V (I − S)^m` and a
/// Horner sweep of rank-`k` updates `RY = Y − V(VᵀY)`.
pub(crate) fn omm_gradient_from(
    v: &DMatrix<f64>,
    av: &DMatrix<f64>,
    overlap: &DMatrix<f64>,
    p: usize,
) -> DMatrix<f64> {
    let k = overlap.nrows();
    let n = 2 * p;
    let residual = DMatrix::<f64>::identity(k, k) - overlap;
    // z[j] = AV (I − S)^j
    let mut z = Vec::with_capacity(n);
    z.push(av.clone());
    for j in 1..n {
        let next = &z[j - 1] * &residual;
        z.push(next);
    }
    // term i uses z[n − 1 − i]; fold from the innermost power of R outward
    let mut acc = z[0].clone();
    for zi in z.iter().skip(1) {
        let vt_acc = v.tr_mul(&acc);
        acc = zi + (&acc - v * vt_acc);
    }
    acc * -2.0
}

pub(crate) fn seq_gradient_from(
    v: &DMatrix<f64>,
    av: &DMatrix<f64>,
    m: &MomentPair,
) -> DMatrix<f64> {
    av * -4.0 + v * upper(&m.projected) * 2.0 + av * upper(&m.overlap) * 2.0
}

pub(crate) fn joint_gradient_from(
    v: &DMatrix<f64>,
    av: &DMatrix<f64>,
    m: &MomentPair,
    mask: &DMatrix<f64>,
) -> DMatrix<f64> {
    let cum = DMatrix::from_diagonal(&mask.diagonal());
    av * cum * -4.0
        + v * mask.component_mul(&m.projected) * 2.0
        + av * mask.component_mul(&m.overlap) * 2.0
}

pub(crate) fn sanger_from(v: &DMatrix<f64>, av: &DMatrix<f64>, m: &MomentPair) -> DMatrix<f64> {
    v * upper(&m.projected) - av
}

fn blocks<O: BlockOperator + ?Sized>(
    op: &O,
    v: &DMatrix<f64>,
    context: &'static str,
) -> Result<(DMatrix<f64>, MomentPair)> {
    check_rows(context, op.dim(), v.nrows())?;
    let av = op.apply_block(v)?;
    let m = MomentPair::from_blocks(v, &av);
    Ok((av, m))
}

pub fn omm_gradient<O: BlockOperator + ?Sized>(
    op: &O,
    v: &DMatrix<f64>,
    p: usize,
) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::InvalidParameter(
            "OMM order p must be at least 1".into(),
        ));
    }
    let (av, m) = blocks(op, v, "omm_gradient")?;
    finite(omm_gradient_from(v, &av, &m.overlap, p), "omm_gradient")
}

/// Sequentially nested OMM-1 gradient. Column `i` is the gradient of the prefix objective
/// `L(V_{1:i})` with respect to `v_i` alone: `−4AV + 2V·triu(VᵀAV) + 2AV·triu(VᵀV)`.
pub fn omm_seq_gradient<O: BlockOperator + ?Sized>(
    op: &O,
    v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (av, m) = blocks(op, v, "omm_seq_gradient")?;
    finite(seq_gradient_from(v, &av, &m), "omm_seq_gradient")
}

/// Gradient of `Σ_i α_i L(V_{1:i})`: `−4AV·diag(m) + 2V(P∘T) + 2AV(P∘S)`.
pub fn omm_joint_gradient<O: BlockOperator + ?Sized>(
    op: &O,
    v: &DMatrix<f64>,
    alpha: &[f64],
) -> Result<DMatrix<f64>> {
    let mask = joint_mask(alpha)?;
    if mask.nrows() != v.ncols() {
        return Err(Error::InvalidNesting(format!(
            "expected {} weights, got {}",
            v.ncols(),
            mask.nrows()
        )));
    }
    let (av, m) = blocks(op, v, "omm_joint_gradient")?;
    finite(joint_gradient_from(v, &av, &m, &mask), "omm_joint_gradient")
}

/// Negated Sanger (generalized Hebbian) update: column `i` is `−(I − V_{1:i}V_{1:i}ᵀ)Av_i`.
/// Not the gradient of any function.
pub fn sanger_pseudogradient<O: BlockOperator + ?Sized>(
    op: &O,
    v: &DMatrix<f64>,
) -> Result<Gradient> {
    let (av, m) = blocks(op, v, "sanger_pseudogradient")?;
    Ok(Gradient {
        value: finite(sanger_from(v, &av, &m), "sanger_pseudogradient")?,
        pseudo: true,
    })
}

/// `−4AV + 4V(VᵀV)`
pub fn lora_gradient<O: BlockOperator + ?Sized>(op: &O, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (av, m) = blocks(op, v, "lora_gradient")?;
    finite(av * -4.0 + v * &m.overlap * 4.0, "lora_gradient")
}

/// Gradient of `−2tr(GᵀLG) + tr((GᵀL²G)(GᵀLG))` in `G`: `−4LG + 2L²G(GᵀLG) + 2LG(GᵀL²G)`.
pub fn inverse_parameterized_gradient<O: BlockOperator + ?Sized>(
    l: &O,
    g: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let parts = InverseParts::new(l, g)?;
    finite(
        inverse_gradient_from(&parts),
        "inverse_parameterized_gradient",
    )
}

pub(crate) fn inverse_gradient_from(parts: &InverseParts) -> DMatrix<f64> {
    &parts.lg * -4.0 + &parts.l2g * &parts.projected * 2.0 + &parts.lg * &parts.overlap * 2.0
}

/// Objective value and descent direction for one nesting configuration, sharing a single
/// operator application. Sequential and Sanger runs report the unnested OMM-1 value.
pub fn objective_and_gradient<O: BlockOperator + ?Sized>(
    op: &O,
    v: &DMatrix<f64>,
    nesting: &NestingConfig,
) -> Result<(f64, Gradient)> {
    nesting.validate(v.ncols())?;
    let (av, m) = blocks(op, v, "objective_and_gradient")?;
    let (value, grad) = match nesting.mode {
        NestingMode::None => (
            omm_from_moments(&m, nesting.order),
            Gradient::exact(omm_gradient_from(v, &av, &m.overlap, nesting.order)),
        ),
        NestingMode::Joint => {
            let mask = joint_mask(&nesting.weights_for(v.ncols()))?;
            (
                joint_from_moments(&m, &mask),
                Gradient::exact(joint_gradient_from(v, &av, &m, &mask)),
            )
        }
        NestingMode::Sequential => (
            omm_from_moments(&m, 1),
            Gradient::exact(seq_gradient_from(v, &av, &m)),
        ),
        NestingMode::Sanger => (
            omm_from_moments(&m, 1),
            Gradient {
                value: sanger_from(v, &av, &m),
                pseudo: true,
            },
        ),
    };
    Ok((value, grad))
}

/// Entries probed by [`finite_difference_check`] when `d·k` exceeds this.
pub const FD_FULL_LIMIT: usize = 512;
/// Size of the seeded random subset probed for larger matrices.
pub const FD_SUBSET: usize = 64;

/// Max relative error between `gradient` and central differences of `objective` at `v`,
/// with denominator `max(|analytic|, |numeric|, 1e-8)`. `step` is clamped to `[1e-7, 1e-3]`.
/// Every entry is probed when `d·k ≤ 512`, otherwise a fixed-seed subset of 64 entries.
pub fn finite_difference_check<F>(
    objective: F,
    gradient: &DMatrix<f64>,
    v: &DMatrix<f64>,
    step: f64,
) -> f64
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    let h = step.clamp(1e-7, 1e-3);
    let n = v.len();
    let entries: Vec<usize> = if n <= FD_FULL_LIMIT {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0FD0);
        let mut idx = sample(&mut rng, n, FD_SUBSET).into_vec();
        idx.sort_unstable();
        idx
    };
    let mut probe = v.clone();
    let mut worst = 0.0f64;
    for e in entries {
        let x = v[e];
        probe[e] = x + h;
        let fp = objective(&probe);
        probe[e] = x - h;
        let fm = objective(&probe);
        probe[e] = x;
        let numeric = (fp - fm) / (2.0 * h);
        let analytic = gradient[e];
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        let err = (analytic - numeric).abs() / denom;
        worst = if err.is_nan() {
            f64::INFINITY
        } else {
            worst.max(err)
        };
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{qr_orthonormalize, SymmetricOperator};
    use crate::objectives::{
        inverse_parameterized_objective, lora_objective, omm_joint_objective, omm_objective,
    };
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    fn random_psd(d: usize, rng: &mut ChaCha8Rng) -> SymmetricOperator {
        let g = gaussian(d, d, rng);
        SymmetricOperator::dense(&g * g.transpose() / d as f64).unwrap()
    }

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1.0)
    }

    fn diag321() -> SymmetricOperator {
        SymmetricOperator::diagonal(&[3.0, 2.0, 1.0]).unwrap()
    }

    /// `−2 Σ_i Rⁱ A R^{2p−1−i} V` with `R` formed explicitly.
    fn dense_gradient_oracle(a: &DMatrix<f64>, v: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
        let d = a.nrows();
        let r = DMatrix::<f64>::identity(d, d) - v * v.transpose();
        let pow = |m: usize| (0..m).fold(DMatrix::<f64>::identity(d, d), |acc, _| acc * &r);
        let mut sum = DMatrix::<f64>::zeros(d, d);
        for i in 0..2 * p {
            sum += pow(i) * a * pow(2 * p - 1 - i);
        }
        sum * v * -2.0
    }

    #[test]
    fn mask_and_cumulative_weights() {
        let third = 1.0 / 3.0;
        let m = cumulative_weights(&[third; 3]).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-15 && (m[1] - 2.0 / 3.0).abs() < 1e-15 && m[2] == third);
        let p = joint_mask(&[third; 3]).unwrap();
        let want = DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0,
                2.0 / 3.0,
                third,
                2.0 / 3.0,
                2.0 / 3.0,
                third,
                third,
                third,
                third,
            ],
        );
        assert!((p - want).amax() < 1e-15);
        assert!(cumulative_weights(&[1.0, 0.0]).is_err());
        assert!(cumulative_weights(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn nesting_validation() {
        assert!(NestingConfig::unnested(3).validate(2).is_ok());
        let mut c = NestingConfig::sequential();
        c.order = 2;
        assert!(matches!(c.validate(2), Err(Error::InvalidNesting(_))));
        let mut j = NestingConfig::joint(Some(vec![1.0, 1.0]));
        assert!(j.validate(2).is_ok());
        assert!(j.validate(3).is_err());
        j.order = 2;
        assert!(j.validate(2).is_err());
        assert!(NestingConfig::unnested(0).validate(1).is_err());
        assert_eq!(NestingConfig::joint(None).weights_for(4), vec![0.25; 4]);
    }

    #[test]
    fn stationary_at_top_eigenvectors() {
        let v = DMatrix::identity(3, 2);
        for p in 1..=3 {
            assert_eq!(omm_gradient(&diag321(), &v, p).unwrap().amax(), 0.0);
        }
        assert_eq!(omm_seq_gradient(&diag321(), &v).unwrap().amax(), 0.0);
        assert_eq!(
            omm_joint_gradient(&diag321(), &v, &[0.5, 0.5])
                .unwrap()
                .amax(),
            0.0
        );
        assert_eq!(
            sanger_pseudogradient(&diag321(), &v.columns(0, 1).into_owned())
                .unwrap()
                .value
                .amax(),
            0.0
        );
    }

    #[test]
    fn hand_case_matches_dense_formula() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
        let op = SymmetricOperator::dense(a.clone()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = DMatrix::from_column_slice(2, 1, &[s, s]);
        let got = omm_gradient(&op, &v, 1).unwrap();
        assert!(close(&got, &dense_gradient_oracle(&a, &v, 1), 1e-14));
        // RAV = (1, −1)/√2 and ARV = 0, so the gradient is −2(1, −1)/√2
        assert!((got[(0, 0)] + 2.0 * s).abs() < 1e-14 && (got[(1, 0)] - 2.0 * s).abs() < 1e-14);
    }

    #[test]
    fn horner_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for p in 1..=3 {
            let op = random_psd(9, &mut rng);
            let v = gaussian(9, 3, &mut rng) * 0.4;
            let got = omm_gradient(&op, &v, p).unwrap();
            assert!(
                close(&got, &dense_gradient_oracle(&op.to_dense(), &v, p), 1e-12),
                "p={p}"
            );
        }
    }

    #[test]
    fn finite_differences_for_every_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let op = random_psd(10, &mut rng);
        let v = gaussian(10, 3, &mut rng) * 0.5;
        for p in 1..=2 {
            let g = omm_gradient(&op, &v, p).unwrap();
            let err = finite_difference_check(|x| omm_objective(&op, x, p).unwrap(), &g, &v, 1e-5);
            assert!(err <= 1e-5, "p={p}: {err}");
        }
        let g = lora_gradient(&op, &v).unwrap();
        assert!(finite_difference_check(|x| lora_objective(&op, x).unwrap(), &g, &v, 1e-5) <= 1e-5);
        let alpha = [0.5, 0.3, 0.2];
        let g = omm_joint_gradient(&op, &v, &alpha).unwrap();
        let err = finite_difference_check(
            |x| omm_joint_objective(&op, x, &alpha).unwrap(),
            &g,
            &v,
            1e-5,
        );
        assert!(err <= 1e-5);

        let b = gaussian(8, 8, &mut rng);
        let l =
            SymmetricOperator::dense(&b * b.transpose() / 8.0 + DMatrix::identity(8, 8)).unwrap();
        let g0 = gaussian(8, 2, &mut rng) * 0.3;
        let g = inverse_parameterized_gradient(&l, &g0).unwrap();
        let err = finite_difference_check(
            |x| inverse_parameterized_objective(&l, x).unwrap(),
            &g,
            &g0,
            1e-5,
        );
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn sequential_columns_are_prefix_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let op = random_psd(8, &mut rng);
        let v = gaussian(8, 3, &mut rng) * 0.5;
        let g = omm_seq_gradient(&op, &v).unwrap();
        for i in 0..3 {
            let prefix = v.columns(0, i + 1).into_owned();
            let col = g.columns(i, 1).into_owned();
            let obj = |x: &DMatrix<f64>| {
                let mut pv = prefix.clone();
                pv.set_column(i, &x.column(0));
                omm_objective(&op, &pv, 1).unwrap()
            };
            let err = finite_difference_check(obj, &col, &prefix.columns(i, 1).into_owned(), 1e-5);
            assert!(err <= 1e-5, "column {i}: {err}");
        }
    }

    #[test]
    fn sequential_single_column_equals_unnested() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let op = random_psd(6, &mut rng);
        let v = gaussian(6, 1, &mut rng);
        assert!(close(
            &omm_seq_gradient(&op, &v).unwrap(),
            &omm_gradient(&op, &v, 1).unwrap(),
            1e-14
        ));
        let j = omm_joint_gradient(&op, &v, &[0.7]).unwrap();
        assert!(close(&j, &(omm_gradient(&op, &v, 1).unwrap() * 0.7), 1e-14));
    }

    #[test]
    fn sequential_prefix_causality() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let op = random_psd(7, &mut rng);
        let v = gaussian(7, 3, &mut rng);
        let mut w = v.clone();
        w.columns_mut(1, 2).copy_from(&gaussian(7, 2, &mut rng));
        let a = omm_seq_gradient(&op, &v).unwrap();
        let b = omm_seq_gradient(&op, &w).unwrap();
        assert!((a.column(0) - b.column(0)).amax() < 1e-14);
    }

    #[test]
    fn joint_equals_weighted_prefix_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let op = random_psd(9, &mut rng);
        let v = gaussian(9, 4, &mut rng) * 0.5;
        let alpha = [0.1, 0.4, 0.2, 0.3];
        let mut want = DMatrix::zeros(9, 4);
        for i in 1..=4 {
            let g = omm_gradient(&op, &v.columns(0, i).into_owned(), 1).unwrap();
            let mut block = want.columns_mut(0, i);
            block += g * alpha[i - 1];
        }
        assert!(close(
            &omm_joint_gradient(&op, &v, &alpha).unwrap(),
            &want,
            1e-10
        ));
    }

    #[test]
    fn joint_with_last_weight_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let op = random_psd(6, &mut rng);
        let v = gaussian(6, 3, &mut rng);
        // weights must be positive, so approach e_k with vanishing leading weights
        let tiny = 1e-300;
        let g = omm_joint_gradient(&op, &v, &[tiny, tiny, 2.0]).unwrap();
        assert!(close(&g, &(omm_gradient(&op, &v, 1).unwrap() * 2.0), 1e-12));
    }

    #[test]
    fn sanger_examples() {
        let op = SymmetricOperator::diagonal(&[3.0, 1.0]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = DMatrix::from_column_slice(2, 1, &[s, s]);
        let g = sanger_pseudogradient(&op, &v).unwrap();
        assert!(g.pseudo);
        assert!((g.value[(0, 0)] + s).abs() < 1e-15 && (g.value[(1, 0)] - s).abs() < 1e-15);

        let v = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert_eq!(
            sanger_pseudogradient(&diag321(), &v).unwrap().value.amax(),
            0.0
        );
    }

    #[test]
    fn sequential_is_symmetrized_sanger() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let a = random_psd(7, &mut rng);
        let ad = a.to_dense();
        let v = gaussian(7, 3, &mut rng);
        let seq = omm_seq_gradient(&a, &v).unwrap();
        let sanger = sanger_pseudogradient(&a, &v).unwrap().value;
        for i in 0..3 {
            let p = v.columns(0, i + 1);
            let r = DMatrix::<f64>::identity(7, 7) - p * p.transpose();
            let vi = v.column(i);
            let sanger_term = &r * &ad * vi;
            let partner = &ad * &r * vi;
            assert!((sanger.column(i) + &sanger_term).amax() < 1e-12);
            assert!((seq.column(i) + (sanger_term + partner) * 2.0).amax() < 1e-12);
        }
    }

    #[test]
    fn lora_and_inverse_trivial_points() {
        let v = DMatrix::from_column_slice(3, 1, &[3f64.sqrt(), 0.0, 0.0]);
        assert!(lora_gradient(&diag321(), &v).unwrap().amax() < 1e-14);
        assert_eq!(
            lora_gradient(&diag321(), &DMatrix::zeros(3, 2))
                .unwrap()
                .amax(),
            0.0
        );

        let l = SymmetricOperator::diagonal(&[2.0, 4.0, 5.0]).unwrap();
        // g_i = φ_i / λ_i for the two smallest eigenvalues of L
        let g = DMatrix::from_column_slice(3, 2, &[0.5, 0.0, 0.0, 0.0, 0.25, 0.0]);
        assert!(inverse_parameterized_gradient(&l, &g).unwrap().amax() < 1e-10);
        assert_eq!(
            inverse_parameterized_gradient(&l, &DMatrix::zeros(3, 2))
                .unwrap()
                .amax(),
            0.0
        );
    }

    #[test]
    fn orthonormal_identity_and_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let op = random_psd(10, &mut rng);
        let a = op.to_dense();
        let v = qr_orthonormalize(&gaussian(10, 3, &mut rng)).unwrap();
        let r = DMatrix::<f64>::identity(10, 10) - &v * v.transpose();
        for p in 2..=3 {
            let g = omm_gradient(&op, &v, p).unwrap();
            let c = (2 * p - 2) as f64;
            let identity = (&r * &a + &a * &r + &r * &a * &r * c) * &v * -2.0;
            let reduced = &r * &a * &v * -2.0;
            assert!(close(&g, &identity, 1e-10));
            assert!(close(&g, &reduced, 1e-10));
        }
    }

    #[test]
    fn fd_checker_on_quadratic() {
        // f(X) = ½ tr(XᵀMX) with symmetric M has gradient MX
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let b = gaussian(5, 5, &mut rng);
        let m = &b + b.transpose();
        let x = gaussian(5, 2, &mut rng);
        let g = &m * &x;
        let err = finite_difference_check(|y| 0.5 * (y.transpose() * &m * y).trace(), &g, &x, 1e-4);
        assert!(err <= 1e-9, "{err}");
        let wrong = &g * -1.0;
        assert!(
            finite_difference_check(|y| 0.5 * (y.transpose() * &m * y).trace(), &wrong, &x, 1e-4)
                > 1.0
        );
    }

    #[test]
    fn fd_checker_subsamples_large_inputs() {
        let x = DMatrix::from_element(300, 2, 1.0);
        let calls = std::cell::Cell::new(0usize);
        let g = &x * 2.0;
        let err = finite_difference_check(
            |y| {
                calls.set(calls.get() + 1);
                y.norm_squared()
            },
            &g,
            &x,
            1e-5,
        );
        assert!(err < 1e-8);
        assert_eq!(calls.get(), 2 * FD_SUBSET);
    }

    #[test]
    fn dispatch_reports_values() {
        let v = DMatrix::identity(3, 2);
        for cfg in [
            NestingConfig::unnested(2),
            NestingConfig::joint(None),
            NestingConfig::sequential(),
            NestingConfig::sanger(),
        ] {
            let (value, g) = objective_and_gradient(&diag321(), &v, &cfg).unwrap();
            assert_eq!(g.pseudo, cfg.mode == NestingMode::Sanger);
            assert_eq!(g.value.amax(), 0.0);
            if cfg.mode != NestingMode::Joint {
                assert_eq!(value, -5.0);
            }
        }
        // joint value Σ α_i L(V_{1:i}) = ½(−3) + ½(−5)
        let (value, _) =
            objective_and_gradient(&diag321(), &v, &NestingConfig::joint(None)).unwrap();
        assert!((value + 4.0).abs() < 1e-15);
    }
}
