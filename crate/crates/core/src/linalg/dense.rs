use nalgebra::{DMatrix, DVector};

use super::operator::SymmetricOperator;
use crate::error::{Error, Result};
use crate::eval::SpectralReference;

/// Largest dimension the dense reference eigensolver accepts by default.
pub const DEFAULT_ORACLE_CAP: usize = 4096;

/// Default tolerance for grouping (near-)equal eigenvalues into degeneracy blocks,
/// relative to `max(1, |λ₁|)`.
pub const DEFAULT_GROUPING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub cap: usize,
    pub grouping_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ORACLE_CAP,
            grouping_tol: DEFAULT_GROUPING_TOL,
        }
    }
}

/// Full dense eigendecomposition used as the verification oracle.
///
/// Eigenvalues come back in descending order; each eigenvector has its first non-negligible
/// component positive.
pub fn reference_eig(op: &SymmetricOperator) -> Result<SpectralReference> {
    reference_eig_with(op, OracleOptions::default())
}

pub fn reference_eig_with(
    op: &SymmetricOperator,
    opts: OracleOptions,
) -> Result<SpectralReference> {
    let d = op.dim();
    if d > opts.cap {
        return Err(Error::OracleCapExceeded {
            dim: d,
            cap: opts.cap,
        });
    }
    let (values, vectors) = symmetric_eigen_desc(&op.to_dense())?;
    SpectralReference::new(values, vectors, opts.grouping_tol)
}

/// Eigenvalues (descending) and eigenvectors of a dense symmetric matrix.
pub(crate) fn symmetric_eigen_desc(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = m.nrows();
    if m.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("reference_eig input"));
    }
    let fm = faer::Mat::<f64>::from_fn(d, d, |i, j| m[(i, j)]);
    let evd = fm
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::NoConvergence)?;
    let s = evd.S().column_vector();
    let u = evd.U();

    // faer returns ascending order; reverse with a stable sort so ties keep encounter order
    let mut order: Vec<usize> = (0..d).rev().collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));

    let values = DVector::from_iterator(d, order.iter().map(|&i| s[i]));
    let mut vectors = DMatrix::from_fn(d, d, |r, c| u[(r, order[c])]);
    for mut col in vectors.column_iter_mut() {
        fix_sign(col.as_mut_slice());
    }
    Ok((values, vectors))
}

/// Flips `v` so its first component above `1e-10 · max|v|` is positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let amax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if amax == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-10 * amax) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn singular_value_ratio(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// Thin QR orthonormalization with `diag(R) > 0`.
///
/// Only used for diagnostics (Ritz values, subspace comparisons), never inside OMM updates.
pub fn qr_orthonormalize(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d, k) = v.shape();
    if k == 0 || k > d {
        return Err(Error::DimensionMismatch {
            context: "qr_orthonormalize",
            expected: "1 <= k <= d columns".into(),
            found: format!("{d}x{k}"),
        });
    }
    if v.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("qr_orthonormalize input"));
    }
    if singular_value_ratio(v) <= 1e-10 {
        return Err(Error::RankDeficient("qr_orthonormalize"));
    }
    let qr = v.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..k {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    Ok(q)
}

/// Orthogonal `Q` minimizing `‖UQ − W‖_F`, from the SVD of `UᵀW`.
pub fn procrustes_align(u: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if u.shape() != w.shape() {
        return Err(Error::DimensionMismatch {
            context: "procrustes_align",
            expected: format!("{}x{}", u.nrows(), u.ncols()),
            found: format!("{}x{}", w.nrows(), w.ncols()),
        });
    }
    let cross = u.tr_mul(w);
    polar_factor(&cross).ok_or(Error::RankDeficient("procrustes_align"))
}

/// Orthogonal polar factor `XYᵀ` of `M = XΣYᵀ`; `None` if `M` is rank-deficient.
pub(crate) fn polar_factor(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.max();
    if max == 0.0 || sv.min() <= 1e-10 * max {
        return None;
    }
    let x = svd.u?;
    let yt = svd.v_t?;
    Some(x * yt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    /// Plain cyclic Jacobi, kept independent of the production eigensolver.
    fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev
    }

    #[test]
    fn diagonal_spectrum_and_unit_vectors() {
        let op = SymmetricOperator::diagonal(&[3.0, 2.0, 1.0]).unwrap();
        let r = reference_eig(&op).unwrap();
        assert_eq!(r.eigenvalues().as_slice(), &[3.0, 2.0, 1.0]);
        assert!((r.eigenvectors() - DMatrix::<f64>::identity(3, 3)).amax() <= 1e-14);
    }

    #[test]
    fn swap_matrix_has_symmetric_antisymmetric_pair() {
        let op =
            SymmetricOperator::dense(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let r = reference_eig(&op).unwrap();
        assert!((r.eigenvalues()[0] - 1.0).abs() < 1e-14);
        assert!((r.eigenvalues()[1] + 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let w = r.eigenvectors();
        assert!((w[(0, 0)] - s).abs() < 1e-14 && (w[(1, 0)] - s).abs() < 1e-14);
        assert!((w[(0, 1)] - s).abs() < 1e-14 && (w[(1, 1)] + s).abs() < 1e-14);
    }

    #[test]
    fn random_symmetric_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for &d in &[5usize, 32, 64] {
            let g = gaussian(d, d, &mut rng);
            let a: DMatrix<f64> = (&g + g.transpose()) * 0.5;
            let op = SymmetricOperator::dense(a.clone()).unwrap();
            let r = reference_eig(&op).unwrap();
            let w = r.eigenvectors();
            let lam = DMatrix::from_diagonal(r.eigenvalues());
            let rebuilt = w * lam * w.transpose();
            assert!((rebuilt - &a).norm() <= 1e-9 * a.norm());
            assert!((w.transpose() * w - DMatrix::<f64>::identity(d, d)).norm() <= 1e-10);
            for i in 0..d {
                let wi = w.column(i);
                let res = &a * wi - wi * r.eigenvalues()[i];
                assert!(res.norm() <= 1e-8 * a.norm());
            }
            let ev = r.eigenvalues();
            assert!(ev.as_slice().windows(2).all(|p| p[0] >= p[1]));
            let oracle = jacobi_eigenvalues(a.clone());
            for (x, y) in ev.iter().zip(&oracle) {
                assert!((x - y).abs() <= 1e-10 * a.norm());
            }
        }
    }

    #[test]
    fn shift_moves_spectrum_elementwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = gaussian(20, 20, &mut rng);
        let op = SymmetricOperator::dense((&g + g.transpose()) * 0.5).unwrap();
        let base = reference_eig(&op).unwrap();
        let shifted = reference_eig(&op.clone().shifted(2.75)).unwrap();
        for (a, b) in base.eigenvalues().iter().zip(shifted.eigenvalues().iter()) {
            assert!((a + 2.75 - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn oracle_cap_is_enforced() {
        let op = SymmetricOperator::diagonal(&[1.0; 5]).unwrap();
        let err = reference_eig_with(
            &op,
            OracleOptions {
                cap: 4,
                ..Default::default()
            },
        );
        assert!(matches!(
            err,
            Err(Error::OracleCapExceeded { dim: 5, cap: 4 })
        ));
    }

    #[test]
    fn qr_keeps_orthonormal_input_and_removes_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q0 = qr_orthonormalize(&gaussian(8, 3, &mut rng)).unwrap();
        let q1 = qr_orthonormalize(&q0).unwrap();
        assert!((q1 - &q0).amax() <= 1e-12);

        let v = DMatrix::from_column_slice(3, 1, &[2.0, 0.0, 0.0]);
        assert_eq!(qr_orthonormalize(&v).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn qr_preserves_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let v = gaussian(12, 4, &mut rng);
        let q = qr_orthonormalize(&v).unwrap();
        assert!((q.transpose() * &q - DMatrix::<f64>::identity(4, 4)).amax() <= 1e-12);
        // projector onto span(V) computed through the normal equations
        let pv = &v * (v.transpose() * &v).try_inverse().unwrap() * v.transpose();
        let pq = &q * q.transpose();
        assert!((pv - pq).amax() <= 1e-10);
    }

    #[test]
    fn qr_rejects_rank_deficient_input() {
        let v = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(matches!(
            qr_orthonormalize(&v),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn procrustes_identity_and_rotation_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = qr_orthonormalize(&gaussian(6, 3, &mut rng)).unwrap();
        let q = procrustes_align(&w, &w).unwrap();
        assert!((q - DMatrix::<f64>::identity(3, 3)).amax() <= 1e-12);

        let rot = qr_orthonormalize(&gaussian(3, 3, &mut rng)).unwrap();
        let u = &w * &rot;
        let q = procrustes_align(&u, &w).unwrap();
        assert!((&u * &q - &w).norm() <= 1e-10);
        assert!((q - rot.transpose()).amax() <= 1e-10);
    }

    #[test]
    fn procrustes_beats_every_grid_angle_in_a_degenerate_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let w = qr_orthonormalize(&gaussian(5, 2, &mut rng)).unwrap();
        let angle: f64 = 1.234;
        let rot =
            DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()]);
        let u = &w * rot;
        let q = procrustes_align(&u, &w).unwrap();
        let best = (&u * &q - &w).norm();
        assert!(best <= 1e-8);
        // exhaustive oracle over rotations and reflections
        for step in 0..3600 {
            let t = step as f64 * std::f64::consts::TAU / 3600.0;
            for refl in [1.0, -1.0] {
                let g = DMatrix::from_row_slice(
                    2,
                    2,
                    &[t.cos(), -refl * t.sin(), t.sin(), refl * t.cos()],
                );
                assert!((&u * g - &w).norm() >= best - 1e-12);
            }
        }
    }

    #[test]
    fn procrustes_flags_rank_deficient_cross_product() {
        let u = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let w = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!(matches!(
            procrustes_align(&u, &w),
            Err(Error::RankDeficient(_))
        ));
    }
}
