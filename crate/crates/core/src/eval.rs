//! Degeneracy-aware comparison of learned bases against a dense reference.
//!
//! Conventions: cosines are absolute values; within a degenerate block only the spanned
//! subspace is identifiable, so learned columns are aligned to the block before comparison;
//! block distances are normalized projector distances in `[0, 1]`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_rows, Error, Result};
use crate::linalg::{
    polar_factor, procrustes_align, qr_orthonormalize, symmetric_eigen_desc, BlockOperator,
};

/// Reference eigenpairs with descending eigenvalues and their degeneracy blocks.
#[derive(Debug, Clone)]
pub struct SpectralReference {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    blocks: Vec<Range<usize>>,
    rank: usize,
}

impl SpectralReference {
    /// `eigenvalues` must be sorted descending and match the columns of `eigenvectors`.
    /// Neighbouring eigenvalues within `grouping_tol · max(1, |λ₁|)` of a block's first value
    /// share a block.
    pub fn new(
        eigenvalues: DVector<f64>,
        eigenvectors: DMatrix<f64>,
        grouping_tol: f64,
    ) -> Result<Self> {
        let n = eigenvalues.len();
        if eigenvectors.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "spectral reference",
                expected: format!("{n} eigenvector columns"),
                found: format!("{}", eigenvectors.ncols()),
            });
        }
        if n == 0 {
            return Err(Error::InvalidParameter("empty spectral reference".into()));
        }
        if eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("spectral reference"));
        }
        if eigenvalues.as_slice().windows(2).any(|p| p[0] < p[1]) {
            return Err(Error::InvalidParameter(
                "reference eigenvalues must be sorted descending".into(),
            ));
        }
        let scale = eigenvalues[0].abs().max(1.0);
        let tol = grouping_tol * scale;
        let mut blocks = Vec::new();
        let mut start = 0;
        for i in 1..n {
            if (eigenvalues[start] - eigenvalues[i]).abs() > tol {
                blocks.push(start..i);
                start = i;
            }
        }
        blocks.push(start..n);

        let amax = eigenvalues.amax();
        let rank = eigenvalues
            .iter()
            .filter(|x| x.abs() > 1e-10 * amax)
            .count();
        Ok(Self {
            eigenvalues,
            eigenvectors,
            blocks,
            rank,
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    /// Number of eigenvalues above `1e-10 · max|λ|` in magnitude.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    /// First `k` reference eigenvectors `W_{1:k}`.
    pub fn top(&self, k: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, k.min(self.len())).into_owned()
    }

    /// Sum of the `k` largest eigenvalues.
    pub fn top_sum(&self, k: usize) -> f64 {
        self.eigenvalues.iter().take(k).sum()
    }
}

/// Per-mode absolute cosines and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCosines {
    pub per_mode: Vec<f64>,
    pub mean: f64,
}

fn unit_columns(v: &DMatrix<f64>) -> Result<Vec<f64>> {
    v.column_iter()
        .map(|c| {
            let n = c.norm();
            if n == 0.0 || !n.is_finite() {
                Err(Error::RankDeficient(
                    "mode_cosine: zero-norm learned column",
                ))
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// Degeneracy-aware per-mode |cos| between learned columns and reference eigenvectors.
pub fn mode_cosine(v: &DMatrix<f64>, reference: &SpectralReference) -> Result<ModeCosines> {
    check_rows("mode_cosine", reference.dim(), v.nrows())?;
    let k = v.ncols();
    if k == 0 || k > reference.len() {
        return Err(Error::DimensionMismatch {
            context: "mode_cosine",
            expected: format!("1..={} learned columns", reference.len()),
            found: format!("{k}"),
        });
    }
    let norms = unit_columns(v)?;
    let w = reference.eigenvectors();
    let mut per_mode = vec![0.0; k];

    for block in reference.blocks().iter().filter(|b| b.start < k) {
        let lo = block.start;
        let hi = block.end.min(k);
        let m = hi - lo;
        let u = v.columns(lo, m);
        let wb = w.columns(lo, block.len());
        if block.len() == 1 {
            per_mode[lo] = (u.column(0).dot(&wb.column(0)) / norms[lo]).abs().min(1.0);
        } else if hi == block.end {
            // whole block learned: rotate the learned columns onto the block eigenbasis
            let q = procrustes_align(&u.into_owned(), &wb.into_owned())
                .or_else(|_| lenient_polar(&u.tr_mul(&wb)))?;
            let aligned = u * q;
            for i in 0..m {
                let a = aligned.column(i);
                per_mode[lo + i] = (a.dot(&wb.column(i)) / a.norm()).abs().min(1.0);
            }
        } else {
            // block cut by k: rotate the block basis onto the learned columns instead
            let cross = wb.tr_mul(&u);
            let target = wb * lenient_polar(&cross)?;
            for i in 0..m {
                per_mode[lo + i] = (u.column(i).dot(&target.column(i)) / norms[lo + i])
                    .abs()
                    .min(1.0);
            }
        }
    }
    let mean = per_mode.iter().sum::<f64>() / k as f64;
    Ok(ModeCosines { per_mode, mean })
}

fn lenient_polar(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(p) = polar_factor(m) {
        return Ok(p);
    }
    let svd = m.clone().svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(x), Some(yt)) => Ok(x * yt),
        _ => Err(Error::NoConvergence),
    }
}

/// `‖UUᵀ − WWᵀ‖_F / √(2m)` after orthonormalizing both bases.
pub fn subspace_distance(u: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<f64> {
    if u.shape() != w.shape() {
        return Err(Error::DimensionMismatch {
            context: "subspace_distance",
            expected: format!("{}x{}", u.nrows(), u.ncols()),
            found: format!("{}x{}", w.nrows(), w.ncols()),
        });
    }
    let qu = qr_orthonormalize(u)?;
    let qw = qr_orthonormalize(w)?;
    Ok(containment_distance(&qu, &qw))
}

/// `‖(I − UUᵀ)W‖_F / √m` for orthonormal `U` (any width) and orthonormal `W` with `m` columns.
/// Equals the normalized projector distance when both have `m` columns.
fn containment_distance(u: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let residual = w - u * u.tr_mul(w);
    (residual.norm() / (w.ncols() as f64).sqrt()).clamp(0.0, 1.0)
}

/// Ritz values: eigenvalues of `QᵀAQ` for an orthonormal basis `Q` of span(V), descending.
pub fn eigenvalue_estimates<O: BlockOperator + ?Sized>(
    op: &O,
    v: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    check_rows("eigenvalue_estimates", op.dim(), v.nrows())?;
    let q = qr_orthonormalize(v)?;
    let aq = op.apply_block(&q)?;
    let ritz = crate::linalg::symmetrize(q.tr_mul(&aq));
    let (values, _) = symmetric_eigen_desc(&ritz)?;
    Ok(values.iter().copied().collect())
}

/// `‖VVᵀ − W_{1:k∧r}W_{1:k∧r}ᵀ‖_F` on the raw learned matrix.
pub fn projector_error(v: &DMatrix<f64>, reference: &SpectralReference, k: usize) -> Result<f64> {
    check_rows("projector_error", reference.dim(), v.nrows())?;
    let m = k.min(reference.rank());
    let w = reference.top(m);
    let d = v.nrows();
    let mut total = 0.0;
    // row by row, so no d × d matrix is ever allocated
    for i in 0..d {
        let vi = v.row(i).transpose();
        let wi = w.row(i).transpose();
        let row = v * vi - &w * wi;
        total += row.norm_squared();
    }
    Ok(total.sqrt())
}

/// `‖CCᵀ − I_r‖_F` with `C = W_{1:r}ᵀV`: the projector error seen only inside the range of the
/// reference operator, so directions in its null space are ignored.
pub fn range_projector_error(v: &DMatrix<f64>, reference: &SpectralReference) -> Result<f64> {
    check_rows("range_projector_error", reference.dim(), v.nrows())?;
    let r = reference.rank();
    let c = reference.top(r).tr_mul(v);
    Ok((&c * c.transpose() - DMatrix::<f64>::identity(r, r)).norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDistance {
    pub start: usize,
    pub end: usize,
    pub distance: f64,
}

/// Full comparison of a learned basis against a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub mode_cosines: Vec<f64>,
    pub mean_cosine: f64,
    pub block_distances: Vec<BlockDistance>,
    pub eigenvalue_estimates: Vec<f64>,
    pub reference_eigenvalues: Vec<f64>,
    pub relative_errors: Vec<f64>,
    pub projector_error: f64,
}

impl EvalReport {
    pub fn build<O: BlockOperator + ?Sized>(
        op: &O,
        v: &DMatrix<f64>,
        reference: &SpectralReference,
    ) -> Result<Self> {
        let k = v.ncols();
        let cos = mode_cosine(v, reference)?;
        let estimates = eigenvalue_estimates(op, v)?;
        let reference_eigenvalues: Vec<f64> =
            reference.eigenvalues().iter().take(k).copied().collect();
        let relative_errors = estimates
            .iter()
            .zip(&reference_eigenvalues)
            .map(|(e, r)| {
                if *r == 0.0 {
                    (e - r).abs()
                } else {
                    ((e - r) / r).abs()
                }
            })
            .collect();

        let w = reference.eigenvectors();
        let mut block_distances = Vec::new();
        for block in reference.blocks().iter().filter(|b| b.start < k) {
            let hi = block.end.min(k);
            let u = qr_orthonormalize(&v.columns(block.start, hi - block.start).into_owned())?;
            let wb = w.columns(block.start, block.len()).into_owned();
            // distance of the reference block from the learned columns when fully learned,
            // otherwise how far the learned columns stray outside the block
            let distance = if hi == block.end {
                containment_distance(&u, &wb)
            } else {
                containment_distance(&wb, &u)
            };
            block_distances.push(BlockDistance {
                start: block.start,
                end: block.end,
                distance,
            });
        }

        Ok(Self {
            k,
            mode_cosines: cos.per_mode,
            mean_cosine: cos.mean,
            block_distances,
            eigenvalue_estimates: estimates,
            reference_eigenvalues,
            relative_errors,
            projector_error: projector_error(v, reference, k)?,
        })
    }

    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().fold(0.0, |m, x| m.max(*x))
    }

    /// Column names of the flat CSV row.
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec![
            "k".to_string(),
            "mean_cosine".into(),
            "projector_error".into(),
            "max_relative_error".into(),
            "max_block_distance".into(),
        ];
        for i in 1..=self.k {
            h.push(format!("cos_{i}"));
        }
        for i in 1..=self.k {
            h.push(format!("eig_{i}"));
        }
        for i in 1..=self.k {
            h.push(format!("relerr_{i}"));
        }
        h
    }

    /// One flat CSV row for sweep aggregation, numbers with 17 significant digits.
    pub fn csv_row(&self) -> Vec<String> {
        let f = crate::io::fmt_f64;
        let max_block = self
            .block_distances
            .iter()
            .fold(0.0f64, |m, b| m.max(b.distance));
        let mut r = vec![
            self.k.to_string(),
            f(self.mean_cosine),
            f(self.projector_error),
            f(self.max_relative_error()),
            f(max_block),
        ];
        r.extend(self.mode_cosines.iter().map(|x| f(*x)));
        r.extend(self.eigenvalue_estimates.iter().map(|x| f(*x)));
        r.extend(self.relative_errors.iter().map(|x| f(*x)));
        r
    }
}
