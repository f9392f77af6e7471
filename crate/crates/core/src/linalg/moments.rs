use nalgebra::DMatrix;

use super::operator::BlockOperator;
use crate::error::{check_rows, Result};

/// Overlap `S = VᵀV` and projected `T = VᵀAV` matrices of one evaluation.
///
/// With minibatch operators these are the sample second-moment matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    pub overlap: DMatrix<f64>,
    pub projected: DMatrix<f64>,
}

impl MomentPair {
    /// Builds the pair from `V` and a precomputed `AV`. Both outputs are exactly symmetrized.
    pub fn from_blocks(v: &DMatrix<f64>, av: &DMatrix<f64>) -> Self {
        Self {
            overlap: symmetrize(v.tr_mul(v)),
            projected: symmetrize(v.tr_mul(av)),
        }
    }

    pub fn k(&self) -> usize {
        self.overlap.nrows()
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Computes `(VᵀV, VᵀAV)` with a single application of the operator.
pub fn moment_pair<O: BlockOperator + ?Sized>(op: &O, v: &DMatrix<f64>) -> Result<MomentPair> {
    check_rows("moment_pair", op.dim(), v.nrows())?;
    let av = op.apply_block(v)?;
    Ok(MomentPair::from_blocks(v, &av))
}
