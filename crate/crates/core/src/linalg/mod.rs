//! Symmetric operators, moment matrices and the dense verification primitives shared by the
//! rest of the crate.

mod dense;
mod moments;
mod operator;

pub(crate) use dense::{fix_sign, polar_factor, symmetric_eigen_desc};
pub use dense::{
    procrustes_align, qr_orthonormalize, reference_eig, reference_eig_with, OracleOptions,
    DEFAULT_GROUPING_TOL, DEFAULT_ORACLE_CAP,
};
pub(crate) use moments::symmetrize;
pub use moments::{moment_pair, MomentPair};
pub use operator::{BlockOperator, SampleMoment, SparseSym, SymmetricOperator};
