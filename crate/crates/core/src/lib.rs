//! Top-k eigenspaces of symmetric positive-semidefinite operators by unconstrained gradient
//! descent on the orbital minimization method (OMM) family of objectives.
//!
//! The optimization variable is a `d × k` basis `V`. Every objective is evaluated from the
//! `k × k` overlap `VᵀV` and projected matrix `VᵀAV`, so an operator only needs to act on
//! blocks of columns ([`BlockOperator`]). Nested variants recover ordered eigenvectors, a
//! streaming mode consumes minibatches, and [`eval`] compares learned bases against a dense
//! reference eigensolver.
//!
//! ```
//! use omm::{fit_full_batch, NestingConfig, OptimizerConfig, SymmetricOperator};
//!
//! let a = SymmetricOperator::diagonal(&[3.0, 2.0, 1.0]).unwrap();
//! let cfg = OptimizerConfig { lr: 0.05, max_steps: 5_000, ..OptimizerConfig::default() };
//! let (v, trace) = fit_full_batch(&a, 2, &NestingConfig::default(), &cfg, None).unwrap();
//! assert!((trace.final_objective().unwrap() + 5.0).abs() < 1e-6);
//! assert_eq!(v.ncols(), 2);
//! ```

pub mod cli;
mod error;
pub mod eval;
pub mod gradients;
pub mod io;
pub mod linalg;
pub mod objectives;
pub mod optimize;
pub mod problems;

use nalgebra::DMatrix;

pub use error::{Error, Result};
pub use eval::{mode_cosine, subspace_distance, EvalReport, ModeCosines, SpectralReference};
pub use gradients::{Gradient, NestingConfig, NestingMode};
pub use linalg::{
    moment_pair, reference_eig, BlockOperator, MomentPair, SparseSym, SymmetricOperator,
};
pub use objectives::ObjectiveKind;
pub use optimize::{
    fit_full_batch, fit_streaming, FitStatus, FitTrace, Method, OptimizerConfig, Schedule,
    StreamSource, UpdateRule,
};

/// A `d × k` trial basis with finite entries and `1 ≤ k ≤ d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix(DMatrix<f64>);

impl CoefficientMatrix {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        let (d, k) = v.shape();
        if k == 0 || k > d {
            return Err(Error::DimensionMismatch {
                context: "coefficient matrix",
                expected: format!("1 <= k <= d = {d}"),
                found: format!("k = {k}"),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("coefficient matrix"));
        }
        Ok(Self(v))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl AsRef<DMatrix<f64>> for CoefficientMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}
