//! Losses of the OMM family and their companions, all evaluated from the `k × k` moment
//! matrices so the cost is one operator application plus `O(p k³)` small-matrix work.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{moment_pair, BlockOperator, MomentPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// `tr((I − VVᵀ)^{2p} A) − tr(A)` through the binomial polynomial in `VᵀV`.
    OmmP {
        p: usize,
    },
    /// `−tr(Q_p VᵀAV)` with `Q_p = Σ_{i<2p} (I − VᵀV)^i`.
    OmmNeumannForm {
        p: usize,
    },
    Lora,
    RayleighUnconstrained,
    OmmRegularized {
        kappa: f64,
    },
    OmmInverseParam,
}

impl ObjectiveKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::OmmP { p } | Self::OmmNeumannForm { p } if p == 0 => Err(
                Error::InvalidParameter("OMM order p must be at least 1".into()),
            ),
            Self::OmmRegularized { kappa } if !(kappa.is_finite() && kappa >= 0.0) => {
                Err(Error::InvalidParameter(format!(
                    "regularization kappa must be finite and >= 0, got {kappa}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Evaluates the objective at `v`. For [`ObjectiveKind::OmmInverseParam`] the operator is
    /// `L` and `v` holds `G`.
    pub fn evaluate<O: BlockOperator + ?Sized>(&self, op: &O, v: &DMatrix<f64>) -> Result<f64> {
        self.validate()?;
        match *self {
            Self::OmmP { p } => omm_objective(op, v, p),
            Self::OmmNeumannForm { p } => omm_objective_neumann_form(op, v, p),
            Self::Lora => lora_objective(op, v),
            Self::RayleighUnconstrained => rayleigh_diagnostic(op, v),
            Self::OmmRegularized { kappa } => omm_regularized_objective(op, v, kappa),
            Self::OmmInverseParam => inverse_parameterized_objective(op, v),
        }
    }
}

fn finite(x: f64, what: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_order(p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::InvalidParameter(
            "OMM order p must be at least 1".into(),
        ));
    }
    Ok(())
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Σ_{j=1}^{2p} (−1)^j C(2p, j) S^{j−1}`, the weight multiplying `VᵀAV` in the OMM-p trace.
pub(crate) fn omm_weight_polynomial(overlap: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let k = overlap.nrows();
    let mut power = DMatrix::<f64>::identity(k, k);
    let mut acc = DMatrix::<f64>::zeros(k, k);
    for j in 1..=2 * p {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += &power * (sign * binomial(2 * p, j));
        if j < 2 * p {
            power = &power * overlap;
        }
    }
    acc
}

pub(crate) fn omm_from_moments(m: &MomentPair, p: usize) -> f64 {
    omm_weight_polynomial(&m.overlap, p).dot(&m.projected)
}

pub fn omm_objective<O: BlockOperator + ?Sized>(op: &O, v: &DMatrix<f64>, p: usize) -> Result<f64> {
    check_order(p)?;
    let m = moment_pair(op, v)?;
    finite(omm_from_moments(&m, p), "omm_objective")
}

pub fn omm_objective_neumann_form<O: BlockOperator + ?Sized>(
    op: &O,
    v: &DMatrix<f64>,
    p: usize,
) -> Result<f64> {
    check_order(p)?;
    let m = moment_pair(op, v)?;
    let k = m.k();
    let residual = DMatrix::<f64>::identity(k, k) - &m.overlap;
    let mut power = DMatrix::<f64>::identity(k, k);
    let mut q = DMatrix::<f64>::zeros(k, k);
    for i in 0..2 * p {
        q += &power;
        if i + 1 < 2 * p {
            power = &power * &residual;
        }
    }
    finite(-q.dot(&m.projected), "omm_objective_neumann_form")
}

/// `−2 tr(VᵀAV) + tr((VᵀV)²)`
pub fn lora_objective<O: BlockOperator + ?Sized>(op: &O, v: &DMatrix<f64>) -> Result<f64> {
    let m = moment_pair(op, v)?;
    finite(
        -2.0 * m.projected.trace() + m.overlap.norm_squared(),
        "lora_objective",
    )
}

/// Multicolumn Rayleigh quotient `tr((VᵀV)⁻¹ VᵀAV)`. Diagnostic only.
pub fn rayleigh_diagnostic<O: BlockOperator + ?Sized>(op: &O, v: &DMatrix<f64>) -> Result<f64> {
    let m = moment_pair(op, v)?;
    let sv = m.overlap.clone().svd(false, false).singular_values;
    let (max, min) = (sv.max(), sv.min());
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if condition.is_nan() || condition >= 1e12 {
        return Err(Error::NearSingularOverlap { condition });
    }
    let chol = m
        .overlap
        .clone()
        .cholesky()
        .ok_or(Error::NearSingularOverlap { condition })?;
    finite(chol.solve(&m.projected).trace(), "rayleigh_diagnostic")
}

/// OMM-1 plus `κ‖VᵀV − I‖_F²`. Equal to OMM-1 on `A + κI` up to the constant `κk`.
pub fn omm_regularized_objective<O: BlockOperator + ?Sized>(
    op: &O,
    v: &DMatrix<f64>,
    kappa: f64,
) -> Result<f64> {
    ObjectiveKind::OmmRegularized { kappa }.validate()?;
    let m = moment_pair(op, v)?;
    let k = m.k();
    let penalty = (&m.overlap - DMatrix::<f64>::identity(k, k)).norm_squared();
    finite(
        omm_from_moments(&m, 1) + kappa * penalty,
        "omm_regularized_objective",
    )
}

/// OMM-1 of `L⁻¹` in the variable `V = LG`, without inverting `L`:
/// `−2 tr(GᵀLG) + tr((GᵀL²G)(GᵀLG))`.
pub fn inverse_parameterized_objective<O: BlockOperator + ?Sized>(
    l: &O,
    g: &DMatrix<f64>,
) -> Result<f64> {
    let parts = InverseParts::new(l, g)?;
    finite(parts.objective(), "inverse_parameterized_objective")
}

/// Blocks shared by the inverse-parameterized objective and its gradient.
pub(crate) struct InverseParts {
    pub lg: DMatrix<f64>,
    pub l2g: DMatrix<f64>,
    /// `GᵀLG`, the projected matrix of `L⁻¹` in the variable `V = LG`
    pub projected: DMatrix<f64>,
    /// `GᵀL²G = VᵀV`
    pub overlap: DMatrix<f64>,
}

impl InverseParts {
    pub fn new<O: BlockOperator + ?Sized>(l: &O, g: &DMatrix<f64>) -> Result<Self> {
        crate::error::check_rows("inverse_parameterized_objective", l.dim(), g.nrows())?;
        let lg = l.apply_block(g)?;
        let l2g = l.apply_block(&lg)?;
        let projected = crate::linalg::symmetrize(g.tr_mul(&lg));
        let overlap = crate::linalg::symmetrize(g.tr_mul(&l2g));
        Ok(Self {
            lg,
            l2g,
            projected,
            overlap,
        })
    }

    pub fn objective(&self) -> f64 {
        -2.0 * self.projected.trace() + self.overlap.dot(&self.projected)
    }
}

/// Jointly nested OMM-1 value `Σ_i α_i L(V_{1:i})`, evaluated with the mask
/// `P_ij = m_{max(i,j)}`, `m_i = Σ_{j≥i} α_j`.
pub fn omm_joint_objective<O: BlockOperator + ?Sized>(
    op: &O,
    v: &DMatrix<f64>,
    weights: &[f64],
) -> Result<f64> {
    let mask = crate::gradients::joint_mask(weights)?;
    if mask.nrows() != v.ncols() {
        return Err(Error::DimensionMismatch {
            context: "omm_joint_objective",
            expected: format!("{} weights", v.ncols()),
            found: format!("{}", mask.nrows()),
        });
    }
    let m = moment_pair(op, v)?;
    finite(joint_from_moments(&m, &mask), "omm_joint_objective")
}

pub(crate) fn joint_from_moments(m: &MomentPair, mask: &DMatrix<f64>) -> f64 {
    let k = m.k();
    let diag: f64 = (0..k).map(|i| mask[(i, i)] * m.projected[(i, i)]).sum();
    -2.0 * diag + mask.component_mul(&m.overlap).dot(&m.projected)
}
