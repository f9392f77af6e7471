use nalgebra::DMatrix;

use crate::error::{check_rows, Error, Result};

/// Anything that can act on a `d × m` block of column vectors by a symmetric linear map.
///
/// Implemented by [`SymmetricOperator`] and by minibatch second-moment operators, so
/// objectives and gradients can be evaluated without materializing `d × d` matrices.
pub trait BlockOperator {
    fn dim(&self) -> usize;

    fn apply_block(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

/// Real symmetric matrix stored as the upper triangle in compressed-row form.
///
/// Every stored entry `(i, j)` has `j >= i`; the strictly lower triangle is implied by symmetry
/// when the operator is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Builds from coordinate triplets. Entries below the diagonal are reflected into the upper
    /// triangle and duplicates are summed, so supply each off-diagonal pair once.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "sparse operator dimension must be positive".into(),
            ));
        }
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, a) in triplets {
            if i >= dim || j >= dim {
                return Err(Error::DimensionMismatch {
                    context: "sparse triplet",
                    expected: format!("indices < {dim}"),
                    found: format!("({i}, {j})"),
                });
            }
            if !a.is_finite() {
                return Err(Error::NonFinite("sparse triplet"));
            }
            entries.push((i.min(j), i.max(j), a));
        }
        entries.sort_by_key(|e| (e.0, e.1));

        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, a) in entries {
            if last == Some((i, j)) {
                *vals.last_mut().expect("duplicate follows an entry") += a;
                continue;
            }
            row_ptr[i + 1] += 1;
            cols.push(j);
            vals.push(a);
            last = Some((i, j));
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            dim,
            row_ptr,
            cols,
            vals,
        })
    }

    /// Takes the upper triangle of a dense matrix, dropping exact zeros.
    pub fn from_dense_upper(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "sparse from dense",
                expected: "square matrix".into(),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        let d = m.nrows();
        let triplets = (0..d)
            .flat_map(|i| (i..d).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let a = m[(i, j)];
                (a != 0.0).then_some((i, j, a))
            });
        Self::from_triplets(d, triplets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored (upper-triangle) entries.
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Stored entries as `(row, col, value)` with `col >= row`.
    pub fn upper_triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, self.cols[p], self.vals[p]))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, a) in self.upper_triplets() {
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
        m
    }

    fn apply_column(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.dim {
            let xi = x[i];
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[p];
                let a = self.vals[p];
                acc += a * x[j];
                if j != i {
                    y[j] += a * xi;
                }
            }
            y[i] += acc;
        }
    }

    fn trace(&self) -> f64 {
        self.upper_triplets()
            .filter(|&(i, j, _)| i == j)
            .map(|(_, _, a)| a)
            .sum()
    }

    fn frobenius_sq(&self) -> f64 {
        self.upper_triplets()
            .map(|(i, j, a)| if i == j { a * a } else { 2.0 * a * a })
            .sum()
    }
}

/// A real symmetric linear map on `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum SymmetricOperator {
    Dense(DMatrix<f64>),
    SparseSym(SparseSym),
    /// `base + shift * I`
    Shifted {
        base: Box<SymmetricOperator>,
        shift: f64,
    },
    /// `base * base`, applied as two successive applications.
    Squared(Box<SymmetricOperator>),
}

impl SymmetricOperator {
    /// Wraps a dense matrix after checking it is square, finite and symmetric to `1e-12`
    /// relative. The stored copy is exactly symmetrized.
    pub fn dense(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                context: "dense operator",
                expected: "non-empty square matrix".into(),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        if m.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("dense operator"));
        }
        let scale = m.amax().max(1.0);
        let d = m.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!(
                        "dense operator is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self::Dense(sym))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::dense(DMatrix::from_diagonal(
            &nalgebra::DVector::from_column_slice(values),
        ))
    }

    pub fn sparse(s: SparseSym) -> Self {
        Self::SparseSym(s)
    }

    pub fn shifted(self, shift: f64) -> Self {
        Self::Shifted {
            base: Box::new(self),
            shift,
        }
    }

    pub fn squared(self) -> Self {
        Self::Squared(Box::new(self))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(m) => m.nrows(),
            Self::SparseSym(s) => s.dim(),
            Self::Shifted { base, .. } => base.dim(),
            Self::Squared(base) => base.dim(),
        }
    }

    pub fn apply_block(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_rows("apply_block", self.dim(), x.nrows())?;
        if x.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "apply_block needs at least one column".into(),
            ));
        }
        Ok(self.apply_unchecked(x))
    }

    fn apply_unchecked(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Dense(m) => m * x,
            Self::SparseSym(s) => {
                let d = s.dim();
                let mut y = DMatrix::zeros(d, x.ncols());
                for c in 0..x.ncols() {
                    let xc = x.column(c);
                    let mut yc = y.column_mut(c);
                    s.apply_column(xc.as_slice(), yc.as_mut_slice());
                }
                y
            }
            Self::Shifted { base, shift } => {
                let mut y = base.apply_unchecked(x);
                y += x * *shift;
                y
            }
            Self::Squared(base) => {
                let once = base.apply_unchecked(x);
                base.apply_unchecked(&once)
            }
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            Self::Dense(m) => m.trace(),
            Self::SparseSym(s) => s.trace(),
            Self::Shifted { base, shift } => base.trace() + shift * base.dim() as f64,
            Self::Squared(base) => base.frobenius_sq(),
        }
    }

    /// Squared Frobenius norm `tr(A^2)`.
    pub fn frobenius_sq(&self) -> f64 {
        match self {
            Self::Dense(m) => m.norm_squared(),
            Self::SparseSym(s) => s.frobenius_sq(),
            Self::Shifted { base, shift } => {
                base.frobenius_sq() + 2.0 * shift * base.trace() + shift * shift * base.dim() as f64
            }
            Self::Squared(_) => self.to_dense().norm_squared(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Materializes the operator as a dense `d × d` matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Dense(m) => m.clone(),
            Self::SparseSym(s) => s.to_dense(),
            Self::Shifted { base, shift } => {
                let mut m = base.to_dense();
                for i in 0..m.nrows() {
                    m[(i, i)] += shift;
                }
                m
            }
            Self::Squared(base) => {
                let b = base.to_dense();
                &b * &b
            }
        }
    }
    /// Upper-triangle sparse form. Shifts of sparse operators stay sparse; squared composites
    /// are materialized first.
    pub fn to_sparse(&self) -> Result<SparseSym> {
        match self {
            Self::Dense(m) => SparseSym::from_dense_upper(m),
            Self::SparseSym(s) => Ok(s.clone()),
            Self::Shifted { base, shift } => {
                let b = base.to_sparse()?;
                let d = b.dim();
                let diag = (0..d).map(|i| (i, i, *shift));
                SparseSym::from_triplets(d, b.upper_triplets().chain(diag))
            }
            Self::Squared(_) => SparseSym::from_dense_upper(&self.to_dense()),
        }
    }
}

impl BlockOperator for SymmetricOperator {
    fn dim(&self) -> usize {
        SymmetricOperator::dim(self)
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        SymmetricOperator::apply_block(self, x)
    }
}

/// Empirical second-moment operator `A_t = X Xᵀ / B` of a minibatch `X ∈ R^{d×B}`.
///
/// Applied through `X (Xᵀ V) / B`; the `d × d` matrix is never formed.
#[derive(Debug, Clone, Copy)]
pub struct SampleMoment<'a> {
    batch: &'a DMatrix<f64>,
}

impl<'a> SampleMoment<'a> {
    pub fn new(batch: &'a DMatrix<f64>) -> Result<Self> {
        if batch.ncols() == 0 || batch.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "minibatch must be non-empty".into(),
            ));
        }
        Ok(Self { batch })
    }

    /// `tr(A_t) = ‖X‖_F² / B`
    pub fn trace(&self) -> f64 {
        self.batch.norm_squared() / self.batch.ncols() as f64
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        (self.batch * self.batch.transpose()) / self.batch.ncols() as f64
    }
}

impl BlockOperator for SampleMoment<'_> {
    fn dim(&self) -> usize {
        self.batch.nrows()
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_rows("sample moment apply", self.batch.nrows(), x.nrows())?;
        let proj = self.batch.tr_mul(x);
        Ok((self.batch * proj) / self.batch.ncols() as f64)
    }
}
