//! Seeded generators: random PSD matrices with known spectra, grid-world Laplacians,
//! finite-difference Schrödinger operators and Gaussian sample streams.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::SpectralReference;
use crate::linalg::{
    fix_sign, symmetric_eigen_desc, SparseSym, SymmetricOperator, DEFAULT_GROUPING_TOL,
};
use crate::optimize::StreamSource;

/// `A = W diag(spectrum) Wᵀ` with `W` the orthogonal QR factor of a seeded Gaussian matrix.
/// Returns the exact reference alongside `A`.
pub fn random_psd(
    d: usize,
    spectrum: &[f64],
    seed: u64,
) -> Result<(SymmetricOperator, SpectralReference)> {
    if d == 0 || spectrum.len() != d {
        return Err(Error::DimensionMismatch {
            context: "random_psd spectrum",
            expected: format!("{d} values"),
            found: format!("{}", spectrum.len()),
        });
    }
    if let Some(bad) = spectrum.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "spectrum entries must be >= 0, got {bad}"
        )));
    }
    if spectrum.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidParameter(
            "spectrum must be sorted descending".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let r = qr.r();
    let mut w = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            w.column_mut(j).neg_mut();
        }
        fix_sign(w.column_mut(j).as_mut_slice());
    }
    let lambda = DVector::from_column_slice(spectrum);
    let a = &w * DMatrix::from_diagonal(&lambda) * w.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let reference = SpectralReference::new(lambda, w, DEFAULT_GROUPING_TOL)?;
    Ok((SymmetricOperator::dense(a)?, reference))
}

/// `count` values log-uniform in `[lo, hi]`, sorted descending.
pub fn log_uniform_spectrum(count: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = rand_distr::Uniform::new_inclusive(lo.ln(), hi.ln()).expect("valid log range");
    let mut s: Vec<f64> = (0..count).map(|_| dist.sample(&mut rng).exp()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Rectangular ASCII map: `#` is a wall, `.` a free cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridWorld {
    rows: usize,
    cols: usize,
    free: Vec<bool>,
    /// `(row, col)` of every free cell in row-major order
    states: Vec<(usize, usize)>,
    index: Vec<Option<usize>>,
}

impl GridWorld {
    pub fn parse(map: &str) -> Result<Self> {
        let lines: Vec<&str> = map
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        if lines.is_empty() {
            return Err(Error::InvalidMap("map is empty".into()));
        }
        let cols = lines[0].chars().count();
        let mut free = Vec::with_capacity(lines.len() * cols);
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::InvalidMap(format!(
                    "row {r} has {} cells, expected {cols}",
                    line.chars().count()
                )));
            }
            for c in line.chars() {
                match c {
                    '.' => free.push(true),
                    '#' => free.push(false),
                    other => {
                        return Err(Error::InvalidMap(format!("unexpected character {other:?}")))
                    }
                }
            }
        }
        let mut states = Vec::new();
        let mut index = vec![None; free.len()];
        for (i, f) in free.iter().enumerate() {
            if *f {
                index[i] = Some(states.len());
                states.push((i / cols, i % cols));
            }
        }
        if states.is_empty() {
            return Err(Error::InvalidMap("map has no free cells".into()));
        }
        Ok(Self {
            rows: lines.len(),
            cols,
            free,
            states,
            index,
        })
    }

    /// Open `rows × cols` room.
    pub fn open(rows: usize, cols: usize) -> Result<Self> {
        Self::parse(&vec![".".repeat(cols); rows].join("\n"))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[(usize, usize)] {
        &self.states
    }

    pub fn state_index(&self, row: usize, col: usize) -> Option<usize> {
        if row < self.rows && col < self.cols {
            self.index[row * self.cols + col]
        } else {
            None
        }
    }

    pub fn is_free(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols && self.free[row * self.cols + col]
    }

    /// Transition matrix of the uniform policy over up/down/left/right. A move into a wall
    /// or off the map leaves the state unchanged.
    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let n = self.num_states();
        let mut p = DMatrix::zeros(n, n);
        let moves: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        for (s, &(r, c)) in self.states.iter().enumerate() {
            for (dr, dc) in moves {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                let target = if nr >= 0 && nc >= 0 && self.is_free(nr as usize, nc as usize) {
                    self.index[nr as usize * self.cols + nc as usize].expect("free cell is indexed")
                } else {
                    s
                };
                p[(s, target)] += 0.25;
            }
        }
        p
    }
}

/// Operators derived from a grid world.
#[derive(Debug, Clone)]
pub struct GridLaplacian {
    /// `P_π`
    pub transition: DMatrix<f64>,
    /// `L = I − ½(P + Pᵀ)`
    pub laplacian: SymmetricOperator,
    /// `2I − L = ½(P + Pᵀ) + I`, whose top eigenvectors are the bottom eigenvectors of `L`
    pub shifted_laplacian: SymmetricOperator,
}

pub fn gridworld_laplacian(world: &GridWorld) -> Result<GridLaplacian> {
    let p = world.transition_matrix();
    let n = p.nrows();
    let mut sym = Vec::new();
    let mut lap = Vec::new();
    for i in 0..n {
        for j in i..n {
            let f = 0.5 * (p[(i, j)] + p[(j, i)]);
            let l = if i == j { 1.0 - f } else { -f };
            if f != 0.0 {
                sym.push((i, j, f));
            }
            if l != 0.0 {
                lap.push((i, j, l));
            }
        }
    }
    let f = SymmetricOperator::sparse(SparseSym::from_triplets(n, sym)?);
    Ok(GridLaplacian {
        transition: p,
        laplacian: SymmetricOperator::sparse(SparseSym::from_triplets(n, lap)?),
        shifted_laplacian: f.shifted(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    /// `V(x) = −1/|x|`
    Hydrogen,
    /// `V = 0` inside the box, infinite outside
    InfiniteWell,
    /// `V(x) = |x|²`
    Harmonic,
}

/// `H = −∇² + V` on `[−a, a]²` with `n` interior nodes per axis, spacing `h = 2a/(n+1)`, and
/// zero Dirichlet boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdProblem {
    pub potential: Potential,
    pub n: usize,
    pub half_width: f64,
}

/// Discretized Schrödinger operator and what to learn from it.
#[derive(Debug, Clone)]
pub struct FdOperator {
    /// The operator handed to the solver. Hydrogen: `−H + κI` (learn the top). Well and
    /// oscillator: `H` itself (learn the bottom through the inverse-parameterized objective).
    pub operator: SymmetricOperator,
    /// `κ` added to `−H` for hydrogen, zero otherwise.
    pub shift: f64,
    pub hamiltonian: SparseSym,
    pub spacing: f64,
}

impl FdProblem {
    pub fn hydrogen(n: usize) -> Self {
        Self {
            potential: Potential::Hydrogen,
            n,
            half_width: 10.0,
        }
    }

    pub fn infinite_well(n: usize, half_width: f64) -> Self {
        Self {
            potential: Potential::InfiniteWell,
            n,
            half_width,
        }
    }

    pub fn harmonic(n: usize) -> Self {
        Self {
            potential: Potential::Harmonic,
            n,
            half_width: 10.0,
        }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n + 1) as f64
    }

    /// Node coordinates along one axis, `x_i = −a + (i + 1)h`.
    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n)
            .map(|i| -self.half_width + (i + 1) as f64 * h)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidParameter(format!(
                "need at least 3 grid points per axis, got {}",
                self.n
            )));
        }
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "half-width must be positive, got {}",
                self.half_width
            )));
        }
        if self.potential == Potential::Hydrogen && self.n % 2 == 1 {
            return Err(Error::InvalidParameter(
                "hydrogen grid needs an even number of points so no node sits on the nucleus"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Lowest continuum eigenvalues of `H` (well, oscillator) or highest of `−H` (hydrogen),
    /// with multiplicity, in learning order.
    pub fn analytic_eigenvalues(&self, count: usize) -> Vec<f64> {
        match self.potential {
            Potential::Hydrogen => (0..)
                .flat_map(|n: usize| {
                    std::iter::repeat_n(1.0 / ((2 * n + 1) as f64).powi(2), 2 * n + 1)
                })
                .take(count)
                .collect(),
            Potential::InfiniteWell => {
                let c = std::f64::consts::PI.powi(2) / (4.0 * self.half_width * self.half_width);
                let m = count + 1;
                let mut v: Vec<f64> = (1..=m)
                    .flat_map(|nx| (1..=m).map(move |ny| c * (nx * nx + ny * ny) as f64))
                    .collect();
                v.sort_by(f64::total_cmp);
                v.truncate(count);
                v
            }
            Potential::Harmonic => (0..)
                .flat_map(|s: usize| std::iter::repeat_n(2.0 * (s + 1) as f64, s + 1))
                .take(count)
                .collect(),
        }
    }
}

/// Mean of `1/|x|` over the axis-aligned cell `[x1, x2] × [y1, y2]`.
fn cell_average_inverse_radius(x1: f64, x2: f64, y1: f64, y2: f64) -> f64 {
    // split each side at zero and fold the pieces into the first quadrant
    fn pieces(a: f64, b: f64) -> Vec<(f64, f64)> {
        if a >= 0.0 {
            vec![(a, b)]
        } else if b <= 0.0 {
            vec![(-b, -a)]
        } else {
            vec![(0.0, -a), (0.0, b)]
        }
    }
    // antiderivative of 1/r with ∂²G/∂x∂y = 1/r on x, y ≥ 0
    let g = |x: f64, y: f64| {
        let r = x.hypot(y);
        let a = if x > 0.0 { x * (y + r).ln() } else { 0.0 };
        let b = if y > 0.0 { y * (x + r).ln() } else { 0.0 };
        a + b
    };
    let mut integral = 0.0;
    for (xa, xb) in pieces(x1, x2) {
        for &(ya, yb) in &pieces(y1, y2) {
            integral += g(xb, yb) - g(xa, yb) - g(xb, ya) + g(xa, ya);
        }
    }
    integral / ((x2 - x1) * (y2 - y1))
}

/// Five-point-stencil `H = −∇² + V` on the interior nodes. The Coulomb term is averaged over
/// each node's cell rather than sampled at the node; point sampling next to the nucleus
/// misplaces the ground level by about 20% at `h ≈ 0.3`.
pub fn schrodinger_fd(problem: &FdProblem) -> Result<FdOperator> {
    problem.validate()?;
    let n = problem.n;
    let h = problem.spacing();
    let xs = problem.nodes();
    let inv_h2 = 1.0 / (h * h);
    let idx = |i: usize, j: usize| i * n + j;
    let mut triplets = Vec::with_capacity(3 * n * n);
    for i in 0..n {
        for j in 0..n {
            let potential = match problem.potential {
                Potential::Hydrogen => {
                    let (x, y) = (xs[j], xs[i]);
                    -cell_average_inverse_radius(x - h / 2.0, x + h / 2.0, y - h / 2.0, y + h / 2.0)
                }
                Potential::InfiniteWell => 0.0,
                Potential::Harmonic => xs[i] * xs[i] + xs[j] * xs[j],
            };
            triplets.push((idx(i, j), idx(i, j), 4.0 * inv_h2 + potential));
            if j + 1 < n {
                triplets.push((idx(i, j), idx(i, j + 1), -inv_h2));
            }
            if i + 1 < n {
                triplets.push((idx(i, j), idx(i + 1, j), -inv_h2));
            }
        }
    }
    let hamiltonian = SparseSym::from_triplets(n * n, triplets)?;
    let (operator, shift) = match problem.potential {
        Potential::Hydrogen => {
            // −H = ∇² + 1/r has spectrum above −8/h², so this shift makes it PSD
            let shift = 8.0 * inv_h2;
            let neg = SparseSym::from_triplets(
                n * n,
                hamiltonian.upper_triplets().map(|(i, j, a)| (i, j, -a)),
            )?;
            (SymmetricOperator::sparse(neg).shifted(shift), shift)
        }
        _ => (SymmetricOperator::sparse(hamiltonian.clone()), 0.0),
    };
    Ok(FdOperator {
        operator,
        shift,
        hamiltonian,
        spacing: h,
    })
}

/// Eigenvalues of the 1D three-point `−d²/dx²` on `n` interior nodes of `[−a, a]`:
/// `(2/h²)(1 − cos(mπh/(2a)))`, ascending.
pub fn fd_well_1d_eigenvalues(n: usize, half_width: f64) -> Vec<f64> {
    let h = 2.0 * half_width / (n + 1) as f64;
    (1..=n)
        .map(|m| {
            2.0 / (h * h) * (1.0 - (m as f64 * std::f64::consts::PI * h / (2.0 * half_width)).cos())
        })
        .collect()
}

/// Zero-mean Gaussian minibatches `x = C z` with `CCᵀ` the covariance.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    root: DMatrix<f64>,
    batch: usize,
    rng: ChaCha8Rng,
}

/// Stream with the given PSD covariance. The square root is taken from the eigendecomposition,
/// so singular covariances are allowed.
pub fn gaussian_stream(
    covariance: &SymmetricOperator,
    batch: usize,
    seed: u64,
) -> Result<GaussianStream> {
    if batch == 0 {
        return Err(Error::InvalidParameter(
            "batch size must be at least 1".into(),
        ));
    }
    let (vals, vecs) = symmetric_eigen_desc(&covariance.to_dense())?;
    let scale = vals.amax().max(1.0);
    let min = vals.min();
    if min < -1e-10 * scale {
        return Err(Error::NotPositiveSemidefinite(min));
    }
    let sqrt = vals.map(|x| x.max(0.0).sqrt());
    let root = vecs * DMatrix::from_diagonal(&sqrt);
    Ok(GaussianStream {
        root,
        batch,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

impl StreamSource for GaussianStream {
    fn dim(&self) -> usize {
        self.root.nrows()
    }

    fn batch_size(&self) -> usize {
        self.batch
    }

    fn next_batch(&mut self) -> DMatrix<f64> {
        let d = self.root.ncols();
        let z = DMatrix::from_fn(d, self.batch, |_, _| StandardNormal.sample(&mut self.rng));
        &self.root * z
    }
}
