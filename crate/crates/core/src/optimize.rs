//! Full-batch and streaming descent drivers with divergence guarding and step traces.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::{
    inverse_gradient_from, lora_gradient, objective_and_gradient, NestingConfig, NestingMode,
};
use crate::io::fmt_f64;
use crate::linalg::{BlockOperator, SampleMoment, SymmetricOperator};
use crate::objectives::{lora_objective, InverseParts};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum UpdateRule {
    Gd,
    /// Heavy ball: `m ← βm + g`, `V ← V − ηm`.
    Momentum {
        beta: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl UpdateRule {
    pub fn adam() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// `η · ½(1 + cos(π t / T))`, held at zero after `T`.
    Cosine {
        total_steps: usize,
    },
    /// Linear ramp over the first `fraction · max_steps` steps, then constant.
    LinearWarmup {
        fraction: f64,
    },
}

impl Schedule {
    pub fn rate(&self, lr: f64, step: usize, max_steps: usize) -> f64 {
        match *self {
            Self::Constant => lr,
            Self::Cosine { total_steps } => {
                let t = step.min(total_steps) as f64 / total_steps.max(1) as f64;
                lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
            Self::LinearWarmup { fraction } => {
                let warm = (fraction * max_steps as f64).ceil().max(1.0);
                lr * ((step + 1) as f64 / warm).min(1.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub rule: UpdateRule,
    pub lr: f64,
    pub schedule: Schedule,
    pub max_steps: usize,
    /// Stop once the gradient Frobenius norm is at most this; `None` means `1e-8 · d · k`.
    pub tolerance: Option<f64>,
    pub seed: u64,
    /// Record every n-th step (the final step is always recorded).
    pub trace_every: usize,
    /// Diverged once the objective drops below `−(1 + margin) · bound`.
    pub divergence_margin: f64,
    /// Overrides the bound derived from the operator.
    pub divergence_bound: Option<f64>,
    /// Record elapsed wall-clock time per trace row. Off by default so traces are bitwise
    /// reproducible.
    pub wall_clock: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            rule: UpdateRule::Gd,
            lr: 0.01,
            schedule: Schedule::Constant,
            max_steps: 10_000,
            tolerance: None,
            seed: 0,
            trace_every: 1,
            divergence_margin: 0.5,
            divergence_bound: None,
            wall_clock: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        let unit = |x: f64| (0.0..1.0).contains(&x);
        match self.rule {
            UpdateRule::Gd => {}
            UpdateRule::Momentum { beta } if !unit(beta) => {
                return bad(format!("momentum beta {beta} not in [0, 1)"))
            }
            UpdateRule::Adam { beta1, beta2, eps }
                if !(unit(beta1) && unit(beta2) && eps > 0.0) =>
            {
                return bad(format!("invalid Adam parameters ({beta1}, {beta2}, {eps})"))
            }
            _ => {}
        }
        if let Some(t) = self.tolerance {
            if t.is_nan() || t < 0.0 {
                return bad(format!("tolerance must be >= 0, got {t}"));
            }
        }
        if let Schedule::LinearWarmup { fraction } = self.schedule {
            if !(0.0..=1.0).contains(&fraction) {
                return bad(format!("warmup fraction {fraction} not in [0, 1]"));
            }
        }
        if self.trace_every == 0 {
            return bad("trace_every must be at least 1".into());
        }
        if !(self.divergence_margin.is_finite() && self.divergence_margin >= 0.0) {
            return bad(format!(
                "divergence margin must be >= 0, got {}",
                self.divergence_margin
            ));
        }
        Ok(())
    }

    fn tolerance_for(&self, d: usize, k: usize) -> f64 {
        self.tolerance.unwrap_or(1e-8 * (d * k) as f64)
    }
}

/// What is being minimized in a full-batch fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Omm(NestingConfig),
    Lora,
    /// OMM-1 of `L⁻¹` in the variable `G` with `V = LG`; the returned matrix is `G`.
    OmmInverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxSteps,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub records: Vec<TraceRecord>,
    pub status: FitStatus,
}

impl FitTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.last().map(|r| r.objective)
    }

    pub fn final_grad_norm(&self) -> Option<f64> {
        self.last().map(|r| r.grad_norm)
    }

    /// CSV with columns `step,objective,grad_norm,elapsed_ms`; `elapsed_ms` is empty when
    /// wall-clock recording is off.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "objective", "grad_norm", "elapsed_ms"])?;
        for r in &self.records {
            out.write_record([
                r.step.to_string(),
                fmt_f64(r.objective),
                fmt_f64(r.grad_norm),
                r.elapsed_ms.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Same steps, objectives and gradient norms; wall-clock columns are ignored.
    pub fn same_path(&self, other: &FitTrace) -> bool {
        self.status == other.status
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.step == b.step
                    && a.objective.to_bits() == b.objective.to_bits()
                    && a.grad_norm.to_bits() == b.grad_norm.to_bits()
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardStatus {
    Ok,
    Diverged,
}

/// Checks the latest trace record: non-finite values, or an objective below
/// `−(1 + margin) · bound`, mean the run has diverged. With no bound only finiteness is
/// checked.
pub fn divergence_guard(trace: &FitTrace, bound: Option<f64>, margin: f64) -> GuardStatus {
    match trace.last() {
        Some(r) => guard_value(r.objective, r.grad_norm, bound, margin),
        None => GuardStatus::Ok,
    }
}

fn guard_value(objective: f64, grad_norm: f64, bound: Option<f64>, margin: f64) -> GuardStatus {
    if !objective.is_finite() || !grad_norm.is_finite() {
        return GuardStatus::Diverged;
    }
    match bound {
        Some(b) if objective < -(1.0 + margin) * b => GuardStatus::Diverged,
        _ => GuardStatus::Ok,
    }
}

/// Default divergence bound for OMM on a symmetric operator: `max(tr A, ‖A‖_F)`. For PSD `A`
/// this is `tr A ≥ Σ_{top k} λ`; when `A` has negative eigenvalues the trace alone can sit
/// arbitrarily close to zero, so the Frobenius norm keeps the threshold meaningful.
pub fn omm_bound(op: &SymmetricOperator) -> f64 {
    op.trace().max(op.frobenius_norm())
}

/// `A + κI` as a [`SymmetricOperator::Shifted`]; eigenvectors are unchanged.
pub fn shift_spectrum(op: &SymmetricOperator, kappa: f64) -> Result<SymmetricOperator> {
    if !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "shift must be finite, got {kappa}"
        )));
    }
    Ok(op.clone().shifted(kappa))
}

/// Gaussian entries scaled by `1/√d`, then every column normalized to unit length.
pub fn random_init(d: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (d as f64).sqrt();
    let mut v = DMatrix::from_fn(d, k, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    });
    for mut c in v.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    v
}

/// Random `G` whose images `L g_i` have unit norm, so the implied basis `V = LG` starts on the
/// same scale as [`random_init`].
pub fn inverse_init<O: BlockOperator + ?Sized>(l: &O, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut g = random_init(l.dim(), k, seed);
    let lg = l.apply_block(&g)?;
    for (j, c) in lg.column_iter().enumerate() {
        let n = c.norm();
        if n > 0.0 {
            g.column_mut(j).scale_mut(1.0 / n);
        }
    }
    Ok(g)
}

enum RuleState {
    Gd,
    Momentum(DMatrix<f64>),
    Adam {
        m: DMatrix<f64>,
        s: DMatrix<f64>,
        t: i32,
    },
}

impl RuleState {
    fn new(rule: &UpdateRule, d: usize, k: usize) -> Self {
        match rule {
            UpdateRule::Gd => Self::Gd,
            UpdateRule::Momentum { .. } => Self::Momentum(DMatrix::zeros(d, k)),
            UpdateRule::Adam { .. } => Self::Adam {
                m: DMatrix::zeros(d, k),
                s: DMatrix::zeros(d, k),
                t: 0,
            },
        }
    }

    fn step(&mut self, rule: &UpdateRule, v: &mut DMatrix<f64>, g: &DMatrix<f64>, lr: f64) {
        match (self, *rule) {
            (Self::Gd, _) => *v -= g * lr,
            (Self::Momentum(m), UpdateRule::Momentum { beta }) => {
                *m *= beta;
                *m += g;
                *v -= &*m * lr;
            }
            (Self::Adam { m, s, t }, UpdateRule::Adam { beta1, beta2, eps }) => {
                *t += 1;
                m.zip_apply(g, |mi, gi| *mi = beta1 * *mi + (1.0 - beta1) * gi);
                s.zip_apply(g, |si, gi| *si = beta2 * *si + (1.0 - beta2) * gi * gi);
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for ((vi, mi), si) in v.iter_mut().zip(m.iter()).zip(s.iter()) {
                    *vi -= lr * (mi / c1) / ((si / c2).sqrt() + eps);
                }
            }
            _ => unreachable!("optimizer state always matches its rule"),
        }
    }
}

/// One evaluation: objective, descent direction and the divergence bound in force.
struct Eval {
    objective: f64,
    grad: DMatrix<f64>,
    bound: Option<f64>,
}

fn run<F>(
    mut v: DMatrix<f64>,
    cfg: &OptimizerConfig,
    mut eval: F,
) -> Result<(DMatrix<f64>, FitTrace)>
where
    F: FnMut(&DMatrix<f64>) -> Result<Eval>,
{
    cfg.validate()?;
    let (d, k) = v.shape();
    let tol = cfg.tolerance_for(d, k);
    let mut state = RuleState::new(&cfg.rule, d, k);
    let mut records = Vec::new();
    let clock = Instant::now();
    let record = |records: &mut Vec<TraceRecord>, step, objective, grad_norm| {
        records.push(TraceRecord {
            step,
            objective,
            grad_norm,
            elapsed_ms: cfg.wall_clock.then(|| clock.elapsed().as_secs_f64() * 1e3),
        })
    };

    let mut step = 0;
    let status = loop {
        let e = eval(&v)?;
        let gnorm = e.grad.norm();
        let bound = cfg.divergence_bound.or(e.bound);
        let diverged = guard_value(e.objective, gnorm, bound, cfg.divergence_margin)
            == GuardStatus::Diverged
            || v.iter().any(|x| !x.is_finite());
        let stop = if diverged {
            Some(FitStatus::Diverged)
        } else if gnorm <= tol {
            Some(FitStatus::Converged)
        } else if step == cfg.max_steps {
            Some(FitStatus::MaxSteps)
        } else {
            None
        };
        if stop.is_some() || step % cfg.trace_every == 0 {
            record(&mut records, step, e.objective, gnorm);
        }
        if let Some(s) = stop {
            break s;
        }
        let lr = cfg.schedule.rate(cfg.lr, step, cfg.max_steps);
        state.step(&cfg.rule, &mut v, &e.grad, lr);
        step += 1;
    };
    Ok((v, FitTrace { records, status }))
}

fn initial(d: usize, k: usize, init: Option<&DMatrix<f64>>, seed: u64) -> Result<DMatrix<f64>> {
    if k == 0 || k > d {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= k <= d = {d}, got k = {k}"
        )));
    }
    match init {
        Some(v) => {
            if v.shape() != (d, k) {
                return Err(Error::DimensionMismatch {
                    context: "initial basis",
                    expected: format!("{d}x{k}"),
                    found: format!("{}x{}", v.nrows(), v.ncols()),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("initial basis"));
            }
            Ok(v.clone())
        }
        None => Ok(random_init(d, k, seed)),
    }
}

/// Minimizes an OMM-family objective over `d × k` bases. A diverged run is reported through
/// the trace status, not as an error.
pub fn fit_full_batch(
    op: &SymmetricOperator,
    k: usize,
    nesting: &NestingConfig,
    cfg: &OptimizerConfig,
    init: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, FitTrace)> {
    fit_method(op, k, &Method::Omm(nesting.clone()), cfg, init)
}

pub fn fit_method(
    op: &SymmetricOperator,
    k: usize,
    method: &Method,
    cfg: &OptimizerConfig,
    init: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, FitTrace)> {
    let d = op.dim();
    match method {
        Method::Omm(nesting) => {
            nesting.validate(k)?;
            let scale = match nesting.mode {
                NestingMode::Joint => nesting.weights_for(k).iter().sum(),
                _ => 1.0,
            };
            let bound = Some(omm_bound(op) * scale);
            let v0 = initial(d, k, init, cfg.seed)?;
            run(v0, cfg, |v| {
                let (objective, g) = objective_and_gradient(op, v, nesting)?;
                Ok(Eval {
                    objective,
                    grad: g.value,
                    bound,
                })
            })
        }
        Method::Lora => {
            let bound = Some(op.frobenius_sq());
            let v0 = initial(d, k, init, cfg.seed)?;
            run(v0, cfg, |v| {
                Ok(Eval {
                    objective: lora_objective(op, v)?,
                    grad: lora_gradient(op, v)?,
                    bound,
                })
            })
        }
        Method::OmmInverse => {
            let g0 = match init {
                Some(_) => initial(d, k, init, cfg.seed)?,
                None => {
                    initial(d, k, None, cfg.seed)?;
                    inverse_init(op, k, cfg.seed)?
                }
            };
            run(g0, cfg, |g| {
                let parts = InverseParts::new(op, g)?;
                Ok(Eval {
                    objective: parts.objective(),
                    grad: inverse_gradient_from(&parts),
                    bound: None,
                })
            })
        }
    }
}

/// Sampler of zero-mean minibatches; every batch is `dim × batch_size`.
pub trait StreamSource {
    fn dim(&self) -> usize;
    fn batch_size(&self) -> usize;
    fn next_batch(&mut self) -> DMatrix<f64>;
}

/// Streaming fit: each step draws one fresh minibatch `X`, forms `A_t = XXᵀ/B` implicitly and
/// applies one update with the sequential OMM gradient or Sanger's rule. The trace records the
/// OMM-1 value on the current minibatch.
pub fn fit_streaming<S: StreamSource + ?Sized>(
    stream: &mut S,
    k: usize,
    nesting: &NestingConfig,
    cfg: &OptimizerConfig,
    init: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, FitTrace)> {
    if !matches!(nesting.mode, NestingMode::Sequential | NestingMode::Sanger) {
        return Err(Error::InvalidNesting(format!(
            "streaming supports sequential or sanger nesting, got {:?}",
            nesting.mode
        )));
    }
    nesting.validate(k)?;
    let d = stream.dim();
    let v0 = initial(d, k, init, cfg.seed)?;
    run(v0, cfg, |v| {
        let batch = stream.next_batch();
        if batch.shape() != (d, stream.batch_size()) {
            return Err(Error::DimensionMismatch {
                context: "stream batch",
                expected: format!("{d}x{}", stream.batch_size()),
                found: format!("{}x{}", batch.nrows(), batch.ncols()),
            });
        }
        let at = SampleMoment::new(&batch)?;
        let (objective, g) = objective_and_gradient(&at, v, nesting)?;
        Ok(Eval {
            objective,
            grad: g.value,
            bound: Some(at.trace()),
        })
    })
}
