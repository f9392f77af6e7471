//! The `omm` command line: `gen`, `fit`, `eval` and `check`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 divergence, 3 failed check.

mod check;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::gradients::NestingConfig;
use crate::io;
use crate::linalg::{reference_eig, SparseSym, SymmetricOperator};
use crate::optimize::{
    fit_method, fit_streaming, FitStatus, FitTrace, Method, OptimizerConfig, Schedule, UpdateRule,
};
use crate::problems::{
    gaussian_stream, gridworld_laplacian, log_uniform_spectrum, random_psd, schrodinger_fd,
    FdProblem, GridWorld, Potential,
};

pub use check::{run_suite, CheckOptions, CheckResult, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "omm",
    version,
    about = "Top-k eigenspaces by orbital minimization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an operator with its reference spectrum.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Fit a basis to an operator or a Gaussian stream.
    Fit(Box<FitArgs>),
    /// Compare a learned basis against the dense reference.
    Eval(EvalArgs),
    /// Run the built-in verification suites.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GenKind {
    /// Random PSD matrix with a seeded spectrum and eigenbasis.
    RandomPsd {
        #[arg(long)]
        d: Option<usize>,
        /// Explicit spectrum, comma separated and descending; default is log-uniform.
        #[arg(long, value_delimiter = ',')]
        spectrum: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.1)]
        lo: f64,
        #[arg(long, default_value_t = 10.0)]
        hi: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-world Laplacian from an ASCII map.
    Gridworld {
        #[arg(long, conflicts_with = "map_inline")]
        map: Option<PathBuf>,
        /// Map text with rows separated by newlines or '/'.
        #[arg(long)]
        map_inline: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference Schrödinger operator.
    Schrodinger {
        #[arg(long, value_enum)]
        potential: PotentialArg,
        #[arg(long)]
        n: usize,
        /// Box half-width; defaults to 10 (hydrogen, harmonic) or 5 (well).
        #[arg(long)]
        half_width: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialArg {
    Hydrogen,
    Well,
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Omm,
    OmmSeq,
    OmmJnt,
    Sanger,
    Lora,
    OmmInverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleArg {
    Gd,
    Momentum,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleArg {
    Constant,
    Cosine,
    Warmup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// Leading eigenvectors of the operator.
    #[default]
    Top,
    /// Trailing eigenvectors (inverse-parameterized runs).
    Bottom,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Run configuration or manifest JSON; replaces all other flags except --out.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present_any = ["config", "stream_covariance"])]
    pub operator: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodName::Omm)]
    pub method: MethodName,
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long, required_unless_present = "config")]
    pub k: Option<usize>,
    /// Spectrum shift added to the operator before fitting.
    #[arg(long, default_value_t = 0.0)]
    pub kappa: f64,
    /// Joint nesting weights, comma separated (default uniform).
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = RuleArg::Gd)]
    pub rule: RuleArg,
    #[arg(long, default_value_t = 0.9)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Constant)]
    pub schedule: ScheduleArg,
    #[arg(long, default_value_t = 0.1)]
    pub warmup_fraction: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_steps: usize,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub trace_every: usize,
    #[arg(long, default_value_t = 0.5)]
    pub divergence_margin: f64,
    #[arg(long)]
    pub divergence_bound: Option<f64>,
    /// Record wall-clock time in the trace (breaks bitwise reproducibility of trace files).
    #[arg(long)]
    pub wall_clock: bool,
    /// Stream Gaussian minibatches with this covariance instead of using a fixed operator.
    #[arg(long)]
    pub stream_covariance: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Initial basis (Matrix Market array); random when absent.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub v: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub operator: PathBuf,
    #[arg(long, value_enum, default_value_t = Target::Top)]
    pub target: Target,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Negative control: flip the sign of one gradient so its check must fail.
    #[arg(long, hide = true)]
    pub inject_wrong_sign: bool,
}

/// Minibatch source for streaming fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub covariance: PathBuf,
    pub batch: usize,
}

/// Everything needed to reproduce a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub operator: Option<PathBuf>,
    pub stream: Option<StreamSpec>,
    pub method: MethodName,
    pub p: usize,
    pub k: usize,
    pub kappa: f64,
    pub weights: Option<Vec<f64>>,
    pub optimizer: OptimizerConfig,
    pub init: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_args(a: &FitArgs) -> Result<Self> {
        if let Some(path) = &a.config {
            let mut cfg = load_run_config(path)?;
            if let Some(out) = &a.out {
                cfg.out = out.clone();
            }
            return Ok(cfg);
        }
        let rule = match a.rule {
            RuleArg::Gd => UpdateRule::Gd,
            RuleArg::Momentum => UpdateRule::Momentum { beta: a.beta },
            RuleArg::Adam => UpdateRule::Adam {
                beta1: a.beta1,
                beta2: a.beta2,
                eps: a.eps,
            },
        };
        let schedule = match a.schedule {
            ScheduleArg::Constant => Schedule::Constant,
            ScheduleArg::Cosine => Schedule::Cosine {
                total_steps: a.max_steps,
            },
            ScheduleArg::Warmup => Schedule::LinearWarmup {
                fraction: a.warmup_fraction,
            },
        };
        let cfg = Self {
            operator: a.operator.clone(),
            stream: a.stream_covariance.as_ref().map(|c| StreamSpec {
                covariance: c.clone(),
                batch: a.batch,
            }),
            method: a.method,
            p: a.p,
            k: a.k
                .ok_or_else(|| Error::InvalidParameter("--k is required".into()))?,
            kappa: a.kappa,
            weights: a.weights.clone(),
            optimizer: OptimizerConfig {
                rule,
                lr: a.lr,
                schedule,
                max_steps: a.max_steps,
                tolerance: a.tolerance,
                seed: a.seed,
                trace_every: a.trace_every,
                divergence_margin: a.divergence_margin,
                divergence_bound: a.divergence_bound,
                wall_clock: a.wall_clock,
            },
            init: a.init.clone(),
            out: a
                .out
                .clone()
                .ok_or_else(|| Error::InvalidParameter("--out is required".into()))?,
            seed: a.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if self.p == 0 {
            return Err(Error::InvalidParameter("p must be at least 1".into()));
        }
        if self.p > 1 && self.method != MethodName::Omm {
            return Err(Error::InvalidNesting(format!(
                "p = {} is only supported by the unnested omm method",
                self.p
            )));
        }
        if self.weights.is_some() && self.method != MethodName::OmmJnt {
            return Err(Error::InvalidNesting(
                "weights are only used by omm-jnt".into(),
            ));
        }
        if !self.kappa.is_finite() {
            return Err(Error::InvalidParameter("kappa must be finite".into()));
        }
        match (&self.operator, &self.stream) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParameter(
                    "give either an operator or a stream, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "an operator or a stream is required".into(),
                ))
            }
            (None, Some(s)) => {
                if !matches!(self.method, MethodName::Sanger | MethodName::OmmSeq) {
                    return Err(Error::InvalidNesting(
                        "streaming fits use sanger or omm-seq".into(),
                    ));
                }
                if self.kappa != 0.0 {
                    return Err(Error::InvalidParameter(
                        "spectrum shift is not supported for streams".into(),
                    ));
                }
                if s.batch == 0 {
                    return Err(Error::InvalidParameter(
                        "batch size must be at least 1".into(),
                    ));
                }
            }
            _ => {}
        }
        self.optimizer.validate()
    }

    fn method(&self) -> Method {
        match self.method {
            MethodName::Omm => Method::Omm(NestingConfig::unnested(self.p)),
            MethodName::OmmSeq => Method::Omm(NestingConfig::sequential()),
            MethodName::OmmJnt => Method::Omm(NestingConfig::joint(self.weights.clone())),
            MethodName::Sanger => Method::Omm(NestingConfig::sanger()),
            MethodName::Lora => Method::Lora,
            MethodName::OmmInverse => Method::OmmInverse,
        }
    }
}

/// Reads a [`RunConfig`], either bare or as the `config` field of a run manifest.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let cfg = match value.get("config") {
        Some(inner) => serde_json::from_value(inner.clone())?,
        None => serde_json::from_value(value.clone())?,
    };
    if let Some(inputs) = value.get("inputs") {
        let inputs: Vec<InputRecord> = serde_json::from_value(inputs.clone())?;
        for input in inputs {
            let now = io::file_hash(&input.path)?;
            if now != input.sha256 {
                return Err(Error::InvalidParameter(format!(
                    "input {} changed since the manifest was written",
                    input.path.display()
                )));
            }
        }
    }
    let cfg: RunConfig = cfg;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub inputs: Vec<InputRecord>,
    pub status: FitStatus,
    pub steps: usize,
    pub final_objective: Option<f64>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
}

/// Result of a fit as written to disk.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub basis: DMatrix<f64>,
    pub trace: FitTrace,
    pub manifest: Manifest,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn negated(op: &SymmetricOperator) -> Result<SymmetricOperator> {
    let s = op.to_sparse()?;
    let neg = SparseSym::from_triplets(s.dim(), s.upper_triplets().map(|(i, j, a)| (i, j, -a)))?;
    Ok(SymmetricOperator::sparse(neg))
}

#[derive(Serialize)]
struct GenMeta<'a> {
    generator: &'a GenKind,
    dim: usize,
    /// which end of the operator's spectrum is the learning target
    target: Target,
    /// shift already folded into operator.mtx
    shift: f64,
    suggested_method: MethodName,
    files: Vec<&'a str>,
}

/// Writes `operator.mtx`, `reference.csv` (full spectrum, descending) and `meta.json` to
/// `out`; grid worlds also get `laplacian.mtx`.
pub fn cmd_gen(kind: &GenKind) -> Result<PathBuf> {
    let (op, extra, target, shift, method, out) = match kind {
        GenKind::RandomPsd {
            d,
            spectrum,
            lo,
            hi,
            seed,
            out,
        } => {
            let spectrum = match (spectrum, d) {
                (Some(s), _) => s.clone(),
                (None, Some(d)) => log_uniform_spectrum(*d, *lo, *hi, *seed),
                (None, None) => {
                    return Err(Error::InvalidParameter("give --d or --spectrum".into()))
                }
            };
            let d = d.unwrap_or(spectrum.len());
            let (op, _) = random_psd(d, &spectrum, *seed)?;
            (op, None, Target::Top, 0.0, MethodName::Omm, out)
        }
        GenKind::Gridworld {
            map,
            map_inline,
            out,
        } => {
            let text = match (map, map_inline) {
                (Some(p), _) => fs::read_to_string(p)?,
                (None, Some(s)) => s.replace('/', "\n"),
                (None, None) => {
                    return Err(Error::InvalidParameter("give --map or --map-inline".into()))
                }
            };
            let lap = gridworld_laplacian(&GridWorld::parse(&text)?)?;
            (
                lap.shifted_laplacian,
                Some(lap.laplacian),
                Target::Top,
                1.0,
                MethodName::OmmSeq,
                out,
            )
        }
        GenKind::Schrodinger {
            potential,
            n,
            half_width,
            out,
        } => {
            let problem = match potential {
                PotentialArg::Hydrogen => FdProblem {
                    half_width: half_width.unwrap_or(10.0),
                    ..FdProblem::hydrogen(*n)
                },
                PotentialArg::Well => FdProblem::infinite_well(*n, half_width.unwrap_or(5.0)),
                PotentialArg::Harmonic => FdProblem {
                    half_width: half_width.unwrap_or(10.0),
                    ..FdProblem::harmonic(*n)
                },
            };
            let fd = schrodinger_fd(&problem)?;
            let (target, method) = match problem.potential {
                Potential::Hydrogen => (Target::Top, MethodName::OmmSeq),
                _ => (Target::Bottom, MethodName::OmmInverse),
            };
            (fd.operator, None, target, fd.shift, method, out)
        }
    };
    fs::create_dir_all(out)?;
    io::save_operator(&out.join("operator.mtx"), &op)?;
    let reference = reference_eig(&op)?;
    io::save_spectrum(
        &out.join("reference.csv"),
        reference.eigenvalues().as_slice(),
    )?;
    let mut files = vec!["operator.mtx", "reference.csv", "meta.json"];
    if let Some(l) = extra {
        io::save_operator(&out.join("laplacian.mtx"), &l)?;
        files.push("laplacian.mtx");
    }
    write_json(
        &out.join("meta.json"),
        &GenMeta {
            generator: kind,
            dim: op.dim(),
            target,
            shift,
            suggested_method: method,
            files,
        },
    )?;
    Ok(out.clone())
}

/// Runs a fit and writes `V.mtx`, `trace.csv` and `manifest.json` (inverse runs also write
/// `G.mtx`; `V = LG`). Divergence is reported through the manifest status, not as an error.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    let mut opt = cfg.optimizer.clone();
    opt.seed = cfg.seed;
    let init = cfg.init.as_deref().map(io::read_dense).transpose()?;
    let mut inputs = Vec::new();
    let mut record = |role: &str, path: &Path| -> Result<()> {
        inputs.push(InputRecord {
            role: role.into(),
            path: path.to_path_buf(),
            sha256: io::file_hash(path)?,
        });
        Ok(())
    };
    if let Some(p) = &cfg.init {
        record("init", p)?;
    }

    fs::create_dir_all(&cfg.out)?;
    let mut outputs = vec![cfg.out.join("V.mtx"), cfg.out.join("trace.csv")];
    let (basis, trace) = match (&cfg.operator, &cfg.stream) {
        (Some(path), None) => {
            record("operator", path)?;
            let mut op = io::read_operator(path)?;
            if cfg.kappa != 0.0 {
                op = op.shifted(cfg.kappa);
            }
            let method = cfg.method();
            let (x, trace) = fit_method(&op, cfg.k, &method, &opt, init.as_ref())?;
            if method == Method::OmmInverse {
                io::save_dense(&cfg.out.join("G.mtx"), &x)?;
                outputs.push(cfg.out.join("G.mtx"));
                (op.apply_block(&x)?, trace)
            } else {
                (x, trace)
            }
        }
        (None, Some(s)) => {
            record("stream_covariance", &s.covariance)?;
            let cov = io::read_operator(&s.covariance)?;
            let mut stream = gaussian_stream(&cov, s.batch, cfg.seed)?;
            let nesting = match cfg.method() {
                Method::Omm(n) => n,
                _ => unreachable!("validated streaming method"),
            };
            fit_streaming(&mut stream, cfg.k, &nesting, &opt, init.as_ref())?
        }
        _ => unreachable!("validated operator/stream choice"),
    };
    io::save_dense(&cfg.out.join("V.mtx"), &basis)?;
    trace.save_csv(&cfg.out.join("trace.csv"))?;
    outputs.push(cfg.out.join("manifest.json"));
    let manifest = Manifest {
        config: cfg.clone(),
        inputs,
        status: trace.status,
        steps: trace.last().map_or(0, |r| r.step),
        final_objective: trace.final_objective(),
        outputs,
        version: env!("CARGO_PKG_VERSION").into(),
    };
    write_json(&cfg.out.join("manifest.json"), &manifest)?;
    Ok(FitOutcome {
        basis,
        trace,
        manifest,
    })
}

/// Evaluates a learned basis. The reference spectrum file must agree with a fresh dense
/// eigendecomposition of the operator, whose eigenvectors are then used for the comparison.
pub fn cmd_eval(
    v_path: &Path,
    reference_path: &Path,
    op_path: &Path,
    target: Target,
) -> Result<EvalReport> {
    let v = io::read_dense(v_path)?;
    let op = io::read_operator(op_path)?;
    let stored = io::read_spectrum_csv(reference_path)?;
    if stored.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            context: "reference spectrum",
            expected: format!("{} eigenvalues", op.dim()),
            found: format!("{}", stored.len()),
        });
    }
    let work = match target {
        Target::Top => op,
        Target::Bottom => negated(&op)?,
    };
    let reference = reference_eig(&work)?;
    let sign = if target == Target::Top { 1.0 } else { -1.0 };
    let scale = stored.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut expected: Vec<f64> = reference.eigenvalues().iter().map(|x| sign * x).collect();
    if target == Target::Bottom {
        expected.reverse();
    }
    for (a, b) in stored.iter().zip(&expected) {
        if (a - b).abs() > 1e-8 * scale {
            return Err(Error::InvalidParameter(format!(
                "reference spectrum does not match the operator ({a} vs {b})"
            )));
        }
    }
    let mut report = EvalReport::build(&work, &v, &reference)?;
    if target == Target::Bottom {
        for x in report
            .eigenvalue_estimates
            .iter_mut()
            .chain(report.reference_eigenvalues.iter_mut())
        {
            *x = -*x;
        }
    }
    Ok(report)
}

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), report)?;
    let mut w = csv::Writer::from_path(dir.join("report.csv"))?;
    w.write_record(report.csv_header())?;
    w.write_record(report.csv_row())?;
    w.flush()?;
    Ok(())
}

pub fn cmd_check(suite: Suite, opts: CheckOptions) -> Result<Vec<CheckResult>> {
    run_suite(suite, opts)
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Gen { kind } => {
            let out = cmd_gen(&kind)?;
            println!("wrote {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Fit(args) => {
            let cfg = RunConfig::from_args(&args)?;
            let outcome = cmd_fit(&cfg)?;
            let m = &outcome.manifest;
            println!(
                "status={:?} steps={} objective={}",
                m.status,
                m.steps,
                m.final_objective
                    .map(io::fmt_f64)
                    .unwrap_or_else(|| "nan".into())
            );
            if m.status == FitStatus::Diverged {
                eprintln!("error: {}", Error::Diverged { step: m.steps });
                return Ok(EXIT_DIVERGED);
            }
            Ok(EXIT_OK)
        }
        Command::Eval(a) => {
            let report = cmd_eval(&a.v, &a.reference, &a.operator, a.target)?;
            if let Some(dir) = &a.out {
                write_report(dir, &report)?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(EXIT_OK)
        }
        Command::Check(a) => {
            let results = cmd_check(
                a.suite,
                CheckOptions {
                    seed: a.seed,
                    inject_wrong_sign: a.inject_wrong_sign,
                },
            )?;
            let mut failed = Vec::new();
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                println!(
                    "{tag} {} (max error {:.3e}, tolerance {:.1e})",
                    r.name, r.value, r.tolerance
                );
                if !r.passed {
                    failed.push(r.name.clone());
                }
            }
            if failed.is_empty() {
                Ok(EXIT_OK)
            } else {
                eprintln!("error: {}", Error::CheckFailed(failed.join(", ")));
                Ok(EXIT_CHECK_FAILED)
            }
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Diverged { .. } => EXIT_DIVERGED,
                Error::CheckFailed(_) => EXIT_CHECK_FAILED,
                _ => EXIT_USAGE,
            }
        }
    }
}
