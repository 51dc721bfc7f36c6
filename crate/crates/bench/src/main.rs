//! Benchmark CLI for the greedy-newton library.
//!
//! Subcommands cover the full experiment pipeline: `generate` synthetic
//! datasets, `solve` one method on one dataset, `compare` a method grid
//! with summary table and charts, `sweep-armijo` backtracking
//! initializations against a greedy-Newton baseline, `check` recorded
//! traces against convergence bounds, and `plot` traces to SVG.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
//! 3 a checked bound was violated.

mod config;
mod plot;
mod run;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use greedy_newton::data::{
    self, read_trace, write_libsvm, DataError, Regime, SyntheticSpec, TraceHeader, DEFAULT_SEED,
};
use greedy_newton::oracles::{Objective, OracleError};
use greedy_newton::solvers::{IterateTrace, Method, SolverError};
use greedy_newton::verify::{
    check_arbitrary_step, check_as_fast_as_newton, check_global_rate, estimate_bounds,
    logistic_analytic_bounds, RateVariant, ReferenceOptimum, VerifyError, DEFAULT_DIST_FLOOR,
    DEFAULT_GAP_FLOOR,
};
use nalgebra::DVector;

use crate::plot::PlotKind;

/// A failed command, classed by which exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or unreadable / malformed input files: exit 1.
    Usage(String),
    /// The computation itself broke down: exit 2.
    Numerical(String),
    /// A checked bound did not hold: exit 3.
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Check(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) | Failure::Check(m) => f.write_str(m),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Oracle(inner) => Failure::from(inner),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidConfig(_)
            | SolverError::DimensionMismatch { .. }
            | SolverError::MissingCapability { .. } => Failure::Usage(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Data(inner) => Failure::from(inner),
            VerifyError::Solver(inner) => Failure::from(inner),
            VerifyError::MissingIterates | VerifyError::TraceTooShort => {
                Failure::Usage(e.to_string())
            }
            VerifyError::OptimumAboveTrace { .. } => Failure::Check(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gn-bench",
    version,
    about = "Benchmarks and verification for Newton methods with exact line search",
    after_help = "Exit codes: 0 success, 1 usage/input error, 2 numerical failure, 3 bound check failed."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic logistic-regression dataset in LIBSVM format.
    Generate {
        /// Problem shape: strongly-convex, repeated-features,
        /// strictly-convex-separable, or convex-separable.
        #[arg(long)]
        regime: Regime,
        /// RNG seed for the dataset draw.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Number of examples.
        #[arg(long, default_value_t = 500)]
        examples: usize,
        /// Output file path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one solver on a dataset and record its iterate trace.
    Solve {
        /// Solver: pure-newton, greedy-newton, armijo-newton,
        /// greedy-gradient, hybrid, plane-newton, cubic-linesearch, or
        /// cubic-greedy-lm.
        #[arg(long)]
        method: Method,
        /// LIBSVM dataset file.
        #[arg(long)]
        data: PathBuf,
        /// L2 regularization strength.
        #[arg(long, default_value_t = 0.0)]
        reg: f64,
        /// Iteration budget.
        #[arg(long, default_value_t = 25)]
        max_iter: u32,
        /// First trial step for the backtracking line search.
        #[arg(long, default_value_t = 1.0)]
        armijo_init: f64,
        /// Store full iterates in the trace (needed by distance checks).
        #[arg(long)]
        record_iterates: bool,
        /// Trace output path.
        #[arg(long)]
        trace_out: PathBuf,
        /// Also compute a certified reference optimum and write it here.
        #[arg(long)]
        optimum_out: Option<PathBuf>,
    },
    /// Run a grid of (dataset, regularization, method) cells, write all
    /// traces and charts, and print a summary table.
    Compare {
        /// Key=value config file; defaults cover the full synthetic grid.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (config `out` key overrides).
        #[arg(long, default_value = "gn-runs")]
        out: PathBuf,
    },
    /// Compare backtracking initial step sizes against greedy Newton.
    #[command(name = "sweep-armijo")]
    SweepArmijo {
        /// Comma-separated initial step sizes.
        #[arg(long, default_value = "1,2,8")]
        inits: String,
        /// Synthetic regime to sweep on.
        #[arg(long, default_value_t = Regime::StronglyConvex)]
        regime: Regime,
        /// L2 regularization strength.
        #[arg(long, default_value_t = 1.0)]
        reg: f64,
        /// RNG seed for the dataset draw.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Number of examples.
        #[arg(long, default_value_t = 500)]
        examples: usize,
        /// Iteration budget.
        #[arg(long, default_value_t = 25)]
        budget: u32,
        /// Output directory.
        #[arg(long, default_value = "gn-runs")]
        out: PathBuf,
    },
    /// Check a recorded trace against global-rate and distance bounds.
    Check {
        /// Trace file to verify.
        #[arg(long)]
        trace: PathBuf,
        /// Where curvature constants come from.
        #[arg(long, value_enum)]
        bounds: BoundsMode,
        /// Certified optimum file; computed on the fly when omitted.
        #[arg(long)]
        optimum: Option<PathBuf>,
        /// Dataset file override; defaults to the trace header's dataset.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Render trace files as SVG charts, one per (dataset, reg) group.
    Plot {
        /// Chart kind: f-vs-iter, step-vs-iter, or f-vs-time.
        #[arg(long)]
        kind: PlotKind,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Trace files to draw.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundsMode {
    /// Strong convexity from the regularizer, smoothness from the data
    /// spectrum; requires reg > 0.
    Analytic,
    /// All constants sampled along the recorded iterates.
    Estimate,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Generate {
            regime,
            seed,
            examples,
            out,
        } => cmd_generate(regime, seed, examples, &out),
        Cmd::Solve {
            method,
            data,
            reg,
            max_iter,
            armijo_init,
            record_iterates,
            trace_out,
            optimum_out,
        } => cmd_solve(
            method,
            &data,
            reg,
            max_iter,
            armijo_init,
            record_iterates,
            &trace_out,
            optimum_out.as_deref(),
        ),
        Cmd::Compare { config, out } => run::cmd_compare(config.as_deref(), &out),
        Cmd::SweepArmijo {
            inits,
            regime,
            reg,
            seed,
            examples,
            budget,
            out,
        } => run::cmd_sweep_armijo(&inits, regime, reg, seed, examples, budget, &out),
        Cmd::Check {
            trace,
            bounds,
            optimum,
            data,
        } => cmd_check(&trace, bounds, optimum.as_deref(), data.as_deref()),
        Cmd::Plot { kind, out, traces } => cmd_plot(kind, &out, &traces),
    }
}

fn cmd_generate(regime: Regime, seed: u64, examples: usize, out: &Path) -> Result<(), Failure> {
    let mut spec = SyntheticSpec::new(regime, seed);
    spec.num_examples = examples;
    let problem = data::generate(&spec);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    write_libsvm(out, &problem)?;
    println!(
        "wrote {} ({} examples, {} features, seed {seed})",
        out.display(),
        problem.num_examples(),
        problem.dim(),
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    method: Method,
    data_path: &Path,
    reg: f64,
    max_iter: u32,
    armijo_init: f64,
    record_iterates: bool,
    trace_out: &Path,
    optimum_out: Option<&Path>,
) -> Result<(), Failure> {
    let problem = data::load_libsvm(data_path)?.with_lambda(reg)?;
    let dataset = data_path.display().to_string();
    let (header, trace) = run::solve_one(&run::SolveJob {
        problem: &problem,
        dataset,
        seed: None,
        method,
        lambda: reg,
        budget: max_iter,
        armijo_init,
        record_iterates,
    })?;
    if let Some(dir) = trace_out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    data::write_trace(trace_out, &header, &trace)?;
    println!(
        "{method}: f {:.6e} -> {:.6e} in {} iterations (stop: {}), trace {}",
        trace.records.first().map_or(f64::NAN, |r| r.f),
        trace.final_f(),
        trace.iterations(),
        trace.stop,
        trace_out.display(),
    );
    if let Some(path) = optimum_out {
        let optimum = ReferenceOptimum::compute(&problem)?;
        optimum.save(path)?;
        println!(
            "reference optimum: f* {:.6e}, |grad| {:.3e}, saved to {}",
            optimum.f,
            optimum.grad_norm,
            path.display(),
        );
    }
    Ok(())
}

/// Rebuild the objective a trace was recorded on: an explicit file
/// override, a `synthetic:` dataset id from the header, or the header
/// dataset interpreted as a path.
fn resolve_problem(
    header: &TraceHeader,
    data_override: Option<&Path>,
) -> Result<greedy_newton::oracles::LogisticProblem, Failure> {
    let base = if let Some(path) = data_override {
        data::load_libsvm(path)?
    } else if let Some(spec) = config::parse_synthetic_id(&header.dataset) {
        data::generate(&spec)
    } else {
        let path = Path::new(&header.dataset);
        data::load_libsvm(path).map_err(|e| {
            Failure::Usage(format!(
                "cannot reload dataset {:?} from the trace header ({e}); pass --data",
                header.dataset
            ))
        })?
    };
    Ok(base.with_lambda(header.lambda)?)
}

/// Thin the recorded iterates (plus the optimum) down to at most
/// `keep + 1` sample points so bound estimation stays cheap on
/// high-dimensional traces.
fn bound_samples(
    trace: &IterateTrace,
    optimum: &ReferenceOptimum,
    dim: usize,
    keep: usize,
) -> Vec<DVector<f64>> {
    let mut samples = Vec::new();
    match &trace.iterates {
        Some(iterates) if !iterates.is_empty() => {
            let stride = iterates.len().div_ceil(keep);
            for x in iterates.iter().step_by(stride.max(1)) {
                samples.push(x.clone());
            }
            if let Some(last) = iterates.last() {
                if samples.last() != Some(last) {
                    samples.push(last.clone());
                }
            }
        }
        _ => samples.push(DVector::zeros(dim)),
    }
    samples.push(optimum.x.clone());
    samples
}

fn cmd_check(
    trace_path: &Path,
    mode: BoundsMode,
    optimum_path: Option<&Path>,
    data_override: Option<&Path>,
) -> Result<(), Failure> {
    let (header, trace) = read_trace(trace_path)?;
    let problem = resolve_problem(&header, data_override)?;
    println!(
        "trace {}: method {}, dataset {}, reg {}",
        trace_path.display(),
        trace.method,
        header.dataset,
        header.lambda,
    );

    let optimum = match optimum_path {
        Some(path) => ReferenceOptimum::load(path, &problem)?,
        None => ReferenceOptimum::compute(&problem)?,
    };
    println!(
        "reference optimum: f* {:.6e}, |grad| {:.3e} (certified)",
        optimum.f, optimum.grad_norm
    );

    let samples = bound_samples(&trace, &optimum, problem.dim(), 7);
    let bounds = match mode {
        BoundsMode::Analytic => logistic_analytic_bounds(&problem, &samples)?,
        BoundsMode::Estimate => estimate_bounds(&problem, &samples)?,
    };
    println!(
        "bounds ({}): mu {:.6e}, L {:.6e}, M {:.6e}, kappa {:.3e}",
        bounds.provenance,
        bounds.mu,
        bounds.l,
        bounds.m,
        bounds.condition_number(),
    );

    let mut violations: Vec<String> = Vec::new();

    // Global linear rate: each method is gated on the bound its own
    // line-search strategy is entitled to; the other variant is shown
    // for context only.
    let (gated_variant, info_variant) = match trace.method {
        Method::GreedyNewton => (
            Some(RateVariant::ExactLineSearch),
            Some(RateVariant::Backtracking),
        ),
        Method::ArmijoNewton => (
            Some(RateVariant::Backtracking),
            Some(RateVariant::ExactLineSearch),
        ),
        _ => (None, Some(RateVariant::ExactLineSearch)),
    };
    if let Some(variant) = gated_variant {
        let report = check_global_rate(&trace, &bounds, &optimum, variant, DEFAULT_GAP_FLOOR)?;
        println!("{report}");
        if !report.holds() {
            violations.push(format!("global rate ({variant})"));
        }
    }
    if let Some(variant) = info_variant {
        match check_global_rate(&trace, &bounds, &optimum, variant, DEFAULT_GAP_FLOOR) {
            Ok(report) => {
                println!(
                    "informational only ({} is not this method's guarantee):",
                    variant
                );
                println!("{report}");
            }
            Err(e) => println!("informational rate check skipped: {e}"),
        }
    }

    // Distance bounds need the actual iterates.
    if trace.iterates.is_some() {
        let fast = check_as_fast_as_newton(&trace, &bounds, &optimum, DEFAULT_DIST_FLOOR)?;
        println!("{fast}");
        if trace.method == Method::GreedyNewton && !fast.holds() {
            violations.push("newton-distance bound".to_string());
        }
        if matches!(
            trace.method,
            Method::GreedyNewton | Method::ArmijoNewton | Method::PureNewton
        ) {
            let arb = check_arbitrary_step(&trace, &bounds, &optimum, DEFAULT_DIST_FLOOR)?;
            println!("{arb}");
            if !arb.holds() {
                violations.push("arbitrary-step distance bound".to_string());
            }
        }
    } else {
        println!("distance checks skipped: trace has no iterate columns (use --record-iterates)");
    }

    if violations.is_empty() {
        println!("check result: all gated bounds hold");
        Ok(())
    } else {
        println!("check result: VIOLATED ({})", violations.join("; "));
        Err(Failure::Check(format!(
            "{} gated check(s) violated on {}",
            violations.len(),
            trace_path.display(),
        )))
    }
}

fn cmd_plot(kind: PlotKind, out_dir: &Path, trace_paths: &[PathBuf]) -> Result<(), Failure> {
    let mut entries = Vec::new();
    for path in trace_paths {
        entries.push(read_trace(path)?);
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", out_dir.display())))?;
    let written = plot::emit_grouped(kind, &entries, out_dir)
        .map_err(|e| Failure::Usage(format!("cannot write chart: {e}")))?;
    if written.is_empty() {
        println!("nothing to draw: all traces were empty for this chart kind");
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
