//! Grid orchestration: running (dataset, regularization, method) cells
//! serially, persisting traces, printing the summary table, and fanning
//! the finished traces out to the chart renderer.
//!
//! Cells run serially on purpose: the traces carry per-step wall times,
//! and parallel cells would contaminate each other's timings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use greedy_newton::data::{self, write_trace, Regime, SyntheticSpec, TraceHeader};
use greedy_newton::oracles::LogisticProblem;
use greedy_newton::solvers::{solve, IterateTrace, Method, SolverConfig, SolverError, StopReason};

use crate::config::{parse_compare_config, CompareConfig};
use crate::plot::{self, curve_label, fmt_reg, slug, PlotKind};
use crate::Failure;

/// Everything needed to run one solver on one prepared objective.
pub struct SolveJob<'a> {
    pub problem: &'a LogisticProblem,
    pub dataset: String,
    pub seed: Option<u64>,
    pub method: Method,
    pub lambda: f64,
    pub budget: u32,
    pub armijo_init: f64,
    pub record_iterates: bool,
}

/// Run one cell and wrap the result with its provenance header.
pub fn solve_one(job: &SolveJob<'_>) -> Result<(TraceHeader, IterateTrace), SolverError> {
    let mut cfg = SolverConfig::new(job.method);
    cfg.max_iterations = job.budget;
    cfg.record_iterates = job.record_iterates;
    cfg.armijo.initial_step = job.armijo_init;
    let trace = solve(job.problem, &cfg)?;
    let config = format!(
        "budget={} grad_stop={:e} armijo_init={} jitter_base={:e}",
        job.budget, cfg.gradient_norm_stop, job.armijo_init, cfg.jitter_base,
    );
    let header = TraceHeader {
        dataset: job.dataset.clone(),
        lambda: job.lambda,
        seed: job.seed,
        config,
    };
    Ok((header, trace))
}

/// One finished cell, as the summary table wants it.
struct SummaryRow {
    dataset: String,
    lambda: f64,
    label: String,
    f_series: Vec<f64>,
    final_f: f64,
    iterations: u32,
    stop: StopReason,
}

/// Print the summary: final value, iterations used, and the first
/// iteration at which each method came within 1e-8 of the best final
/// value seen in its (dataset, reg) group.
fn print_summary(rows: &[SummaryRow]) {
    if rows.is_empty() {
        return;
    }
    println!();
    println!(
        "{:<50} {:>5} {:<24} {:>12} {:>6} {:>9}  stop",
        "dataset", "reg", "method", "final f", "iters", "to 1e-8"
    );
    for row in rows {
        let f_star = rows
            .iter()
            .filter(|r| r.dataset == row.dataset && r.lambda == row.lambda)
            .map(|r| r.final_f)
            .fold(f64::INFINITY, f64::min)
            - 1e-16;
        let reached = row
            .f_series
            .iter()
            .position(|f| f - f_star < 1e-8)
            .map_or_else(|| "-".to_string(), |k| k.to_string());
        println!(
            "{:<50} {:>5} {:<24} {:>12.4e} {:>6} {:>9}  {}",
            row.dataset,
            fmt_reg(row.lambda),
            row.label,
            row.final_f,
            row.iterations,
            reached,
            row.stop,
        );
    }
}

/// A dataset entering the grid: either a synthetic draw or a file.
enum Source {
    Synthetic(SyntheticSpec),
    File(PathBuf),
}

impl Source {
    fn load(&self) -> Result<(LogisticProblem, String, Option<u64>), Failure> {
        match self {
            Source::Synthetic(spec) => {
                Ok((data::generate(spec), spec.dataset_id(), Some(spec.seed)))
            }
            Source::File(path) => {
                let p = data::load_libsvm(path)?;
                Ok((p, path.display().to_string(), None))
            }
        }
    }
}

fn trace_file_name(label: &str, dataset: &str, lambda: f64) -> String {
    format!(
        "{}_{}_reg{}.trace",
        slug(label),
        slug(dataset),
        fmt_reg(lambda)
    )
}

/// Shared cell loop for `compare` and `sweep-armijo`: run every
/// (source, lambda, method-variant) cell, write traces, emit charts per
/// group, and print the summary. Method variants carry their
/// backtracking initialization so sweeps can reuse the machinery.
fn run_grid(
    sources: &[Source],
    lambdas: &[f64],
    variants: &[(Method, f64)],
    budget: u32,
    out_dir: &Path,
    kinds: &[PlotKind],
) -> Result<(), Failure> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    let mut all_entries: Vec<(TraceHeader, IterateTrace)> = Vec::new();

    for source in sources {
        let (base, dataset, seed) = source.load()?;
        for &lambda in lambdas {
            let problem = base.with_lambda(lambda)?;
            for &(method, armijo_init) in variants {
                let job = SolveJob {
                    problem: &problem,
                    dataset: dataset.clone(),
                    seed,
                    method,
                    lambda,
                    budget,
                    armijo_init,
                    record_iterates: true,
                };
                let (header, trace) = match solve_one(&job) {
                    Ok(done) => done,
                    Err(e) => {
                        let cell = format!("{method} on {dataset} reg={}", fmt_reg(lambda));
                        eprintln!("cell failed: {cell}: {e}");
                        failures.push(cell);
                        continue;
                    }
                };
                let label = curve_label(&header, &trace);
                let path = out_dir.join(trace_file_name(&label, &dataset, lambda));
                write_trace(&path, &header, &trace)?;
                println!("wrote {}", path.display());
                rows.push(SummaryRow {
                    dataset: dataset.clone(),
                    lambda,
                    label,
                    f_series: trace.records.iter().map(|r| r.f).collect(),
                    final_f: trace.final_f(),
                    iterations: trace.iterations(),
                    stop: trace.stop,
                });
                all_entries.push((header, trace));
            }
        }
    }

    for &kind in kinds {
        for path in plot::emit_grouped(kind, &all_entries, out_dir)
            .map_err(|e| Failure::Usage(format!("cannot write chart: {e}")))?
        {
            println!("wrote {}", path.display());
        }
    }

    print_summary(&rows);

    if rows.is_empty() && !failures.is_empty() {
        let mut msg = String::from("every cell failed:");
        for f in &failures {
            let _ = write!(msg, "\n  {f}");
        }
        return Err(Failure::Numerical(msg));
    }
    if !failures.is_empty() {
        println!(
            "\n{} of {} cells failed; see stderr",
            failures.len(),
            failures.len() + rows.len()
        );
    }
    Ok(())
}

pub fn cmd_compare(config_path: Option<&Path>, cli_out: &Path) -> Result<(), Failure> {
    let cfg = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            parse_compare_config(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => CompareConfig::default(),
    };
    let out_dir = cfg.out.clone().unwrap_or_else(|| cli_out.to_path_buf());

    let mut sources: Vec<Source> = Vec::new();
    for &regime in &cfg.regimes {
        let mut spec = SyntheticSpec::new(regime, cfg.seed);
        spec.num_examples = cfg.examples;
        sources.push(Source::Synthetic(spec));
    }
    for file in &cfg.data_files {
        sources.push(Source::File(file.clone()));
    }

    let variants: Vec<(Method, f64)> = cfg.methods.iter().map(|&m| (m, 1.0)).collect();
    run_grid(
        &sources,
        &cfg.lambdas,
        &variants,
        cfg.budget,
        &out_dir,
        &PlotKind::ALL,
    )
}

pub fn cmd_sweep_armijo(
    inits: &str,
    regime: Regime,
    reg: f64,
    seed: u64,
    examples: usize,
    budget: u32,
    out_dir: &Path,
) -> Result<(), Failure> {
    if !reg.is_finite() || reg < 0.0 {
        return Err(Failure::Usage(
            "regularization must be finite and nonnegative".to_string(),
        ));
    }
    let mut parsed: Vec<f64> = Vec::new();
    for piece in inits.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let v: f64 = piece
            .parse()
            .map_err(|e| Failure::Usage(format!("bad initial step {piece:?}: {e}")))?;
        if !v.is_finite() || v <= 0.0 {
            return Err(Failure::Usage(format!(
                "initial step must be positive, got {piece}"
            )));
        }
        parsed.push(v);
    }
    if parsed.is_empty() {
        return Err(Failure::Usage("no initial steps given".to_string()));
    }

    let mut spec = SyntheticSpec::new(regime, seed);
    spec.num_examples = examples;
    let sources = [Source::Synthetic(spec)];

    // Each initialization is its own curve, with greedy Newton as the
    // baseline everything is compared against.
    let mut variants: Vec<(Method, f64)> = parsed
        .into_iter()
        .map(|init| (Method::ArmijoNewton, init))
        .collect();
    variants.push((Method::GreedyNewton, 1.0));

    run_grid(&sources, &[reg], &variants, budget, out_dir, &PlotKind::ALL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use greedy_newton::data::DEFAULT_SEED;

    #[test]
    fn trace_file_names_distinguish_variants() {
        let a = trace_file_name(
            "armijo-newton (init 8)",
            "synthetic:strongly-convex:m=500:seed=42",
            1.0,
        );
        let b = trace_file_name(
            "armijo-newton",
            "synthetic:strongly-convex:m=500:seed=42",
            1.0,
        );
        assert_ne!(a, b);
        assert!(a.ends_with("_reg1.trace"));
        assert!(!a.contains(' '));
        assert!(!a.contains('('));
    }

    #[test]
    fn solve_one_echoes_provenance() {
        let spec = SyntheticSpec::new(Regime::StronglyConvex, DEFAULT_SEED);
        let problem = data::generate(&spec).with_lambda(1.0).unwrap();
        let job = SolveJob {
            problem: &problem,
            dataset: spec.dataset_id(),
            seed: Some(spec.seed),
            method: Method::ArmijoNewton,
            lambda: 1.0,
            budget: 3,
            armijo_init: 8.0,
            record_iterates: false,
        };
        let (header, trace) = solve_one(&job).unwrap();
        assert_eq!(header.seed, Some(DEFAULT_SEED));
        assert_eq!(header.lambda, 1.0);
        assert!(header.config.contains("armijo_init=8"));
        assert!(trace.iterations() <= 3);
        assert!(trace.f_is_non_increasing());
    }
}
