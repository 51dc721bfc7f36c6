//! Config-file parsing for the comparison grid, plus the inverse of the
//! synthetic dataset-id string so checks can regenerate a dataset from a
//! trace header alone.

use std::path::PathBuf;
use std::str::FromStr;

use greedy_newton::data::{Regime, SyntheticSpec, DEFAULT_SEED};
use greedy_newton::solvers::Method;

/// Grid description for `compare`: which datasets, regularization
/// strengths, and methods to cross, plus budget and output location.
#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub regimes: Vec<Regime>,
    pub data_files: Vec<PathBuf>,
    pub lambdas: Vec<f64>,
    pub methods: Vec<Method>,
    pub budget: u32,
    pub examples: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            regimes: Regime::ALL.to_vec(),
            data_files: Vec::new(),
            lambdas: vec![0.0, 1.0],
            methods: vec![Method::ArmijoNewton, Method::Hybrid, Method::GreedyNewton],
            budget: 25,
            examples: 500,
            seed: DEFAULT_SEED,
            out: None,
        }
    }
}

fn parse_list<T: FromStr>(value: &str, what: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let mut items = Vec::new();
    for piece in value.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        items.push(
            piece
                .parse::<T>()
                .map_err(|e| format!("bad {what} {piece:?}: {e}"))?,
        );
    }
    if items.is_empty() {
        return Err(format!("empty {what} list"));
    }
    Ok(items)
}

/// Parse the `key = value` config format. Lines starting with `#` and
/// blank lines are skipped; list values are comma-separated. Keys:
/// `regimes`, `data`, `lambdas`, `methods`, `budget`, `examples`,
/// `seed`, `out`.
pub fn parse_compare_config(text: &str) -> Result<CompareConfig, String> {
    let mut cfg = CompareConfig::default();
    let mut saw_regimes = false;
    let mut saw_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {lineno}: expected key = value, got {line:?}"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "regimes" => {
                cfg.regimes =
                    parse_list(value, "regime").map_err(|e| format!("line {lineno}: {e}"))?;
                saw_regimes = true;
            }
            "data" => {
                cfg.data_files = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect();
                saw_data = true;
            }
            "lambdas" => {
                cfg.lambdas =
                    parse_list(value, "lambda").map_err(|e| format!("line {lineno}: {e}"))?;
                if cfg.lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
                    return Err(format!(
                        "line {lineno}: lambdas must be finite and nonnegative"
                    ));
                }
            }
            "methods" => {
                cfg.methods =
                    parse_list(value, "method").map_err(|e| format!("line {lineno}: {e}"))?;
            }
            "budget" => {
                cfg.budget = value
                    .parse()
                    .map_err(|e| format!("line {lineno}: bad budget: {e}"))?;
                if cfg.budget == 0 {
                    return Err(format!("line {lineno}: budget must be at least 1"));
                }
            }
            "examples" => {
                cfg.examples = value
                    .parse()
                    .map_err(|e| format!("line {lineno}: bad examples: {e}"))?;
                if cfg.examples == 0 {
                    return Err(format!("line {lineno}: examples must be at least 1"));
                }
            }
            "seed" => {
                cfg.seed = value
                    .parse()
                    .map_err(|e| format!("line {lineno}: bad seed: {e}"))?;
            }
            "out" => cfg.out = Some(PathBuf::from(value)),
            other => return Err(format!("line {lineno}: unknown key {other:?}")),
        }
    }
    // A config that names explicit data files replaces the synthetic
    // grid unless regimes were also explicitly listed.
    if saw_data && !saw_regimes {
        cfg.regimes.clear();
    }
    if cfg.regimes.is_empty() && cfg.data_files.is_empty() {
        return Err("config selects no datasets (regimes and data are both empty)".to_string());
    }
    Ok(cfg)
}

/// Inverse of `SyntheticSpec::dataset_id`: parse strings like
/// `synthetic:strongly-convex:m=500:seed=42`.
pub fn parse_synthetic_id(id: &str) -> Option<SyntheticSpec> {
    let mut parts = id.split(':');
    if parts.next()? != "synthetic" {
        return None;
    }
    let regime: Regime = parts.next()?.parse().ok()?;
    let m: usize = parts.next()?.strip_prefix("m=")?.parse().ok()?;
    let seed: u64 = parts.next()?.strip_prefix("seed=")?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    let mut spec = SyntheticSpec::new(regime, seed);
    spec.num_examples = m;
    Some(spec)
}
