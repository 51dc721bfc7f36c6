//! Synthetic dataset generation, LIBSVM-format interchange, and trace
//! persistence.
//!
//! Generation is fully deterministic: a ChaCha8 stream keyed by the seed
//! feeds a Box-Muller transform, and the draw order is fixed (feature
//! matrix row-major, then the planted separator, then one label-noise
//! draw per example). Identical specs therefore produce bit-identical
//! problems on every platform.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::oracles::{Features, LogisticProblem, OracleError};
use crate::solvers::{
    solve, Branch, IterateRecord, IterateTrace, Method, SolverConfig, StopReason,
};

/// Seed used by shipped default configurations. The separable regimes
/// have been certified linearly separable at this seed (see
/// `certify_separable` and the regression tests).
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("labels are not binary: found {found:?}; supported label sets are {{-1,+1}}, {{0,1}}, {{1,2}}")]
    UnsupportedLabels { found: Vec<f64> },
    #[error("unsupported format version {found:?}; this build reads {expected:?}")]
    VersionMismatch {
        found: String,
        expected: &'static str,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// The four synthetic problem shapes: two low-dimensional regimes with
/// label noise dominating (one of them with exactly duplicated columns,
/// making the unregularized Hessian singular), and two high-dimensional
/// regimes whose instances are linearly separable at the shipped seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    StronglyConvex,
    RepeatedFeatures,
    StrictlyConvexSeparable,
    ConvexSeparable,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::StronglyConvex,
        Regime::RepeatedFeatures,
        Regime::StrictlyConvexSeparable,
        Regime::ConvexSeparable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::StronglyConvex => "strongly-convex",
            Regime::RepeatedFeatures => "repeated-features",
            Regime::StrictlyConvexSeparable => "strictly-convex-separable",
            Regime::ConvexSeparable => "convex-separable",
        }
    }

    /// Feature dimension the regime prescribes.
    pub fn dimension(self) -> usize {
        match self {
            Regime::StronglyConvex | Regime::RepeatedFeatures => 20,
            Regime::StrictlyConvexSeparable => 200,
            Regime::ConvexSeparable => 2000,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown regime {0:?}; expected one of strongly-convex, repeated-features, strictly-convex-separable, convex-separable")]
pub struct UnknownRegime(String);

impl FromStr for Regime {
    type Err = UnknownRegime;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| UnknownRegime(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub regime: Regime,
    pub num_examples: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(regime: Regime, seed: u64) -> Self {
        SyntheticSpec {
            regime,
            num_examples: 500,
            seed,
        }
    }

    /// Stable identifier used in trace headers and output file names.
    pub fn dataset_id(&self) -> String {
        format!(
            "synthetic:{}:m={}:seed={}",
            self.regime, self.num_examples, self.seed
        )
    }
}

/// Deterministic standard-normal stream: ChaCha8 keyed by the seed,
/// transformed by Box-Muller. Both variates of each Box-Muller pair are
/// consumed before fresh uniforms are drawn.
pub struct NormalSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalSource {
    pub fn new(seed: u64) -> Self {
        NormalSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 lies in (0, 1] so the log is finite; u2 in [0, 1).
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(radius * theta.sin());
        radius * theta.cos()
    }
}

/// Generates a synthetic instance: feature entries standard normal, a
/// planted separator `x~` standard normal, labels
/// `b_i = sign(a_i . x~ + delta_i)` with standard-normal noise `delta_i`
/// and `sign(0)` mapped to `+1`. The repeated-features regime draws 10
/// free columns per row and copies them into the last 10, so the
/// duplicated columns are bitwise equal. Returns the unregularized
/// problem; use [`LogisticProblem::with_lambda`] to add a ridge.
pub fn generate(spec: &SyntheticSpec) -> LogisticProblem {
    let m = spec.num_examples;
    let n = spec.regime.dimension();
    let mut src = NormalSource::new(spec.seed);

    let mut a = DMatrix::zeros(m, n);
    match spec.regime {
        Regime::RepeatedFeatures => {
            let half = n / 2;
            for i in 0..m {
                for j in 0..half {
                    let v = src.sample();
                    a[(i, j)] = v;
                    a[(i, j + half)] = v;
                }
            }
        }
        _ => {
            for i in 0..m {
                for j in 0..n {
                    a[(i, j)] = src.sample();
                }
            }
        }
    }

    let planted = DVector::from_fn(n, |_, _| src.sample());
    let margins = &a * &planted;
    let labels = DVector::from_fn(m, |i, _| {
        let noisy = margins[i] + src.sample();
        if noisy >= 0.0 {
            1.0
        } else {
            -1.0
        }
    });

    LogisticProblem::dense(a, labels, 0.0).expect("generated data is well-formed by construction")
}

/// Separability certificate: minimizes the unregularized logistic loss
/// and accepts any iterate that classifies every example with a strictly
/// positive margin. Each per-example loss term below `ln 2` forces a
/// positive margin, so driving the total loss low enough always certifies
/// when the data is separable; non-separable data exhausts the budget and
/// returns `None`. The certificate errs only toward `None`.
pub fn certify_separable(p: &LogisticProblem, max_iterations: u32) -> Option<DVector<f64>> {
    if p.lambda() != 0.0 || p.num_examples() == 0 {
        return None;
    }
    let mut cfg = SolverConfig::new(Method::GreedyNewton);
    cfg.max_iterations = max_iterations;
    cfg.f_value_stop = Some(0.5);
    cfg.record_iterates = true;
    let trace = solve(p, &cfg).ok()?;
    let w = trace.iterates.as_ref()?.last()?;
    let margins = p.features().margins(w);
    let separated = margins
        .iter()
        .zip(p.labels().iter())
        .all(|(&margin, &label)| label * margin > 0.0);
    separated.then(|| w.clone())
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Parses LIBSVM text: one example per line, `label index:value ...` with
/// 1-based strictly ascending indices. The feature count is the largest
/// index seen. Label sets {-1,+1}, {0,1}, and {1,2} are accepted, the
/// latter two mapped onto {-1,+1} with the smaller raw label becoming -1.
pub fn parse_libsvm(text: &str, origin: &str) -> Result<LogisticProblem, DataError> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut raw_labels: Vec<f64> = Vec::new();
    let mut cols = 0usize;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let label_tok = parts.next().expect("non-empty line has a first token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(origin, line_no, format!("invalid label {label_tok:?}")))?;

        let mut row = Vec::new();
        let mut prev_index = 0usize;
        for tok in parts {
            let (index_s, value_s) = tok.split_once(':').ok_or_else(|| {
                parse_err(
                    origin,
                    line_no,
                    format!("expected index:value, got {tok:?}"),
                )
            })?;
            let index: usize = index_s.parse().map_err(|_| {
                parse_err(
                    origin,
                    line_no,
                    format!("invalid feature index {index_s:?}"),
                )
            })?;
            if index == 0 {
                return Err(parse_err(origin, line_no, "feature indices are 1-based"));
            }
            if index <= prev_index {
                return Err(parse_err(
                    origin,
                    line_no,
                    format!(
                        "feature indices must be strictly ascending ({prev_index} then {index})"
                    ),
                ));
            }
            let value: f64 = value_s.parse().map_err(|_| {
                parse_err(
                    origin,
                    line_no,
                    format!("invalid feature value {value_s:?}"),
                )
            })?;
            prev_index = index;
            cols = cols.max(index);
            row.push((index - 1, value));
        }
        rows.push(row);
        raw_labels.push(label);
    }

    let labels = map_labels(raw_labels)?;
    Ok(LogisticProblem::new(
        Features::Sparse { rows, cols },
        labels,
        0.0,
    )?)
}

fn map_labels(raw: Vec<f64>) -> Result<DVector<f64>, DataError> {
    let mut distinct: Vec<f64> = Vec::new();
    for &v in &raw {
        if !distinct.contains(&v) {
            distinct.push(v);
            if distinct.len() > 2 {
                break;
            }
        }
    }
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));

    let in_set =
        |allowed: &[f64]| distinct.iter().all(|v| allowed.contains(v)) && !distinct.is_empty();
    let mapped: Vec<f64> = if in_set(&[-1.0, 1.0]) {
        raw
    } else if in_set(&[0.0, 1.0]) {
        raw.into_iter()
            .map(|v| if v == 0.0 { -1.0 } else { 1.0 })
            .collect()
    } else if in_set(&[1.0, 2.0]) {
        raw.into_iter()
            .map(|v| if v == 1.0 { -1.0 } else { 1.0 })
            .collect()
    } else {
        return Err(DataError::UnsupportedLabels { found: distinct });
    };
    Ok(DVector::from_vec(mapped))
}

pub fn load_libsvm(path: &Path) -> Result<LogisticProblem, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_libsvm(&text, &path.display().to_string())
}

/// Serializes in LIBSVM text form, writing only nonzero entries with
/// 17 significant digits so values round-trip exactly. A trailing
/// all-zero column is not representable in the format and would come back
/// narrower.
pub fn format_libsvm(p: &LogisticProblem) -> String {
    let mut out = String::new();
    let dense;
    let rows: Vec<Vec<(usize, f64)>> = match p.features() {
        Features::Sparse { rows, .. } => rows.clone(),
        Features::Dense(a) => {
            dense = a;
            (0..dense.nrows())
                .map(|i| {
                    (0..dense.ncols())
                        .filter_map(|j| {
                            let v = dense[(i, j)];
                            (v != 0.0).then_some((j, v))
                        })
                        .collect()
                })
                .collect()
        }
    };
    for (row, &label) in rows.iter().zip(p.labels().iter()) {
        out.push_str(if label > 0.0 { "+1" } else { "-1" });
        for &(j, v) in row {
            out.push_str(&format!(" {}:{:.16e}", j + 1, v));
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(path: &Path, p: &LogisticProblem) -> Result<(), DataError> {
    fs::write(path, format_libsvm(p)).map_err(|e| io_err(path, e))
}

const TRACE_VERSION: &str = "gn-trace v1";
const OPTIMUM_VERSION: &str = "gn-optimum v1";

/// Provenance metadata stored alongside a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub dataset: String,
    pub lambda: f64,
    pub seed: Option<u64>,
    /// Free-form echo of the solver configuration.
    pub config: String,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a trace as a `#`-prefixed header block followed by
/// tab-delimited rows. Floats carry 17 significant digits and round-trip
/// exactly; iterate coordinates are appended per row when the trace
/// recorded them.
pub fn write_trace(
    path: &Path,
    header: &TraceHeader,
    trace: &IterateTrace,
) -> Result<(), DataError> {
    let mut out = String::new();
    out.push_str(&format!("# {TRACE_VERSION}\n"));
    out.push_str(&format!("# method {}\n", trace.method));
    out.push_str(&format!("# dataset {}\n", single_line(&header.dataset)));
    out.push_str(&format!("# lambda {}\n", fmt_f64(header.lambda)));
    if let Some(seed) = header.seed {
        out.push_str(&format!("# seed {seed}\n"));
    }
    out.push_str(&format!("# config {}\n", single_line(&header.config)));
    out.push_str(&format!("# stop {}\n", trace.stop));
    let dim = trace
        .iterates
        .as_ref()
        .map(|it| it.first().map_or(0, |x| x.len()));
    if let Some(d) = dim {
        out.push_str(&format!("# dim {d}\n"));
    }
    out.push_str(&format!("# rows {}\n", trace.records.len()));
    out.push_str("# columns k f grad_norm step_size probes jitter branch cum_time_s");
    if dim.is_some() {
        out.push_str(" x...");
    }
    out.push('\n');

    for (i, r) in trace.records.iter().enumerate() {
        let branch = match r.branch {
            None => "-",
            Some(Branch::Gradient) => "gradient",
            Some(Branch::Newton) => "newton",
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.k,
            fmt_f64(r.f),
            fmt_f64(r.grad_norm),
            fmt_f64(r.step_size),
            r.probes,
            fmt_f64(r.jitter),
            branch,
            fmt_f64(r.cum_time_s),
        ));
        if let Some(iterates) = &trace.iterates {
            for v in iterates[i].iter() {
                out.push('\t');
                out.push_str(&fmt_f64(*v));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

fn single_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

/// Reads a trace written by [`write_trace`]. Truncated files, malformed
/// rows, and version mismatches are hard errors; there is no partial
/// success.
pub fn read_trace(path: &Path) -> Result<(TraceHeader, IterateTrace), DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let origin = path.display().to_string();
    let mut lines = text.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(&origin, 1, "empty file"))?;
    let version = first.strip_prefix("# ").unwrap_or(first);
    if version != TRACE_VERSION {
        return Err(DataError::VersionMismatch {
            found: version.to_string(),
            expected: TRACE_VERSION,
        });
    }

    let mut method: Option<Method> = None;
    let mut dataset = String::new();
    let mut lambda = 0.0f64;
    let mut seed: Option<u64> = None;
    let mut config = String::new();
    let mut stop: Option<StopReason> = None;
    let mut dim: Option<usize> = None;
    let mut declared_rows: Option<usize> = None;

    let mut records: Vec<IterateRecord> = Vec::new();
    let mut iterates: Vec<DVector<f64>> = Vec::new();

    for (idx, line) in lines {
        let line_no = idx + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            if let Some((key, value)) = rest.split_once(' ') {
                match key {
                    "method" => {
                        method = Some(
                            value
                                .trim()
                                .parse()
                                .map_err(|e| parse_err(&origin, line_no, format!("{e}")))?,
                        )
                    }
                    "dataset" => dataset = value.trim().to_string(),
                    "lambda" => {
                        lambda = value
                            .trim()
                            .parse()
                            .map_err(|_| parse_err(&origin, line_no, "invalid lambda"))?
                    }
                    "seed" => {
                        seed = Some(
                            value
                                .trim()
                                .parse()
                                .map_err(|_| parse_err(&origin, line_no, "invalid seed"))?,
                        )
                    }
                    "config" => config = value.trim().to_string(),
                    "stop" => {
                        stop = Some(
                            value
                                .trim()
                                .parse()
                                .map_err(|e| parse_err(&origin, line_no, format!("{e}")))?,
                        )
                    }
                    "dim" => {
                        dim = Some(
                            value
                                .trim()
                                .parse()
                                .map_err(|_| parse_err(&origin, line_no, "invalid dim"))?,
                        )
                    }
                    "rows" => {
                        declared_rows = Some(
                            value
                                .trim()
                                .parse()
                                .map_err(|_| parse_err(&origin, line_no, "invalid row count"))?,
                        )
                    }
                    "columns" => {}
                    other => {
                        return Err(parse_err(
                            &origin,
                            line_no,
                            format!("unknown header key {other:?}"),
                        ))
                    }
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }

        let fields: Vec<&str> = line.split('\t').collect();
        let base = 8usize;
        let expected = base + dim.unwrap_or(0);
        if fields.len() != expected {
            return Err(parse_err(
                &origin,
                line_no,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        let fnum = |i: usize, what: &str| -> Result<f64, DataError> {
            fields[i]
                .parse()
                .map_err(|_| parse_err(&origin, line_no, format!("invalid {what} {:?}", fields[i])))
        };
        let k: u32 = fields[0]
            .parse()
            .map_err(|_| parse_err(&origin, line_no, format!("invalid k {:?}", fields[0])))?;
        if k as usize != records.len() {
            return Err(parse_err(
                &origin,
                line_no,
                format!(
                    "rows must be contiguous from 0; expected k={}, found {k}",
                    records.len()
                ),
            ));
        }
        let probes: u32 = fields[4]
            .parse()
            .map_err(|_| parse_err(&origin, line_no, format!("invalid probes {:?}", fields[4])))?;
        let branch = match fields[6] {
            "-" => None,
            "gradient" => Some(Branch::Gradient),
            "newton" => Some(Branch::Newton),
            other => {
                return Err(parse_err(
                    &origin,
                    line_no,
                    format!("invalid branch {other:?}"),
                ))
            }
        };
        records.push(IterateRecord {
            k,
            f: fnum(1, "f")?,
            grad_norm: fnum(2, "grad_norm")?,
            step_size: fnum(3, "step_size")?,
            probes,
            jitter: fnum(5, "jitter")?,
            branch,
            cum_time_s: fnum(7, "cum_time_s")?,
        });
        if let Some(d) = dim {
            let mut x = DVector::zeros(d);
            for j in 0..d {
                x[j] = fnum(base + j, "iterate coordinate")?;
            }
            iterates.push(x);
        }
    }

    let declared = declared_rows.ok_or_else(|| parse_err(&origin, 1, "missing rows header"))?;
    if records.len() != declared {
        return Err(parse_err(
            &origin,
            1,
            format!(
                "declared {declared} rows but found {} (truncated file?)",
                records.len()
            ),
        ));
    }
    if records.is_empty() {
        return Err(parse_err(&origin, 1, "trace has no rows"));
    }
    let method = method.ok_or_else(|| parse_err(&origin, 1, "missing method header"))?;
    let stop = stop.ok_or_else(|| parse_err(&origin, 1, "missing stop header"))?;

    Ok((
        TraceHeader {
            dataset,
            lambda,
            seed,
            config,
        },
        IterateTrace {
            method,
            records,
            iterates: dim.map(|_| iterates),
            stop,
        },
    ))
}

/// Writes a certified optimum: value, gradient norm, and the point.
pub fn write_optimum(
    path: &Path,
    x: &DVector<f64>,
    f: f64,
    grad_norm: f64,
) -> Result<(), DataError> {
    let mut out = String::new();
    out.push_str(&format!("# {OPTIMUM_VERSION}\n"));
    out.push_str(&format!("# f {}\n", fmt_f64(f)));
    out.push_str(&format!("# grad_norm {}\n", fmt_f64(grad_norm)));
    out.push_str(&format!("# dim {}\n", x.len()));
    for v in x.iter() {
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_optimum(path: &Path) -> Result<(DVector<f64>, f64, f64), DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let origin = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(&origin, 1, "empty file"))?;
    let version = first.strip_prefix("# ").unwrap_or(first);
    if version != OPTIMUM_VERSION {
        return Err(DataError::VersionMismatch {
            found: version.to_string(),
            expected: OPTIMUM_VERSION,
        });
    }

    let mut f: Option<f64> = None;
    let mut grad_norm: Option<f64> = None;
    let mut dim: Option<usize> = None;
    let mut coords: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            if let Some((key, value)) = rest.split_once(' ') {
                match key {
                    "f" => f = value.trim().parse().ok(),
                    "grad_norm" => grad_norm = value.trim().parse().ok(),
                    "dim" => dim = value.trim().parse().ok(),
                    other => {
                        return Err(parse_err(
                            &origin,
                            line_no,
                            format!("unknown header key {other:?}"),
                        ))
                    }
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        coords.push(
            line.trim()
                .parse()
                .map_err(|_| parse_err(&origin, line_no, format!("invalid coordinate {line:?}")))?,
        );
    }
    let f = f.ok_or_else(|| parse_err(&origin, 1, "missing f header"))?;
    let grad_norm = grad_norm.ok_or_else(|| parse_err(&origin, 1, "missing grad_norm header"))?;
    let dim = dim.ok_or_else(|| parse_err(&origin, 1, "missing dim header"))?;
    if coords.len() != dim {
        return Err(parse_err(
            &origin,
            1,
            format!("declared dim {dim} but found {} coordinates", coords.len()),
        ));
    }
    Ok((DVector::from_vec(coords), f, grad_norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::Objective;

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec::new(Regime::StronglyConvex, 7);
        let p1 = generate(&spec);
        let p2 = generate(&spec);
        let (a1, a2) = (p1.features().to_dense(), p2.features().to_dense());
        assert_eq!(
            a1.as_slice(),
            a2.as_slice(),
            "matrices must be bit-identical"
        );
        assert_eq!(p1.labels().as_slice(), p2.labels().as_slice());
        let p3 = generate(&SyntheticSpec::new(Regime::StronglyConvex, 8));
        assert_ne!(
            p1.features().to_dense().as_slice(),
            p3.features().to_dense().as_slice()
        );
    }

    #[test]
    fn generation_shapes_and_label_domain() {
        for regime in Regime::ALL {
            let mut spec = SyntheticSpec::new(regime, 3);
            spec.num_examples = 40;
            let p = generate(&spec);
            assert_eq!(p.num_examples(), 40);
            assert_eq!(p.dim(), regime.dimension());
            assert!(p.labels().iter().all(|&b| b == 1.0 || b == -1.0));
            assert!(p.labels().iter().any(|&b| b == 1.0));
            assert!(p.labels().iter().any(|&b| b == -1.0));
        }
    }

    #[test]
    fn repeated_features_duplicates_first_ten_columns() {
        let mut spec = SyntheticSpec::new(Regime::RepeatedFeatures, 11);
        spec.num_examples = 25;
        let p = generate(&spec);
        let a = p.features().to_dense();
        for i in 0..25 {
            for j in 0..10 {
                assert_eq!(a[(i, j)].to_bits(), a[(i, j + 10)].to_bits());
            }
        }
    }

    #[test]
    fn normal_source_has_plausible_moments() {
        let mut src = NormalSource::new(123);
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| src.sample()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "sample mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "sample variance {var}");
        assert!(draws.iter().all(|d| d.is_finite()));
    }

    #[test]
    fn certify_separable_accepts_and_rejects() {
        // Comfortably separated points on a line.
        let a = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, -1.0, -3.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, -1.0, -1.0]);
        let p = LogisticProblem::dense(a, b, 0.0).unwrap();
        let w = certify_separable(&p, 50).expect("clearly separable");
        for (i, &label) in p.labels().iter().enumerate() {
            let margin: f64 = p.features().to_dense().row(i).transpose().dot(&w);
            assert!(label * margin > 0.0);
        }

        // Conflicting labels at mirrored points cannot be separated.
        let a = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, -1.0, -1.0]);
        let p = LogisticProblem::dense(a, b, 0.0).unwrap();
        assert!(certify_separable(&p, 50).is_none());

        // Regularized problems are out of scope for the certificate.
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let p = LogisticProblem::dense(a, b, 0.5).unwrap();
        assert!(certify_separable(&p, 50).is_none());
    }

    #[test]
    fn libsvm_parses_reference_example() {
        let p = parse_libsvm("+1 1:0.5 3:-2\n-1 2:1\n", "test").unwrap();
        let a = p.features().to_dense();
        assert_eq!(a.nrows(), 2);
        assert_eq!(a.ncols(), 3);
        assert_eq!(a[(0, 0)], 0.5);
        assert_eq!(a[(0, 1)], 0.0);
        assert_eq!(a[(0, 2)], -2.0);
        assert_eq!(a[(1, 0)], 0.0);
        assert_eq!(a[(1, 1)], 1.0);
        assert_eq!(a[(1, 2)], 0.0);
        assert_eq!(p.labels().as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn libsvm_accepts_empty_feature_lists() {
        let p = parse_libsvm("+1\n-1 1:2.5\n", "test").unwrap();
        let a = p.features().to_dense();
        assert_eq!(a.nrows(), 2);
        assert_eq!(a.ncols(), 1);
        assert_eq!(a[(0, 0)], 0.0);
        assert_eq!(a[(1, 0)], 2.5);
    }

    #[test]
    fn libsvm_maps_label_conventions() {
        let p = parse_libsvm("0 1:1\n1 1:2\n", "test").unwrap();
        assert_eq!(p.labels().as_slice(), &[-1.0, 1.0]);
        let p = parse_libsvm("1 1:1\n2 1:2\n", "test").unwrap();
        assert_eq!(p.labels().as_slice(), &[-1.0, 1.0]);
        let p = parse_libsvm("-1 1:1\n+1 1:2\n", "test").unwrap();
        assert_eq!(p.labels().as_slice(), &[-1.0, 1.0]);
        match parse_libsvm("3 1:1\n7 1:2\n", "test") {
            Err(DataError::UnsupportedLabels { found }) => {
                assert_eq!(found, vec![3.0, 7.0]);
            }
            other => panic!("expected UnsupportedLabels, got {other:?}"),
        }
    }

    #[test]
    fn libsvm_rejects_malformed_lines_with_location() {
        let cases = [
            ("+1 1:0.5\nbogus 1:1\n", 2, "invalid label"),
            ("+1 1:x\n", 1, "invalid feature value"),
            ("+1 0:1\n", 1, "1-based"),
            ("+1 2:1 1:1\n", 1, "ascending"),
            ("+1 5\n", 1, "index:value"),
        ];
        for (text, line, needle) in cases {
            match parse_libsvm(text, "test") {
                Err(DataError::Parse {
                    line: l, message, ..
                }) => {
                    assert_eq!(l, line, "wrong line for {text:?}");
                    assert!(
                        message.contains(needle),
                        "message {message:?} lacks {needle:?}"
                    );
                }
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn libsvm_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.libsvm");
        let mut spec = SyntheticSpec::new(Regime::StronglyConvex, 5);
        spec.num_examples = 30;
        let p = generate(&spec);
        write_libsvm(&path, &p).unwrap();
        let q = load_libsvm(&path).unwrap();
        let (a, b) = (p.features().to_dense(), q.features().to_dense());
        assert_eq!(a.nrows(), b.nrows());
        assert_eq!(a.ncols(), b.ncols());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(
                x.to_bits(),
                y.to_bits(),
                "coordinates must round-trip bit-exactly"
            );
        }
        assert_eq!(p.labels().as_slice(), q.labels().as_slice());
    }

    fn sample_trace(with_iterates: bool) -> IterateTrace {
        let records = vec![
            IterateRecord {
                k: 0,
                f: 346.573,
                grad_norm: 12.5,
                step_size: 0.0,
                probes: 0,
                jitter: 0.0,
                branch: None,
                cum_time_s: 0.0,
            },
            IterateRecord {
                k: 1,
                f: 12.25,
                grad_norm: 1.0 / 3.0,
                step_size: 2.375,
                probes: 40,
                jitter: 1e-12,
                branch: Some(Branch::Gradient),
                cum_time_s: 0.001953125,
            },
            IterateRecord {
                k: 2,
                f: 0.5,
                grad_norm: 1e-9,
                step_size: 1.0,
                probes: 33,
                jitter: 0.0,
                branch: Some(Branch::Newton),
                cum_time_s: 0.0040283203125,
            },
        ];
        let iterates = with_iterates.then(|| {
            vec![
                DVector::from_vec(vec![0.0, 0.0]),
                DVector::from_vec(vec![0.1, -2.0 / 3.0]),
                DVector::from_vec(vec![0.125, -0.6875]),
            ]
        });
        IterateTrace {
            method: Method::Hybrid,
            records,
            iterates,
            stop: StopReason::GradientNorm,
        }
    }

    fn assert_traces_equal(a: &IterateTrace, b: &IterateTrace) {
        assert_eq!(a.method, b.method);
        assert_eq!(a.stop, b.stop);
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.k, y.k);
            assert_eq!(x.f.to_bits(), y.f.to_bits());
            assert_eq!(x.grad_norm.to_bits(), y.grad_norm.to_bits());
            assert_eq!(x.step_size.to_bits(), y.step_size.to_bits());
            assert_eq!(x.probes, y.probes);
            assert_eq!(x.jitter.to_bits(), y.jitter.to_bits());
            assert_eq!(x.branch, y.branch);
            assert_eq!(x.cum_time_s.to_bits(), y.cum_time_s.to_bits());
        }
        match (&a.iterates, &b.iterates) {
            (None, None) => {}
            (Some(xs), Some(ys)) => {
                assert_eq!(xs.len(), ys.len());
                for (x, y) in xs.iter().zip(ys) {
                    for (u, v) in x.iter().zip(y.iter()) {
                        assert_eq!(u.to_bits(), v.to_bits());
                    }
                }
            }
            _ => panic!("iterate presence mismatch"),
        }
    }

    #[test]
    fn trace_round_trips_losslessly() {
        let dir = tempfile::tempdir().unwrap();
        for with_iterates in [false, true] {
            let path = dir.path().join(format!("t{with_iterates}.trace"));
            let header = TraceHeader {
                dataset: "synthetic:strongly-convex:m=500:seed=42".into(),
                lambda: 1.0,
                seed: Some(42),
                config: "max_iter=25 grad_stop=1e-10".into(),
            };
            let trace = sample_trace(with_iterates);
            write_trace(&path, &header, &trace).unwrap();
            let (h2, t2) = read_trace(&path).unwrap();
            assert_eq!(h2.dataset, header.dataset);
            assert_eq!(h2.lambda.to_bits(), header.lambda.to_bits());
            assert_eq!(h2.seed, header.seed);
            assert_eq!(h2.config, header.config);
            assert_traces_equal(&trace, &t2);
        }
    }

    #[test]
    fn truncated_trace_is_a_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("full.trace");
        let header = TraceHeader {
            dataset: "d".into(),
            lambda: 0.0,
            seed: None,
            config: String::new(),
        };
        write_trace(&path, &header, &sample_trace(false)).unwrap();
        let text = fs::read_to_string(&path).unwrap();

        // Drop the last row: row count no longer matches the header.
        let cut = text.trim_end().rsplit_once('\n').unwrap().0;
        let short_path = dir.path().join("short.trace");
        fs::write(&short_path, cut).unwrap();
        match read_trace(&short_path) {
            Err(DataError::Parse { message, .. }) => assert!(message.contains("truncated")),
            other => panic!("expected truncation error, got {other:?}"),
        }

        // Cut mid-row at the last field separator: field count mismatch.
        let mid = text.trim_end().rsplit_once('\t').unwrap().0;
        let mid_path = dir.path().join("mid.trace");
        fs::write(&mid_path, mid).unwrap();
        match read_trace(&mid_path) {
            Err(DataError::Parse { message, .. }) => assert!(message.contains("fields")),
            other => panic!("expected field-count error, got {other:?}"),
        }
    }

    #[test]
    fn trace_version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v2.trace");
        fs::write(&path, "# gn-trace v2\n# rows 0\n").unwrap();
        assert!(matches!(
            read_trace(&path),
            Err(DataError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn optimum_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("opt.txt");
        let x = DVector::from_vec(vec![1.0 / 3.0, -2.0, 5e-13]);
        write_optimum(&path, &x, 165.4327890123, 3.2e-14).unwrap();
        let (x2, f, g) = read_optimum(&path).unwrap();
        assert_eq!(f.to_bits(), 165.4327890123f64.to_bits());
        assert_eq!(g.to_bits(), 3.2e-14f64.to_bits());
        for (a, b) in x.iter().zip(x2.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn regime_names_round_trip() {
        for r in Regime::ALL {
            assert_eq!(r.name().parse::<Regime>().unwrap(), r);
        }
        assert!("mystery".parse::<Regime>().is_err());
    }
}
