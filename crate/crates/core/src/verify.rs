//! Runtime verification of the solver's convergence guarantees.
//!
//! The checkers take a recorded trace, curvature bounds for the problem,
//! and a certified reference optimum, and test the per-iteration
//! inequalities the methods are supposed to satisfy: a global linear rate
//! on the objective gap for exact line search, a quadratic
//! distance-contraction bound matching an undamped Newton step, and a
//! step-size-aware local bound for arbitrary damping. Bounds can be
//! supplied analytically or estimated from samples; reports carry the
//! provenance and word their verdicts accordingly ("proven" only under
//! analytic bounds, "consistent" under estimated ones).

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::data::{self, DataError, NormalSource};
use crate::oracles::{LogisticProblem, Objective};
use crate::solvers::{newton_direction, solve, IterateTrace, Method, SolverConfig, SolverError};

/// Relative tolerance for the global linear-rate check.
pub const RATE_SLACK: f64 = 1e-8;
/// Relative tolerance for the distance-contraction checks.
pub const DISTANCE_SLACK: f64 = 1e-6;
/// Objective gaps at or below this are considered converged and skipped.
pub const DEFAULT_GAP_FLOOR: f64 = 1e-12;
/// Distances at or below this are indistinguishable from the optimum's
/// own resolution and are skipped.
pub const DEFAULT_DIST_FLOOR: f64 = 1e-12;

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITERATIONS: u32 = 100_000;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("trace does not carry iterates; re-run with iterate recording enabled")]
    MissingIterates,
    #[error("trace has fewer than two rows; nothing to check")]
    TraceTooShort,
    #[error("optimum not certified: gradient norm {achieved:e} exceeds {required:e}")]
    NotCertified { achieved: f64, required: f64 },
    #[error("trace value at k={k} lies {below:e} below the reference optimum; the optimum is not trustworthy")]
    OptimumAboveTrace { k: u32, below: f64 },
    #[error("invalid bounds: {0}")]
    InvalidBounds(&'static str),
    #[error("power iteration did not settle within {0} iterations")]
    PowerIterationStalled(u32),
    #[error("bound estimation needs at least {needed} sample points, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Where curvature bounds came from. Estimated bounds are one-sided
/// (sampled extrema), so checks against them are evidence, not proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Estimated,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Analytic => "analytic",
            Provenance::Estimated => "estimated",
        })
    }
}

impl Provenance {
    fn verdict_word(self) -> &'static str {
        match self {
            Provenance::Analytic => "proven",
            Provenance::Estimated => "consistent",
        }
    }
}

/// Curvature constants: `mu` a strong-convexity lower bound, `l` a
/// smoothness upper bound, `m` a Lipschitz constant of the Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceBounds {
    pub mu: f64,
    pub l: f64,
    pub m: f64,
    pub provenance: Provenance,
}

impl ConvergenceBounds {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(VerifyError::InvalidBounds("mu must be positive and finite"));
        }
        if !(self.l >= self.mu && self.l.is_finite()) {
            return Err(VerifyError::InvalidBounds(
                "l must satisfy mu <= l and be finite",
            ));
        }
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(VerifyError::InvalidBounds(
                "m must be nonnegative and finite",
            ));
        }
        Ok(())
    }

    pub fn condition_number(&self) -> f64 {
        self.l / self.mu
    }
}

fn power_iteration(
    op: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    dim: usize,
) -> Result<f64, VerifyError> {
    assert!(dim > 0, "power iteration needs a nonempty space");
    // Fixed seed keeps estimates reproducible run to run.
    let mut src = NormalSource::new(0x517cc1b727220a95);
    let mut v = DVector::from_fn(dim, |_, _| src.sample());
    v /= v.norm();
    let mut prev = f64::INFINITY;
    let mut hits = 0u32;
    for _ in 0..POWER_MAX_ITERATIONS {
        let w = op(&v);
        let lam = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            // The operator annihilates the iterate: for the PSD operators
            // used here that means the dominant eigenvalue is zero.
            return Ok(0.0);
        }
        v = w / wn;
        if (lam - prev).abs() <= POWER_TOL * lam.abs().max(f64::MIN_POSITIVE) {
            // Two consecutive settled estimates guard against a slow
            // plateau masquerading as convergence.
            hits += 1;
            if hits >= 2 {
                return Ok(lam);
            }
        } else {
            hits = 0;
        }
        prev = lam;
    }
    Err(VerifyError::PowerIterationStalled(POWER_MAX_ITERATIONS))
}

/// Largest eigenvalue of a symmetric positive-semidefinite matrix, to a
/// relative tolerance of 1e-8.
pub fn matrix_largest_eigenvalue(h: &DMatrix<f64>) -> Result<f64, VerifyError> {
    power_iteration(&|v| h * v, h.nrows())
}

/// Smallest eigenvalue of a symmetric positive-semidefinite matrix via a
/// spectral shift: the dominant eigenvalue of `top*I - H` is
/// `top - lambda_min`.
pub fn matrix_smallest_eigenvalue(h: &DMatrix<f64>) -> Result<f64, VerifyError> {
    let top = matrix_largest_eigenvalue(h)?;
    // Slight inflation keeps the shifted operator PSD despite the
    // estimate's own tolerance.
    let shift = top * (1.0 + 1e-6) + f64::MIN_POSITIVE;
    let gap = power_iteration(&|v| v * shift - h * v, h.nrows())?;
    Ok((shift - gap).max(0.0))
}

/// Spectral norm of a symmetric matrix: the square root of the dominant
/// eigenvalue of `D^2`.
pub fn symmetric_spectral_norm(d: &DMatrix<f64>) -> Result<f64, VerifyError> {
    let lam = power_iteration(&|v| d * (d * v), d.nrows())?;
    Ok(lam.max(0.0).sqrt())
}

/// Analytic smoothness constant for the regularized logistic objective:
/// `lambda_max(A^T A) / 4 + lambda`, using matrix-vector products only.
pub fn logistic_smoothness(p: &LogisticProblem) -> Result<f64, VerifyError> {
    let features = p.features();
    let lam = power_iteration(&|v| features.weighted_sum(&features.margins(v)), p.dim())?;
    Ok(lam.max(0.0) / 4.0 + p.lambda())
}

/// Largest ratio of Hessian spectral-norm change to point distance over
/// consecutive sample pairs plus the endpoints pair. A sampled lower
/// bound on the true Hessian Lipschitz constant.
pub fn hessian_variation(p: &dyn Objective, samples: &[DVector<f64>]) -> Result<f64, VerifyError> {
    if samples.len() < 2 {
        return Ok(0.0);
    }
    let hessians: Vec<DMatrix<f64>> = samples.iter().map(|x| p.hessian(x)).collect();
    let mut m: f64 = 0.0;
    let consider = |i: usize, j: usize, m: &mut f64| -> Result<(), VerifyError> {
        let dx = (&samples[i] - &samples[j]).norm();
        if dx <= 1e-12 {
            return Ok(());
        }
        let diff = &hessians[i] - &hessians[j];
        *m = m.max(symmetric_spectral_norm(&diff)? / dx);
        Ok(())
    };
    for i in 0..samples.len() - 1 {
        consider(i, i + 1, &mut m)?;
    }
    consider(0, samples.len() - 1, &mut m)?;
    Ok(m)
}

/// Estimates all three constants from Hessians at the sample points:
/// `l` as the largest sampled eigenvalue, `mu` as the smallest (replaced
/// by the analytic convexity lower bound when the objective carries one),
/// and `m` from sampled Hessian variation. All three are one-sided, so
/// the result is marked estimated.
pub fn estimate_bounds(
    p: &dyn Objective,
    samples: &[DVector<f64>],
) -> Result<ConvergenceBounds, VerifyError> {
    if samples.is_empty() {
        return Err(VerifyError::NotEnoughSamples { needed: 1, got: 0 });
    }
    let analytic_mu = p.convexity_lower_bound();
    let mut l: f64 = 0.0;
    let mut sampled_mu = f64::INFINITY;
    for x in samples {
        let h = p.hessian(x);
        l = l.max(matrix_largest_eigenvalue(&h)?);
        if analytic_mu.is_none() {
            sampled_mu = sampled_mu.min(matrix_smallest_eigenvalue(&h)?);
        }
    }
    let mu = analytic_mu.unwrap_or(sampled_mu);
    let bounds = ConvergenceBounds {
        mu,
        l: l.max(mu),
        m: hessian_variation(p, samples)?,
        provenance: Provenance::Estimated,
    };
    bounds.validate()?;
    Ok(bounds)
}

/// Bounds for the regularized logistic objective with analytic `mu` and
/// `l`. The Hessian variation constant still comes from samples (a lower
/// bound), which is conservative in the direction the distance checkers
/// need only when it overestimates; treat distance verdicts under these
/// bounds with the same care as estimated ones.
pub fn logistic_analytic_bounds(
    p: &LogisticProblem,
    samples: &[DVector<f64>],
) -> Result<ConvergenceBounds, VerifyError> {
    let mu = p.convexity_lower_bound().ok_or(VerifyError::InvalidBounds(
        "analytic bounds require a positive regularization strength",
    ))?;
    let l = logistic_smoothness(p)?;
    let bounds = ConvergenceBounds {
        mu,
        l: l.max(mu),
        m: hessian_variation(p, samples)?,
        provenance: Provenance::Analytic,
    };
    bounds.validate()?;
    Ok(bounds)
}

/// A minimizer certified by its gradient norm. The stored gradient norm
/// is re-checked against a fresh oracle call whenever the optimum is
/// loaded from disk, so a stale or mismatched file cannot silently
/// anchor a verification run.
#[derive(Debug, Clone)]
pub struct ReferenceOptimum {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad_norm: f64,
}

impl ReferenceOptimum {
    /// Certification threshold scaled to the value, near the resolution
    /// double precision can support for the objective itself.
    pub fn certification_threshold(&self) -> f64 {
        1e-12 * (1.0 + self.f.abs())
    }

    /// Computes a certified optimum with the default threshold
    /// `1e-12 * (1 + |f*|)`.
    pub fn compute(p: &dyn Objective) -> Result<Self, VerifyError> {
        Self::compute_with_tolerance(p, None)
    }

    /// Computes a certified optimum, polishing until the gradient norm
    /// reaches `grad_tol` (or the default threshold when `None`).
    ///
    /// Two phases: a line-search Newton solve takes the objective to its
    /// floor, where value comparisons lose meaning because nearby points
    /// differ by less than one ulp of `f`. A pure Newton polish then
    /// descends on the gradient norm, which keeps full relative
    /// resolution all the way down.
    pub fn compute_with_tolerance(
        p: &dyn Objective,
        grad_tol: Option<f64>,
    ) -> Result<Self, VerifyError> {
        let mut cfg = SolverConfig::new(Method::GreedyNewton);
        cfg.max_iterations = 200;
        cfg.gradient_norm_stop = 1e-13;
        cfg.record_iterates = true;
        let trace = solve(p, &cfg)?;
        let mut x = trace
            .iterates
            .as_ref()
            .and_then(|it| it.last())
            .expect("driver records at least row 0")
            .clone();

        let f_floor = p.value(&x);
        let target = grad_tol.unwrap_or(1e-12 * (1.0 + f_floor.abs()));

        let mut grad_norm = p.gradient(&x).norm();
        for _ in 0..64 {
            if grad_norm <= target {
                break;
            }
            let (d, _) = newton_direction(p, &x, 1e-12)?;
            let x_next = &x + &d;
            let next_norm = p.gradient(&x_next).norm();
            if !next_norm.is_finite() || next_norm >= grad_norm {
                break;
            }
            x = x_next;
            grad_norm = next_norm;
        }
        if grad_norm > target {
            return Err(VerifyError::NotCertified {
                achieved: grad_norm,
                required: target,
            });
        }
        Ok(ReferenceOptimum {
            f: p.value(&x),
            grad_norm,
            x,
        })
    }

    /// Re-checks the certificate against fresh oracle calls.
    pub fn certify(&self, p: &dyn Objective) -> Result<(), VerifyError> {
        let achieved = p.gradient(&self.x).norm();
        let required = self.certification_threshold();
        if achieved <= required {
            Ok(())
        } else {
            Err(VerifyError::NotCertified { achieved, required })
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), VerifyError> {
        data::write_optimum(path, &self.x, self.f, self.grad_norm)?;
        Ok(())
    }

    /// Loads and re-certifies against the given objective.
    pub fn load(path: &std::path::Path, p: &dyn Objective) -> Result<Self, VerifyError> {
        let (x, f, grad_norm) = data::read_optimum(path)?;
        let opt = ReferenceOptimum { x, f, grad_norm };
        opt.certify(p)?;
        Ok(opt)
    }
}

/// Which sufficient-decrease regime the linear-rate bound describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateVariant {
    /// Exact line search: gap contracts by at least `1 - (mu/l)^2`.
    ExactLineSearch,
    /// Armijo backtracking with sufficient-decrease 1/2 and halving:
    /// gap contracts by at least `1 - mu^2 / (2 l^2)`.
    Backtracking,
}

impl RateVariant {
    pub fn name(self) -> &'static str {
        match self {
            RateVariant::ExactLineSearch => "exact-line-search",
            RateVariant::Backtracking => "backtracking",
        }
    }

    pub fn bound(self, bounds: &ConvergenceBounds) -> f64 {
        let q = (bounds.mu / bounds.l) * (bounds.mu / bounds.l);
        match self {
            RateVariant::ExactLineSearch => 1.0 - q,
            RateVariant::Backtracking => 1.0 - q / 2.0,
        }
    }
}

impl fmt::Display for RateVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RateRow {
    pub k: u32,
    pub gap: f64,
    pub next_gap: f64,
    pub ratio: f64,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct RateReport {
    pub variant: RateVariant,
    pub bound: f64,
    pub slack: f64,
    pub gap_floor: f64,
    pub rows: Vec<RateRow>,
    /// Transitions skipped because the gap had already hit the floor.
    pub skipped: usize,
    pub provenance: Provenance,
}

impl RateReport {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }

    pub fn worst_ratio(&self) -> Option<f64> {
        self.rows
            .iter()
            .map(|r| r.ratio)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    pub fn first_violation(&self) -> Option<&RateRow> {
        self.rows.iter().find(|r| !r.holds)
    }
}

impl fmt::Display for RateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "global-rate[{}]: {} transitions checked, {} at floor, bound {:.6}",
            self.variant,
            self.rows.len(),
            self.skipped,
            self.bound,
        )?;
        if let Some(worst) = self.worst_ratio() {
            write!(f, ", worst ratio {worst:.6}")?;
        }
        match self.first_violation() {
            None => write!(
                f,
                "; holds ({}, {})",
                self.provenance,
                self.provenance.verdict_word()
            ),
            Some(v) => write!(
                f,
                "; VIOLATED at k={} (ratio {:.6e} > bound {:.6e}) under {} bounds",
                v.k, v.ratio, self.bound, self.provenance
            ),
        }
    }
}

/// Checks the per-iteration linear rate on objective gaps:
/// `f_{k+1} - f* <= rho (f_k - f*)` with `rho` from the variant, up to a
/// relative slack of 1e-8. Transitions whose starting gap is at or below
/// `gap_floor` are skipped as converged. A trace value materially below
/// the reference optimum invalidates the optimum and is a hard error.
pub fn check_global_rate(
    trace: &IterateTrace,
    bounds: &ConvergenceBounds,
    optimum: &ReferenceOptimum,
    variant: RateVariant,
    gap_floor: f64,
) -> Result<RateReport, VerifyError> {
    bounds.validate()?;
    if trace.records.len() < 2 {
        return Err(VerifyError::TraceTooShort);
    }
    let bound = variant.bound(bounds);
    let tolerance_below = 1e-9 * (1.0 + optimum.f.abs());
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for w in trace.records.windows(2) {
        let gap = w[0].f - optimum.f;
        let next_gap = w[1].f - optimum.f;
        if next_gap < -tolerance_below {
            return Err(VerifyError::OptimumAboveTrace {
                k: w[1].k,
                below: -next_gap,
            });
        }
        if gap <= gap_floor {
            skipped += 1;
            continue;
        }
        let ratio = next_gap / gap;
        let holds = next_gap <= bound * gap * (1.0 + RATE_SLACK);
        rows.push(RateRow {
            k: w[0].k,
            gap,
            next_gap,
            ratio,
            holds,
        });
    }
    Ok(RateReport {
        variant,
        bound,
        slack: RATE_SLACK,
        gap_floor,
        rows,
        skipped,
        provenance: bounds.provenance,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DistanceRow {
    pub k: u32,
    pub dist: f64,
    pub next_dist: f64,
    /// Right-hand side of the inequality being checked, before slack.
    pub bound_rhs: f64,
    /// Whether the starting point lies in the quadratic-convergence
    /// region `dist < sqrt(mu/l) * 2 mu / m`.
    pub in_fast_region: bool,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct DistanceReport {
    /// What inequality the rows test, for display.
    pub label: &'static str,
    pub rows: Vec<DistanceRow>,
    /// Transitions skipped because either endpoint distance sat at the
    /// floor, below the optimum's own resolution.
    pub skipped: usize,
    pub slack: f64,
    pub dist_floor: f64,
    pub provenance: Provenance,
}

impl DistanceReport {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }

    pub fn first_violation(&self) -> Option<&DistanceRow> {
        self.rows.iter().find(|r| !r.holds)
    }

    pub fn fast_region_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.in_fast_region).count()
    }
}

impl fmt::Display for DistanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} transitions checked ({} in fast region), {} at floor",
            self.label,
            self.rows.len(),
            self.fast_region_rows(),
            self.skipped,
        )?;
        match self.first_violation() {
            None => write!(
                f,
                "; holds ({}, {})",
                self.provenance,
                self.provenance.verdict_word()
            ),
            Some(v) => write!(
                f,
                "; VIOLATED at k={} (next {:.6e} > rhs {:.6e}) under {} bounds",
                v.k, v.next_dist, v.bound_rhs, self.provenance
            ),
        }
    }
}

fn trace_distances(
    trace: &IterateTrace,
    optimum: &ReferenceOptimum,
) -> Result<Vec<f64>, VerifyError> {
    let iterates = trace
        .iterates
        .as_ref()
        .ok_or(VerifyError::MissingIterates)?;
    if iterates.len() < 2 {
        return Err(VerifyError::TraceTooShort);
    }
    Ok(iterates.iter().map(|x| (x - &optimum.x).norm()).collect())
}

fn fast_region_radius(bounds: &ConvergenceBounds) -> f64 {
    if bounds.m > 0.0 {
        (bounds.mu / bounds.l).sqrt() * 2.0 * bounds.mu / bounds.m
    } else {
        f64::INFINITY
    }
}

/// Checks the contraction `dist_{k+1} <= sqrt(l/mu) (m / 2 mu) dist_k^2`
/// that a unit Newton step satisfies near the optimum, up to a relative
/// slack of 1e-6. Transitions with either distance at or below
/// `dist_floor` are skipped; rows flag whether the start lay inside the
/// quadratic-convergence region, where the bound is guaranteed rather
/// than merely observed.
pub fn check_as_fast_as_newton(
    trace: &IterateTrace,
    bounds: &ConvergenceBounds,
    optimum: &ReferenceOptimum,
    dist_floor: f64,
) -> Result<DistanceReport, VerifyError> {
    bounds.validate()?;
    let dists = trace_distances(trace, optimum)?;
    let c = (bounds.l / bounds.mu).sqrt() * bounds.m / (2.0 * bounds.mu);
    let radius = fast_region_radius(bounds);
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for k in 0..dists.len() - 1 {
        let dist = dists[k];
        let next_dist = dists[k + 1];
        if dist <= dist_floor || next_dist <= dist_floor {
            skipped += 1;
            continue;
        }
        let rhs = c * dist * dist;
        rows.push(DistanceRow {
            k: trace.records[k].k,
            dist,
            next_dist,
            bound_rhs: rhs,
            in_fast_region: dist < radius,
            holds: next_dist <= rhs * (1.0 + DISTANCE_SLACK),
        });
    }
    Ok(DistanceReport {
        label: "as-fast-as-newton",
        rows,
        skipped,
        slack: DISTANCE_SLACK,
        dist_floor,
        provenance: bounds.provenance,
    })
}

/// Checks the local bound for a Newton-direction step of recorded size
/// `alpha`: `dist_{k+1} <= |alpha| (m / 2 mu) dist_k^2 +
/// |alpha - 1| (l / mu) dist_k`, up to a relative slack of 1e-6.
/// Step sizes are taken from the trace rows; the transition into row
/// `k+1` uses that row's recorded step. Floor handling matches
/// [`check_as_fast_as_newton`].
pub fn check_arbitrary_step(
    trace: &IterateTrace,
    bounds: &ConvergenceBounds,
    optimum: &ReferenceOptimum,
    dist_floor: f64,
) -> Result<DistanceReport, VerifyError> {
    bounds.validate()?;
    let dists = trace_distances(trace, optimum)?;
    let radius = fast_region_radius(bounds);
    let kappa = bounds.l / bounds.mu;
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for k in 0..dists.len() - 1 {
        let dist = dists[k];
        let next_dist = dists[k + 1];
        if dist <= dist_floor || next_dist <= dist_floor {
            skipped += 1;
            continue;
        }
        let alpha = trace.records[k + 1].step_size;
        let rhs = alpha.abs() * bounds.m / (2.0 * bounds.mu) * dist * dist
            + (alpha - 1.0).abs() * kappa * dist;
        rows.push(DistanceRow {
            k: trace.records[k].k,
            dist,
            next_dist,
            bound_rhs: rhs,
            in_fast_region: dist < radius,
            holds: next_dist <= rhs * (1.0 + DISTANCE_SLACK),
        });
    }
    Ok(DistanceReport {
        label: "arbitrary-step",
        rows,
        skipped,
        slack: DISTANCE_SLACK,
        dist_floor,
        provenance: bounds.provenance,
    })
}
