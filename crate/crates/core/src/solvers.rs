//! Newton-type solvers and the trace-recording driver.
//!
//! Every method is expressed as a single step function from a point to a
//! [`StepOutcome`]; [`solve`] iterates one of them, records a row per
//! iteration, and stops on a gradient-norm threshold, a target value, an
//! iteration budget, or loss of numerical progress. Step functions report
//! the objective value at the accepted point from a direct oracle call, so
//! dominance comparisons between methods are exact rather than subject to
//! restriction round-off.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::cubic::{self, CubicConfig, CubicError};
use crate::linesearch::{
    armijo_search, exact_search, plane_search, ArmijoConfig, ExactSearchConfig, LineSearchError,
};
use crate::oracles::{Objective, OracleError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("Hessian factorization failed at every jitter level (last tried {last_jitter:e})")]
    UnrecoverableHessian { last_jitter: f64 },
    #[error("Hessian contains non-finite entries")]
    NonFiniteHessian,
    #[error("line search failed: {0}")]
    LineSearch(#[from] LineSearchError),
    #[error("oracle failure: {0}")]
    Oracle(#[from] OracleError),
    #[error("cubic step failed: {0}")]
    Cubic(#[from] CubicError),
    #[error("non-finite {what} at iteration {iteration}; partial trace attached")]
    NumericalFailure {
        what: &'static str,
        iteration: u32,
        partial: Box<IterateTrace>,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("initial point has dimension {got}, objective expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("method {method} requires an objective with {capability} support")]
    MissingCapability {
        method: Method,
        capability: &'static str,
    },
}

/// The iterative methods the driver knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// `x - H^-1 g` with unit step.
    PureNewton,
    /// Newton direction, step chosen by exact line search.
    GreedyNewton,
    /// Newton direction, step chosen by Armijo backtracking.
    ArmijoNewton,
    /// Steepest descent with exact line search.
    GreedyGradient,
    /// Per-iteration winner of the exact gradient step and the pure
    /// Newton step, by function value.
    Hybrid,
    /// Exact minimization over the plane spanned by the gradient and
    /// Newton directions.
    PlaneNewton,
    /// Cubic-regularization model step followed by exact line search
    /// along it.
    CubicLineSearch,
    /// Levenberg-Marquardt step with the damping chosen greedily by
    /// function value.
    CubicGreedyLm,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::PureNewton,
        Method::GreedyNewton,
        Method::ArmijoNewton,
        Method::GreedyGradient,
        Method::Hybrid,
        Method::PlaneNewton,
        Method::CubicLineSearch,
        Method::CubicGreedyLm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PureNewton => "pure-newton",
            Method::GreedyNewton => "greedy-newton",
            Method::ArmijoNewton => "armijo-newton",
            Method::GreedyGradient => "greedy-gradient",
            Method::Hybrid => "hybrid",
            Method::PlaneNewton => "plane-newton",
            Method::CubicLineSearch => "cubic-linesearch",
            Method::CubicGreedyLm => "cubic-greedy-lm",
        }
    }

    fn needs_hessian(self) -> bool {
        !matches!(self, Method::GreedyGradient)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown method {0:?}; expected one of pure-newton, greedy-newton, armijo-newton, greedy-gradient, hybrid, plane-newton, cubic-linesearch, cubic-greedy-lm")]
pub struct UnknownMethod(String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

/// Which candidate the hybrid method took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Gradient,
    Newton,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Gradient => "gradient",
            Branch::Newton => "newton",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Gradient norm fell to the configured threshold.
    GradientNorm,
    /// Objective value fell to the configured target.
    FValue,
    /// Iteration budget exhausted.
    MaxIterations,
    /// A step could not decrease the objective in double precision.
    NumericalFloor,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::GradientNorm => "gradient-norm",
            StopReason::FValue => "f-value",
            StopReason::MaxIterations => "max-iterations",
            StopReason::NumericalFloor => "numerical-floor",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown stop reason {0:?}")]
pub struct UnknownStopReason(String);

impl FromStr for StopReason {
    type Err = UnknownStopReason;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            StopReason::GradientNorm,
            StopReason::FValue,
            StopReason::MaxIterations,
            StopReason::NumericalFloor,
        ]
        .into_iter()
        .find(|r| r.name() == s)
        .ok_or_else(|| UnknownStopReason(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iterations: u32,
    /// Stop once the gradient norm is at or below this.
    pub gradient_norm_stop: f64,
    /// Optional stop once the objective value is at or below this.
    pub f_value_stop: Option<f64>,
    pub exact: ExactSearchConfig,
    pub armijo: ArmijoConfig,
    pub cubic: CubicConfig,
    /// Base diagonal shift when the Hessian fails to factor; doubles until
    /// factorization succeeds.
    pub jitter_base: f64,
    /// Full alternations for the plane-search method.
    pub plane_sweeps: u32,
    /// Start point; the origin when absent.
    pub initial_point: Option<DVector<f64>>,
    /// Keep every iterate in the trace, not just its scalar summaries.
    pub record_iterates: bool,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        SolverConfig {
            method,
            max_iterations: 100,
            gradient_norm_stop: 1e-10,
            f_value_stop: None,
            exact: ExactSearchConfig::default(),
            armijo: ArmijoConfig::default(),
            cubic: CubicConfig::default(),
            jitter_base: 1e-12,
            plane_sweeps: 5,
            initial_point: None,
            record_iterates: false,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidConfig(
                "max_iterations must be at least 1",
            ));
        }
        if !(self.gradient_norm_stop >= 0.0) {
            return Err(SolverError::InvalidConfig(
                "gradient_norm_stop must be nonnegative",
            ));
        }
        if !(self.jitter_base > 0.0 && self.jitter_base.is_finite()) {
            return Err(SolverError::InvalidConfig(
                "jitter_base must be positive and finite",
            ));
        }
        if self.method == Method::PlaneNewton && self.plane_sweeps == 0 {
            return Err(SolverError::InvalidConfig(
                "plane_sweeps must be at least 1",
            ));
        }
        self.exact.validate()?;
        self.armijo.validate()?;
        self.cubic.validate()?;
        Ok(())
    }
}

/// One iteration's result. `f_next` is always the objective value at
/// `x_next` from a direct oracle call.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x_next: DVector<f64>,
    pub f_next: f64,
    /// Step size along the method's primary direction: the line-search
    /// step for greedy/Armijo methods, 1 for pure Newton and the cubic
    /// methods, the gradient step on hybrid gradient branches, the
    /// Newton-direction coefficient for plane search.
    pub step_size: f64,
    /// Objective evaluations spent choosing the step: restriction probes
    /// plus direct candidate evaluations. Gradient and Hessian calls are
    /// not counted.
    pub probes: u32,
    /// Diagonal shift applied to make the Hessian factor; for
    /// cubic-greedy-lm this is the chosen damping lambda.
    pub jitter: f64,
    /// Which candidate hybrid took; `None` for other methods.
    pub branch: Option<Branch>,
}

/// One recorded iteration. Row 0 describes the initial point with zero
/// step, probes, jitter, and time.
#[derive(Debug, Clone)]
pub struct IterateRecord {
    pub k: u32,
    pub f: f64,
    pub grad_norm: f64,
    pub step_size: f64,
    pub probes: u32,
    pub jitter: f64,
    pub branch: Option<Branch>,
    /// Cumulative wall-clock seconds spent inside step computations,
    /// excluding convergence checks and trace bookkeeping.
    pub cum_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct IterateTrace {
    pub method: Method,
    pub records: Vec<IterateRecord>,
    /// Present when the driver ran with `record_iterates`; in lockstep
    /// with `records`.
    pub iterates: Option<Vec<DVector<f64>>>,
    pub stop: StopReason,
}

impl IterateTrace {
    pub fn final_f(&self) -> f64 {
        self.records.last().expect("trace always has row 0").f
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.records
            .last()
            .expect("trace always has row 0")
            .grad_norm
    }

    /// Completed iterations; one less than the number of rows.
    pub fn iterations(&self) -> u32 {
        (self.records.len() - 1) as u32
    }

    /// Objective values are non-increasing along every recorded trace.
    pub fn f_is_non_increasing(&self) -> bool {
        self.records.windows(2).all(|w| w[1].f <= w[0].f)
    }
}

/// Newton direction `d = -(H + jitter * I)^-1 g` at `x`.
///
/// The first factorization attempt is jitter-free. On failure, or when the
/// computed direction is not a descent direction, the shift starts at
/// `jitter_base` and doubles until Cholesky succeeds; overflowing the
/// shift is an unrecoverable error. Returns the direction and the shift
/// that produced it.
pub fn newton_direction(
    p: &dyn Objective,
    x: &DVector<f64>,
    jitter_base: f64,
) -> Result<(DVector<f64>, f64), SolverError> {
    let g = p.gradient(x);
    newton_direction_from(p, x, &g, jitter_base)
}

pub(crate) fn newton_direction_from(
    p: &dyn Objective,
    x: &DVector<f64>,
    g: &DVector<f64>,
    jitter_base: f64,
) -> Result<(DVector<f64>, f64), SolverError> {
    if !(jitter_base > 0.0 && jitter_base.is_finite()) {
        return Err(SolverError::InvalidConfig(
            "jitter_base must be positive and finite",
        ));
    }
    let h = p.hessian(x);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFiniteHessian);
    }
    let neg_g = -g;
    let mut jitter = 0.0f64;
    loop {
        let trial = shifted(&h, jitter);
        if let Some(chol) = Cholesky::new(trial) {
            let d = chol.solve(&neg_g);
            if d.iter().all(|v| v.is_finite()) && g.dot(&d) < 0.0 {
                return Ok((d, jitter));
            }
        }
        let next = if jitter == 0.0 {
            jitter_base
        } else {
            jitter * 2.0
        };
        if !next.is_finite() {
            return Err(SolverError::UnrecoverableHessian {
                last_jitter: jitter,
            });
        }
        jitter = next;
    }
}

pub(crate) fn shifted(h: &DMatrix<f64>, shift: f64) -> DMatrix<f64> {
    let mut t = h.clone();
    if shift != 0.0 {
        for i in 0..t.nrows() {
            t[(i, i)] += shift;
        }
    }
    t
}

/// Pure Newton: unit step along the Newton direction.
pub fn step_pure_newton(
    p: &dyn Objective,
    x: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<StepOutcome, SolverError> {
    let g = p.gradient(x);
    let (d, jitter) = newton_direction_from(p, x, &g, cfg.jitter_base)?;
    let x_next = x + &d;
    let f_next = p.value(&x_next);
    Ok(StepOutcome {
        x_next,
        f_next,
        step_size: 1.0,
        probes: 1,
        jitter,
        branch: None,
    })
}

/// Newton direction with exact line search. The step at
/// `exact.initial_step` (1 by default, the pure Newton step) is always a
/// candidate by direct evaluation, so the outcome never loses to it.
pub fn step_greedy_newton(
    p: &dyn Objective,
    x: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<StepOutcome, SolverError> {
    let g = p.gradient(x);
    let (d, jitter) = newton_direction_from(p, x, &g, cfg.jitter_base)?;
    let phi = p.restrict(x, &d)?;
    let r = exact_search(&*phi, &cfg.exact)?;

    let mut step = r.step;
    let mut x_next = x + &d * step;
    let mut f_next = p.value(&x_next);
    let mut probes = r.probes + 1;
    if step != cfg.exact.initial_step {
        let x_init = x + &d * cfg.exact.initial_step;
        let f_init = p.value(&x_init);
        probes += 1;
        if f_init < f_next {
            step = cfg.exact.initial_step;
            x_next = x_init;
            f_next = f_init;
        }
    }
    Ok(StepOutcome {
        x_next,
        f_next,
        step_size: step,
        probes,
        jitter,
        branch: None,
    })
}

/// Newton direction with Armijo backtracking.
pub fn step_armijo_newton(
    p: &dyn Objective,
    x: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<StepOutcome, SolverError> {
    let g = p.gradient(x);
    let (d, jitter) = newton_direction_from(p, x, &g, cfg.jitter_base)?;
    let phi = p.restrict(x, &d)?;
    let r = armijo_search(&*phi, &cfg.armijo)?;
    let x_next = x + &d * r.step;
    let f_next = p.value(&x_next);
    Ok(StepOutcome {
        x_next,
        f_next,
        step_size: r.step,
        probes: r.probes + 1,
        jitter,
        branch: None,
    })
}

/// Steepest descent with exact line search.
pub fn step_greedy_gradient(
    p: &dyn Objective,
    x: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<StepOutcome, SolverError> {
    let g = p.gradient(x);
    let d = -&g;
    let phi = p.restrict(x, &d)?;
    let r = exact_search(&*phi, &cfg.exact)?;
    let x_next = x + &d * r.step;
    let f_next = p.value(&x_next);
    Ok(StepOutcome {
        x_next,
        f_next,
        step_size: r.step,
        probes: r.probes + 1,
        jitter: 0.0,
        branch: None,
    })
}

/// Hybrid gradient-Newton: evaluates the exact-line-search gradient step
/// and the pure Newton step, keeps whichever has the lower objective
/// value, taking Newton on ties.
pub fn step_hybrid(
    p: &dyn Objective,
    x: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<StepOutcome, SolverError> {
    let g = p.gradient(x);
    let d_grad = -&g;
    let phi = p.restrict(x, &d_grad)?;
    let r = exact_search(&*phi, &cfg.exact)?;
    let x_grad = x + &d_grad * r.step;
    let f_grad = p.value(&x_grad);

    let (d_newton, jitter) = newton_direction_from(p, x, &g, cfg.jitter_base)?;
    let x_newton = x + &d_newton;
    let f_newton = p.value(&x_newton);

    let probes = r.probes + 2;
    if f_newton <= f_grad {
        Ok(StepOutcome {
            x_next: x_newton,
            f_next: f_newton,
            step_size: 1.0,
            probes,
            jitter,
            branch: Some(Branch::Newton),
        })
    } else {
        Ok(StepOutcome {
            x_next: x_grad,
            f_next: f_grad,
            step_size: r.step,
            probes,
            jitter,
            branch: Some(Branch::Gradient),
        })
    }
}

/// Exact search over the plane spanned by the negative gradient and the
/// Newton direction. Sweeps the Newton direction first; the recorded step
/// size is the Newton-direction coefficient.
pub fn step_plane_newton(
    p: &dyn Objective,
    x: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<StepOutcome, SolverError> {
    let g = p.gradient(x);
    let (d_newton, jitter) = newton_direction_from(p, x, &g, cfg.jitter_base)?;
    let d_grad = -&g;
    let r = plane_search(p, x, &d_grad, &d_newton, cfg.plane_sweeps, &cfg.exact)?;
    Ok(StepOutcome {
        x_next: r.point,
        f_next: r.value,
        step_size: r.step_second,
        probes: r.probes,
        jitter,
        branch: None,
    })
}

fn step(
    p: &dyn Objective,
    x: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<StepOutcome, SolverError> {
    match cfg.method {
        Method::PureNewton => step_pure_newton(p, x, cfg),
        Method::GreedyNewton => step_greedy_newton(p, x, cfg),
        Method::ArmijoNewton => step_armijo_newton(p, x, cfg),
        Method::GreedyGradient => step_greedy_gradient(p, x, cfg),
        Method::Hybrid => step_hybrid(p, x, cfg),
        Method::PlaneNewton => step_plane_newton(p, x, cfg),
        Method::CubicLineSearch => Ok(cubic::step_cubic_linesearch(p, x, &cfg.cubic, &cfg.exact)?),
        Method::CubicGreedyLm => Ok(cubic::step_greedy_lm(p, x, &cfg.cubic)?.0),
    }
}

/// Runs the configured method from the initial point, recording one row
/// per iteration plus row 0 for the start.
///
/// Stops on the gradient-norm threshold, the optional value target, the
/// iteration budget, or when a step fails to strictly decrease the
/// objective (recorded as [`StopReason::NumericalFloor`]; the
/// non-improving step is not recorded, so traces are strictly decreasing
/// in f). Non-finite values or gradients abort with a partial trace
/// attached to the error.
pub fn solve(p: &dyn Objective, cfg: &SolverConfig) -> Result<IterateTrace, SolverError> {
    cfg.validate()?;
    let caps = p.capabilities();
    if !caps.value || !caps.gradient {
        return Err(SolverError::MissingCapability {
            method: cfg.method,
            capability: "value and gradient",
        });
    }
    if cfg.method.needs_hessian() && !caps.hessian {
        return Err(SolverError::MissingCapability {
            method: cfg.method,
            capability: "hessian",
        });
    }

    let n = p.dim();
    let x0 = match &cfg.initial_point {
        Some(v) => {
            if v.len() != n {
                return Err(SolverError::DimensionMismatch {
                    got: v.len(),
                    expected: n,
                });
            }
            v.clone()
        }
        None => DVector::zeros(n),
    };

    let mut x = x0;
    let mut f = p.value(&x);
    let g = p.gradient(&x);
    let mut grad_norm = g.norm();
    let mut records = vec![IterateRecord {
        k: 0,
        f,
        grad_norm,
        step_size: 0.0,
        probes: 0,
        jitter: 0.0,
        branch: None,
        cum_time_s: 0.0,
    }];
    let mut iterates = cfg.record_iterates.then(|| vec![x.clone()]);

    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NumericalFailure {
            what: "initial value or gradient",
            iteration: 0,
            partial: Box::new(IterateTrace {
                method: cfg.method,
                records,
                iterates,
                stop: StopReason::NumericalFloor,
            }),
        });
    }

    let mut stop = StopReason::MaxIterations;
    let mut cum_time = 0.0f64;
    for k in 1..=cfg.max_iterations {
        if grad_norm <= cfg.gradient_norm_stop {
            stop = StopReason::GradientNorm;
            break;
        }
        if let Some(target) = cfg.f_value_stop {
            if f <= target {
                stop = StopReason::FValue;
                break;
            }
        }

        let started = Instant::now();
        let out = step(p, &x, cfg)?;
        cum_time += started.elapsed().as_secs_f64();

        let g_next = p.gradient(&out.x_next);
        let grad_norm_next = g_next.norm();
        if !out.f_next.is_finite() || g_next.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NumericalFailure {
                what: "step value or gradient",
                iteration: k,
                partial: Box::new(IterateTrace {
                    method: cfg.method,
                    records,
                    iterates,
                    stop: StopReason::NumericalFloor,
                }),
            });
        }
        if out.f_next >= f {
            stop = StopReason::NumericalFloor;
            break;
        }

        x = out.x_next;
        f = out.f_next;
        grad_norm = grad_norm_next;
        records.push(IterateRecord {
            k,
            f,
            grad_norm,
            step_size: out.step_size,
            probes: out.probes,
            jitter: out.jitter,
            branch: out.branch,
            cum_time_s: cum_time,
        });
        if let Some(iter_list) = &mut iterates {
            iter_list.push(x.clone());
        }
    }

    // The loop checks thresholds before stepping, so a run that spends its
    // whole budget still deserves the more specific reason when the final
    // state meets one.
    if stop == StopReason::MaxIterations {
        if grad_norm <= cfg.gradient_norm_stop {
            stop = StopReason::GradientNorm;
        } else if cfg.f_value_stop.is_some_and(|target| f <= target) {
            stop = StopReason::FValue;
        }
    }

    Ok(IterateTrace {
        method: cfg.method,
        records,
        iterates,
        stop,
    })
}
