//! One- and two-dimensional line searches over [`LineRestriction`] probes.
//!
//! [`exact_search`] minimizes `phi(alpha) = f(x + alpha * d)` for convex
//! `phi` by doubling the step until the directional derivative turns
//! nonnegative, then bisecting on the derivative sign until the bracket is
//! narrower than the tolerance. [`armijo_search`] is classical
//! backtracking. [`plane_search`] alternates exact searches over the span
//! of two directions.

use nalgebra::DVector;
use thiserror::Error;

use crate::oracles::{LineRestriction, Objective, OracleError};

#[derive(Debug, Error)]
pub enum LineSearchError {
    #[error("direction is not a descent direction (initial slope {slope:e})")]
    NotDescent { slope: f64 },
    #[error("restriction probe returned a non-finite {what} at alpha = {alpha:e}")]
    NonFiniteProbe { what: &'static str, alpha: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Controls for [`exact_search`].
#[derive(Debug, Clone)]
pub struct ExactSearchConfig {
    /// First step probed; the doubling phase starts here.
    pub initial_step: f64,
    /// Bisection stops once the bracket is narrower than this.
    pub tolerance: f64,
    /// Doublings allowed while hunting for a nonnegative slope.
    pub max_doublings: u32,
    /// Safety cap on bisection iterations.
    pub max_bisections: u32,
}

impl Default for ExactSearchConfig {
    fn default() -> Self {
        ExactSearchConfig {
            initial_step: 1.0,
            tolerance: 1e-8,
            max_doublings: 64,
            max_bisections: 200,
        }
    }
}

impl ExactSearchConfig {
    pub fn validate(&self) -> Result<(), LineSearchError> {
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(LineSearchError::InvalidConfig(
                "initial_step must be positive and finite",
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(LineSearchError::InvalidConfig("tolerance must be positive"));
        }
        if self.max_doublings == 0 {
            return Err(LineSearchError::InvalidConfig(
                "max_doublings must be at least 1",
            ));
        }
        Ok(())
    }
}

/// Controls for [`armijo_search`].
#[derive(Debug, Clone)]
pub struct ArmijoConfig {
    /// Sufficient-decrease fraction, the sigma in
    /// `phi(alpha) <= phi(0) + sigma * alpha * phi'(0)`.
    pub sufficient_decrease: f64,
    /// Multiplicative backtracking factor in (0, 1).
    pub backtrack: f64,
    /// First trial step.
    pub initial_step: f64,
    /// Backtracks allowed before giving up.
    pub max_backtracks: u32,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        ArmijoConfig {
            sufficient_decrease: 1e-4,
            backtrack: 0.5,
            initial_step: 1.0,
            max_backtracks: 100,
        }
    }
}

impl ArmijoConfig {
    pub fn validate(&self) -> Result<(), LineSearchError> {
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease <= 0.5) {
            return Err(LineSearchError::InvalidConfig(
                "sufficient_decrease must lie in (0, 0.5]",
            ));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(LineSearchError::InvalidConfig(
                "backtrack must lie in (0, 1)",
            ));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(LineSearchError::InvalidConfig(
                "initial_step must be positive and finite",
            ));
        }
        Ok(())
    }
}

/// Why a line search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Bisection bracket shrank below the tolerance.
    IntervalConverged,
    /// A probe hit a derivative of exactly zero.
    DerivativeZero,
    /// The doubling phase never saw a nonnegative slope.
    DoublingCap,
    /// Armijo condition held at the returned step.
    ArmijoAccepted,
    /// Armijo backtracking gave up; the returned step may not decrease the
    /// objective.
    BacktrackCap,
}

#[derive(Debug, Clone)]
pub struct LineSearchResult {
    pub step: f64,
    /// Restriction value at `step`.
    pub value: f64,
    /// Restriction probes spent, counting fused value-and-slope calls once.
    pub probes: u32,
    pub termination: Termination,
    /// Width of the final bisection bracket; zero when a probe hit the
    /// minimizer exactly or no bracket was formed.
    pub bracket_width: f64,
}

struct Prober<'a> {
    phi: &'a dyn LineRestriction,
    probes: u32,
}

impl<'a> Prober<'a> {
    fn new(phi: &'a dyn LineRestriction) -> Self {
        Prober { phi, probes: 0 }
    }

    fn value_and_slope(&mut self, alpha: f64) -> Result<(f64, f64), LineSearchError> {
        self.probes += 1;
        let (v, s) = self.phi.value_and_slope(alpha);
        if !v.is_finite() {
            return Err(LineSearchError::NonFiniteProbe {
                what: "value",
                alpha,
            });
        }
        if s.is_nan() {
            return Err(LineSearchError::NonFiniteProbe {
                what: "slope",
                alpha,
            });
        }
        Ok((v, s))
    }

    fn value(&mut self, alpha: f64) -> Result<f64, LineSearchError> {
        self.probes += 1;
        let v = self.phi.value(alpha);
        if !v.is_finite() {
            return Err(LineSearchError::NonFiniteProbe {
                what: "value",
                alpha,
            });
        }
        Ok(v)
    }
}

/// Exact minimization of a convex restriction.
///
/// Starts at `initial_step`. A nonnegative slope there brackets the
/// minimizer in `(0, initial_step)`; otherwise the step doubles until the
/// slope turns nonnegative or the doubling budget runs out. Bisection on
/// the slope sign then shrinks the bracket below `tolerance`, keeping the
/// left half on ties. A probe with slope exactly zero returns immediately.
///
/// The returned step is the best probed point, so its value never exceeds
/// the value at any probe, in the restriction's own arithmetic. Errors if
/// the slope at zero is nonnegative or a probe goes non-finite.
pub fn exact_search(
    phi: &dyn LineRestriction,
    cfg: &ExactSearchConfig,
) -> Result<LineSearchResult, LineSearchError> {
    cfg.validate()?;
    let mut p = Prober::new(phi);

    let (_, s0) = p.value_and_slope(0.0)?;
    if s0 >= 0.0 {
        return Err(LineSearchError::NotDescent { slope: s0 });
    }

    let mut alpha = cfg.initial_step;
    let (v, s) = p.value_and_slope(alpha)?;
    let mut best = (alpha, v);
    if s == 0.0 {
        return Ok(LineSearchResult {
            step: alpha,
            value: v,
            probes: p.probes,
            termination: Termination::DerivativeZero,
            bracket_width: 0.0,
        });
    }

    let (mut lo, mut hi) = if s > 0.0 {
        (0.0, alpha)
    } else {
        // Slope still negative: double until it changes sign.
        let mut bracket = None;
        let mut last = (alpha, v);
        for _ in 0..cfg.max_doublings {
            let prev = alpha;
            alpha *= 2.0;
            if !alpha.is_finite() {
                break;
            }
            let (v, s) = p.value_and_slope(alpha)?;
            if v < best.1 {
                best = (alpha, v);
            }
            last = (alpha, v);
            if s == 0.0 {
                return Ok(LineSearchResult {
                    step: alpha,
                    value: v,
                    probes: p.probes,
                    termination: Termination::DerivativeZero,
                    bracket_width: 0.0,
                });
            }
            if s > 0.0 {
                bracket = Some((prev, alpha));
                break;
            }
        }
        match bracket {
            Some(b) => b,
            None => {
                // Still descending after every doubling. Return the last
                // probe; for convex phi it is the best point seen.
                return Ok(LineSearchResult {
                    step: last.0,
                    value: last.1,
                    probes: p.probes,
                    termination: Termination::DoublingCap,
                    bracket_width: 0.0,
                });
            }
        }
    };

    let mut width = hi - lo;
    for _ in 0..cfg.max_bisections {
        if width < cfg.tolerance {
            break;
        }
        let mid = lo + 0.5 * width;
        let (v, s) = p.value_and_slope(mid)?;
        if v < best.1 {
            best = (mid, v);
        }
        if s == 0.0 {
            return Ok(LineSearchResult {
                step: mid,
                value: v,
                probes: p.probes,
                termination: Termination::DerivativeZero,
                bracket_width: 0.0,
            });
        }
        if s < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        width = hi - lo;
    }

    // Midpoint of the final bracket, kept only if it beats every probe.
    let candidate = lo + 0.5 * width;
    if candidate > 0.0 {
        let v = p.value(candidate)?;
        if v < best.1 {
            best = (candidate, v);
        }
    }
    Ok(LineSearchResult {
        step: best.0,
        value: best.1,
        probes: p.probes,
        termination: Termination::IntervalConverged,
        bracket_width: width,
    })
}

/// Armijo backtracking: accepts the first step in
/// `{a0, beta * a0, beta^2 * a0, ...}` satisfying the sufficient-decrease
/// condition. Exhausting `max_backtracks` returns the last trial tagged
/// [`Termination::BacktrackCap`]; that step satisfies nothing beyond being
/// positive. Errors if the slope at zero is nonnegative.
pub fn armijo_search(
    phi: &dyn LineRestriction,
    cfg: &ArmijoConfig,
) -> Result<LineSearchResult, LineSearchError> {
    cfg.validate()?;
    let mut p = Prober::new(phi);

    let (f0, s0) = p.value_and_slope(0.0)?;
    if s0 >= 0.0 {
        return Err(LineSearchError::NotDescent { slope: s0 });
    }

    let mut alpha = cfg.initial_step;
    for backtracks in 0..=cfg.max_backtracks {
        let v = p.value(alpha)?;
        if v <= f0 + cfg.sufficient_decrease * alpha * s0 {
            return Ok(LineSearchResult {
                step: alpha,
                value: v,
                probes: p.probes,
                termination: Termination::ArmijoAccepted,
                bracket_width: 0.0,
            });
        }
        if backtracks == cfg.max_backtracks {
            return Ok(LineSearchResult {
                step: alpha,
                value: v,
                probes: p.probes,
                termination: Termination::BacktrackCap,
                bracket_width: 0.0,
            });
        }
        alpha *= cfg.backtrack;
    }
    unreachable!("loop returns on acceptance or exhaustion");
}

/// Outcome of [`plane_search`]. `point` is the chosen iterate itself;
/// it equals `x + step_first * d_first + step_second * d_second` up to
/// round-off, and downstream code must use `point` rather than rebuild it
/// so that `value` stays exactly the objective value at the returned
/// iterate.
#[derive(Debug, Clone)]
pub struct PlaneSearchResult {
    pub step_first: f64,
    pub step_second: f64,
    /// Objective value at `point`, from a direct oracle call.
    pub value: f64,
    pub probes: u32,
    pub point: DVector<f64>,
}

/// Minimizes the objective over `x + span(d_first, d_second)` by
/// alternating exact one-dimensional searches, starting along `d_second`.
/// Each half-sweep freezes one coefficient and exactly searches the other
/// direction through the current point, searching the reversed ray when
/// the local slope calls for it. `sweeps` counts full alternations.
///
/// Candidates are compared by direct objective values, and the unit step
/// along `d_second` is always included as a candidate, so the result never
/// loses to the start point, to `x + d_second`, or to any intermediate
/// state. Errors if neither direction descends at `x`.
pub fn plane_search(
    p: &dyn Objective,
    x: &DVector<f64>,
    d_first: &DVector<f64>,
    d_second: &DVector<f64>,
    sweeps: u32,
    cfg: &ExactSearchConfig,
) -> Result<PlaneSearchResult, LineSearchError> {
    cfg.validate()?;
    let g = p.gradient(x);
    let s1 = g.dot(d_first);
    let s2 = g.dot(d_second);
    if s1 >= 0.0 && s2 >= 0.0 {
        return Err(LineSearchError::NotDescent { slope: s1.min(s2) });
    }

    let mut probes = 0u32;
    let mut current = x.clone();
    let mut coeffs = (0.0f64, 0.0f64);
    let mut best = (coeffs, p.value(x), x.clone());
    probes += 1;

    // Unit step along the second direction, as its own candidate.
    {
        let y = x + d_second;
        let v = p.value(&y);
        probes += 1;
        if v.is_finite() && v < best.1 {
            best = ((0.0, 1.0), v, y);
        }
    }

    let half_sweep = |current: &mut DVector<f64>,
                      coeff: &mut f64,
                      dir: &DVector<f64>,
                      key: usize,
                      coeffs: &mut (f64, f64),
                      best: &mut ((f64, f64), f64, DVector<f64>),
                      probes: &mut u32|
     -> Result<(), LineSearchError> {
        if dir.iter().all(|v| *v == 0.0) {
            return Ok(());
        }
        let phi = p.restrict(current, dir)?;
        let s = phi.slope(0.0);
        *probes += 1;
        if s.is_nan() {
            return Err(LineSearchError::NonFiniteProbe {
                what: "slope",
                alpha: 0.0,
            });
        }
        let delta = if s == 0.0 {
            return Ok(());
        } else if s < 0.0 {
            let r = exact_search(&*phi, cfg)?;
            *probes += r.probes;
            r.step
        } else {
            let reversed = -dir;
            let phi_rev = p.restrict(current, &reversed)?;
            let r = exact_search(&*phi_rev, cfg)?;
            *probes += r.probes;
            -r.step
        };
        *coeff += delta;
        *current += dir * delta;
        if key == 0 {
            coeffs.0 = *coeff;
        } else {
            coeffs.1 = *coeff;
        }
        let v = p.value(current);
        *probes += 1;
        if v.is_finite() && v < best.1 {
            *best = (*coeffs, v, current.clone());
        }
        Ok(())
    };

    let mut a = 0.0f64;
    let mut b = 0.0f64;
    for _ in 0..sweeps {
        half_sweep(
            &mut current,
            &mut b,
            d_second,
            1,
            &mut coeffs,
            &mut best,
            &mut probes,
        )?;
        half_sweep(
            &mut current,
            &mut a,
            d_first,
            0,
            &mut coeffs,
            &mut best,
            &mut probes,
        )?;
    }

    Ok(PlaneSearchResult {
        step_first: best.0 .0,
        step_second: best.0 .1,
        value: best.1,
        probes,
        point: best.2,
    })
}
