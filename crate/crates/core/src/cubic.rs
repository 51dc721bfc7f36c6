//! Cubic-regularization step variants.
//!
//! [`cubic_subproblem`] minimizes the cubic model
//! `m(y) = f + g.(y-x) + 0.5 (y-x)^T H (y-x) + (M/6) |y-x|^3`
//! through its stationarity condition: the minimizer solves the shifted
//! linear system `(H + (M/2) r I)(y - x) = -g` where `r = |y - x|`, so a
//! scalar search on `r` suffices. [`step_cubic_linesearch`] follows the
//! model step with an exact line search along it, and [`step_greedy_lm`]
//! picks a Levenberg-Marquardt damping `lambda` by directly minimizing
//! `f(x - (H + lambda I)^-1 g)` over a log-scaled grid with golden-section
//! refinement.

use nalgebra::{Cholesky, DVector};
use thiserror::Error;

use crate::linesearch::{exact_search, ExactSearchConfig, LineSearchError};
use crate::oracles::{Objective, OracleError};
use crate::solvers::{shifted, StepOutcome};

#[derive(Debug, Error)]
pub enum CubicError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("cubic model scalar search did not converge within {0} iterations")]
    SubproblemStalled(u32),
    #[error("no feasible shift found for the cubic model system")]
    NoFeasibleShift,
    #[error("Hessian factorization failed for every damping value")]
    UnrecoverableHessian,
    #[error("non-finite {0} from oracle")]
    NonFiniteOracle(&'static str),
    #[error(transparent)]
    LineSearch(#[from] LineSearchError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone)]
pub struct CubicConfig {
    /// Hessian Lipschitz constant M for the cubic model.
    pub hessian_lipschitz: f64,
    /// Lower end of the Levenberg-Marquardt damping range.
    pub lambda_min: f64,
    /// Upper end of the Levenberg-Marquardt damping range.
    pub lambda_max: f64,
    /// Convergence tolerance for the inner scalar searches.
    pub inner_tolerance: f64,
    /// Iteration cap for the inner scalar searches.
    pub max_inner_iterations: u32,
}

impl Default for CubicConfig {
    fn default() -> Self {
        CubicConfig {
            hessian_lipschitz: 1.0,
            lambda_min: 0.0,
            lambda_max: 1e6,
            inner_tolerance: 1e-8,
            max_inner_iterations: 200,
        }
    }
}

impl CubicConfig {
    pub fn validate(&self) -> Result<(), CubicError> {
        if !(self.hessian_lipschitz > 0.0 && self.hessian_lipschitz.is_finite()) {
            return Err(CubicError::InvalidConfig(
                "hessian_lipschitz must be positive and finite",
            ));
        }
        if !(self.lambda_min >= 0.0) {
            return Err(CubicError::InvalidConfig("lambda_min must be nonnegative"));
        }
        if !(self.lambda_min < self.lambda_max && self.lambda_max.is_finite()) {
            return Err(CubicError::InvalidConfig(
                "lambda range must satisfy lambda_min < lambda_max",
            ));
        }
        if !(self.inner_tolerance > 0.0) {
            return Err(CubicError::InvalidConfig(
                "inner_tolerance must be positive",
            ));
        }
        if self.max_inner_iterations == 0 {
            return Err(CubicError::InvalidConfig(
                "max_inner_iterations must be at least 1",
            ));
        }
        Ok(())
    }
}

/// Approximate minimizer of the cubic model at `x`, returned together with
/// the solved shift scalar `r`. The result satisfies
/// `| |y - x| - r | <= inner_tolerance * (1 + r)`.
pub fn cubic_subproblem(
    p: &dyn Objective,
    x: &DVector<f64>,
    m_hess: f64,
    inner_tolerance: f64,
    max_inner_iterations: u32,
) -> Result<(DVector<f64>, f64), CubicError> {
    if !(m_hess > 0.0 && m_hess.is_finite()) {
        return Err(CubicError::InvalidConfig("M must be positive and finite"));
    }
    if !(inner_tolerance > 0.0) {
        return Err(CubicError::InvalidConfig(
            "inner_tolerance must be positive",
        ));
    }
    let g = p.gradient(x);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(CubicError::NonFiniteOracle("gradient"));
    }
    let h = p.hessian(x);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(CubicError::NonFiniteOracle("hessian"));
    }
    let neg_g = -&g;
    let half_m = 0.5 * m_hess;

    // delta(r) solves (H + (M/2) r I) delta = -g; its norm s(r) decreases
    // in r, so s(r) = r has a unique root and sign(s(r) - r) brackets it.
    let solve_at = |r: f64| -> Option<(DVector<f64>, f64)> {
        let chol = Cholesky::new(shifted(&h, half_m * r))?;
        let delta = chol.solve(&neg_g);
        let s = delta.norm();
        s.is_finite().then_some((delta, s))
    };

    let mut lo = 0.0f64;
    let mut hi;
    let mut best: Option<(DVector<f64>, f64, f64)> = None; // (delta, r, residual)
    match solve_at(0.0) {
        Some((delta, s)) => {
            if s <= inner_tolerance {
                // Gradient is (numerically) zero; the model minimizer is x
                // itself up to tolerance.
                return Ok((x + delta, 0.0));
            }
            hi = s;
            best = Some((delta.clone(), 0.0, s));
        }
        None => {
            // Singular Hessian: grow the shift until the system solves and
            // the fixed point is bracketed.
            hi = 1.0;
            let mut bracketed = false;
            for _ in 0..max_inner_iterations {
                if let Some((delta, s)) = solve_at(hi) {
                    let residual = (s - hi).abs();
                    if best.as_ref().is_none_or(|b| residual < b.2) {
                        best = Some((delta, hi, residual));
                    }
                    if s <= hi {
                        bracketed = true;
                        break;
                    }
                    lo = hi;
                }
                hi *= 2.0;
                if !hi.is_finite() {
                    return Err(CubicError::NoFeasibleShift);
                }
            }
            if !bracketed {
                return Err(CubicError::NoFeasibleShift);
            }
        }
    }

    for _ in 0..max_inner_iterations {
        let mid = 0.5 * (lo + hi);
        match solve_at(mid) {
            None => lo = mid,
            Some((delta, s)) => {
                let residual = (s - mid).abs();
                if residual <= inner_tolerance * (1.0 + mid) {
                    return Ok((x + delta, mid));
                }
                if best.as_ref().is_none_or(|b| residual < b.2) {
                    best = Some((delta, mid, residual));
                }
                if s > mid {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        if hi - lo <= inner_tolerance * (1.0 + lo) {
            break;
        }
    }

    match best {
        Some((delta, r, residual)) if residual <= inner_tolerance * (1.0 + r) * 4.0 => {
            Ok((x + delta, r))
        }
        _ => Err(CubicError::SubproblemStalled(max_inner_iterations)),
    }
}

/// Cubic model step followed by an exact line search along it. The plain
/// model step (unit coefficient) is always a direct-evaluation candidate,
/// so the outcome never loses to it.
pub fn step_cubic_linesearch(
    p: &dyn Objective,
    x: &DVector<f64>,
    cubic: &CubicConfig,
    exact: &ExactSearchConfig,
) -> Result<StepOutcome, CubicError> {
    cubic.validate()?;
    let (y, _r) = cubic_subproblem(
        p,
        x,
        cubic.hessian_lipschitz,
        cubic.inner_tolerance,
        cubic.max_inner_iterations,
    )?;
    let d = &y - x;
    if d.iter().all(|v| *v == 0.0) {
        // Model minimizer coincides with x (gradient at the numerical
        // floor); report a null step and let the driver stop.
        let f_next = p.value(x);
        return Ok(StepOutcome {
            x_next: x.clone(),
            f_next,
            step_size: 0.0,
            probes: 1,
            jitter: 0.0,
            branch: None,
        });
    }

    let phi = p.restrict(x, &d)?;
    let r = exact_search(&*phi, exact)?;
    let mut step = r.step;
    let mut x_next = x + &d * step;
    let mut f_next = p.value(&x_next);
    let mut probes = r.probes + 1;

    // The plain cubic step itself, compared in direct arithmetic.
    let f_plain = p.value(&y);
    probes += 1;
    if f_plain < f_next {
        step = 1.0;
        x_next = y;
        f_next = f_plain;
    }
    Ok(StepOutcome {
        x_next,
        f_next,
        step_size: step,
        probes,
        jitter: 0.0,
        branch: None,
    })
}

/// Levenberg-Marquardt step `x - (H + lambda I)^-1 g` with `lambda` chosen
/// greedily: the candidate objective value is evaluated on a log-spaced
/// decade grid over the configured range (plus the `lambda = 0` endpoint
/// when the range allows it), then refined by golden-section search on
/// `log lambda` around the best grid point. Returns the step and the
/// chosen `lambda`; the outcome's `jitter` field carries the same value.
pub fn step_greedy_lm(
    p: &dyn Objective,
    x: &DVector<f64>,
    cfg: &CubicConfig,
) -> Result<(StepOutcome, f64), CubicError> {
    cfg.validate()?;
    let g = p.gradient(x);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(CubicError::NonFiniteOracle("gradient"));
    }
    let h = p.hessian(x);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(CubicError::NonFiniteOracle("hessian"));
    }
    let neg_g = -&g;

    let mut evals = 0u32;
    let mut best: Option<(f64, f64, DVector<f64>)> = None; // (f, lambda, x_next)
                                                           // Candidate value at one damping level; None when the shifted system
                                                           // does not factor or the value is not finite.
    let mut candidate = |lambda: f64, best: &mut Option<(f64, f64, DVector<f64>)>| -> Option<f64> {
        evals += 1;
        let chol = Cholesky::new(shifted(&h, lambda))?;
        let x_next = x + chol.solve(&neg_g);
        let f = p.value(&x_next);
        if !f.is_finite() {
            return None;
        }
        if best.as_ref().is_none_or(|b| f < b.0) {
            *best = Some((f, lambda, x_next));
        }
        Some(f)
    };

    // Decade grid over the positive part of the range, plus the lambda = 0
    // endpoint when the range starts there.
    let mut grid = Vec::new();
    if cfg.lambda_min == 0.0 {
        grid.push(0.0);
    }
    let mut lambda = cfg.lambda_min.max(1e-6);
    while lambda < cfg.lambda_max {
        grid.push(lambda);
        lambda *= 10.0;
    }
    grid.push(cfg.lambda_max);

    let mut best_grid: Option<(usize, f64)> = None;
    for (i, &lam) in grid.iter().enumerate() {
        if let Some(f) = candidate(lam, &mut best) {
            if best_grid.is_none_or(|(_, bf)| f < bf) {
                best_grid = Some((i, f));
            }
        }
    }
    let Some((best_idx, _)) = best_grid else {
        return Err(CubicError::UnrecoverableHessian);
    };

    // Golden-section refinement on log(lambda) around the winning grid
    // point, skipped when lambda = 0 wins outright.
    let lam_best = grid[best_idx];
    if lam_best > 0.0 {
        // The bracket stays inside the configured range: a decade below
        // the winner when the range starts at zero, the range's own
        // endpoints otherwise.
        let floor = if cfg.lambda_min > 0.0 {
            cfg.lambda_min
        } else {
            lam_best / 10.0
        };
        let left = if best_idx == 0 || grid[best_idx - 1] == 0.0 {
            (lam_best / 10.0).max(floor)
        } else {
            grid[best_idx - 1]
        };
        let right = if best_idx + 1 < grid.len() {
            grid[best_idx + 1]
        } else {
            cfg.lambda_max
        };
        let mut a = left.ln();
        let mut b = right.ln();
        let ratio = (5.0f64.sqrt() - 1.0) / 2.0;
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let mut fc = candidate(c.exp(), &mut best).unwrap_or(f64::INFINITY);
        let mut fd = candidate(d.exp(), &mut best).unwrap_or(f64::INFINITY);
        for _ in 0..cfg.max_inner_iterations {
            if (b - a).abs() <= cfg.inner_tolerance {
                break;
            }
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = candidate(c.exp(), &mut best).unwrap_or(f64::INFINITY);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = candidate(d.exp(), &mut best).unwrap_or(f64::INFINITY);
            }
        }
    }

    let (f_next, lambda, x_next) = best.expect("feasibility checked above");
    Ok((
        StepOutcome {
            x_next,
            f_next,
            step_size: 1.0,
            probes: evals,
            jitter: lambda,
            branch: None,
        },
        lambda,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{LogisticProblem, QuadraticProblem};
    use crate::solvers::{step_pure_newton, Method, SolverConfig};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::rngs::StdRng;
    use rand::{RngExt, SeedableRng};

    fn random_logistic(seed: u64, m: usize, n: usize, lambda: f64) -> LogisticProblem {
        let mut rng = StdRng::seed_from_u64(seed);
        let a = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let b = DVector::from_fn(m, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        LogisticProblem::dense(a, b, lambda).unwrap()
    }

    #[test]
    fn subproblem_matches_hand_solved_scalar_case() {
        // f = 0.5 (x - c)^2 with x - c = -4: H = 1, g = -4. With M = 6 the
        // scalar equation (1 + 3r) r = 4 has root r = 1, delta = +1.
        let p = QuadraticProblem::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 4.0),
        );
        let x = DVector::zeros(1);
        let (y, r) = cubic_subproblem(&p, &x, 6.0, 1e-10, 200).unwrap();
        assert_relative_eq!(r, 1.0, epsilon = 1e-8);
        assert_relative_eq!(y[0], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn subproblem_approaches_newton_step_as_m_vanishes() {
        let p = random_logistic(3, 30, 4, 1.0);
        let x = DVector::from_element(4, 0.5);
        let g = p.gradient(&x);
        let newton = Cholesky::new(p.hessian(&x)).unwrap().solve(&(-&g));
        let (y, _r) = cubic_subproblem(&p, &x, 1e-12, 1e-12, 500).unwrap();
        let step = &y - &x;
        assert!((&step - &newton).norm() <= 1e-6 * newton.norm());
    }

    #[test]
    fn subproblem_residual_invariant_holds() {
        for seed in 0..5 {
            let p = random_logistic(10 + seed, 25, 5, 0.3);
            let x = DVector::from_element(5, 1.0);
            let (y, r) = cubic_subproblem(&p, &x, 2.0, 1e-8, 200).unwrap();
            let s = (&y - &x).norm();
            assert!(
                (s - r).abs() <= 1e-8 * (1.0 + r) * 4.0,
                "seed {seed}: |s - r| = {}",
                (s - r).abs()
            );
        }
    }

    #[test]
    fn subproblem_stationarity_residual_is_small() {
        let p = random_logistic(20, 40, 6, 0.5);
        let x = DVector::from_element(6, -0.7);
        let m = 3.0;
        let g = p.gradient(&x);
        let (y, _r) = cubic_subproblem(&p, &x, m, 1e-8, 200).unwrap();
        let delta = &y - &x;
        let grad_model = &g + p.hessian(&x) * &delta + &delta * (0.5 * m * delta.norm());
        assert!(
            grad_model.norm() <= 1e-6 * (1.0 + g.norm()),
            "stationarity residual {}",
            grad_model.norm()
        );
    }

    #[test]
    fn subproblem_handles_singular_hessian() {
        // H = diag(1, 0), g = (2, 0), M = 6: s(r) = 2 / (1 + 3r), fixed
        // point 3r^2 + r - 2 = 0 at r = 2/3.
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p = QuadraticProblem::new(q, DVector::zeros(2));
        let x = DVector::from_vec(vec![2.0, 0.0]);
        let (y, r) = cubic_subproblem(&p, &x, 6.0, 1e-10, 300).unwrap();
        assert_relative_eq!(r, 2.0 / 3.0, epsilon = 1e-7);
        assert_relative_eq!(y[0], 2.0 - 2.0 / 3.0, epsilon = 1e-7);
        assert_relative_eq!(y[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn subproblem_direction_is_descent() {
        for seed in 0..10 {
            let p = random_logistic(40 + seed, 30, 5, 0.0);
            let x = DVector::from_element(5, 0.4);
            let g = p.gradient(&x);
            let (y, _) = cubic_subproblem(&p, &x, 1.5, 1e-8, 200).unwrap();
            assert!(g.dot(&(&y - &x)) < 0.0, "seed {seed}");
        }
    }

    #[test]
    fn cubic_linesearch_never_loses_to_plain_cubic_step() {
        let exact = ExactSearchConfig::default();
        for seed in 0..20 {
            let p = random_logistic(100 + seed, 35, 5, 0.5);
            let x = DVector::from_element(5, 0.9);
            let cfg = CubicConfig::default();
            let out = step_cubic_linesearch(&p, &x, &cfg, &exact).unwrap();
            let (y, _) = cubic_subproblem(
                &p,
                &x,
                cfg.hessian_lipschitz,
                cfg.inner_tolerance,
                cfg.max_inner_iterations,
            )
            .unwrap();
            assert!(out.f_next <= p.value(&y), "seed {seed}");
        }
    }

    #[test]
    fn cubic_linesearch_with_tiny_m_solves_quadratic() {
        let mut rng = StdRng::seed_from_u64(77);
        let b = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let q = b.tr_mul(&b) + DMatrix::identity(4, 4);
        let c = DVector::from_fn(4, |_, _| rng.random::<f64>());
        let p = QuadraticProblem::new(q, c.clone());
        let x = DVector::zeros(4);
        let cubic = CubicConfig {
            hessian_lipschitz: 1e-10,
            ..CubicConfig::default()
        };
        let out = step_cubic_linesearch(&p, &x, &cubic, &ExactSearchConfig::default()).unwrap();
        assert!((out.step_size - 1.0).abs() < 1e-5, "step {}", out.step_size);
        assert!((&out.x_next - &c).norm() < 1e-6);
    }

    #[test]
    fn greedy_lm_selects_zero_damping_on_quadratics() {
        for seed in 0..5 {
            let mut rng = StdRng::seed_from_u64(seed);
            let b = DMatrix::from_fn(5, 5, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let q = b.tr_mul(&b) + DMatrix::identity(5, 5) * 0.1;
            let c = DVector::from_fn(5, |_, _| rng.random::<f64>() * 2.0);
            let p = QuadraticProblem::new(q, c.clone());
            let x = DVector::zeros(5);
            let (out, lambda) = step_greedy_lm(&p, &x, &CubicConfig::default()).unwrap();
            assert_eq!(lambda, 0.0, "seed {seed}");
            assert!((&out.x_next - &c).norm() < 1e-8);
            assert_eq!(out.jitter, 0.0);
        }
    }

    #[test]
    fn greedy_lm_never_loses_to_pure_newton() {
        let solver_cfg = SolverConfig::new(Method::CubicGreedyLm);
        for seed in 0..20 {
            let p = random_logistic(200 + seed, 30, 5, 0.8);
            let x = DVector::from_element(5, 1.1);
            let (out, _) = step_greedy_lm(&p, &x, &CubicConfig::default()).unwrap();
            let pure = step_pure_newton(&p, &x, &solver_cfg).unwrap();
            assert!(
                out.f_next <= pure.f_next,
                "seed {seed}: lm {} vs newton {}",
                out.f_next,
                pure.f_next
            );
        }
    }

    #[test]
    fn greedy_lm_beats_brute_force_grid() {
        let p = random_logistic(301, 40, 4, 0.2);
        let x = DVector::from_element(4, 2.0);
        let (out, _) = step_greedy_lm(&p, &x, &CubicConfig::default()).unwrap();
        let g = p.gradient(&x);
        let h = p.hessian(&x);
        let mut grid_best = f64::INFINITY;
        let mut lam = 1e-6;
        let mut lams = vec![0.0];
        while lam <= 1e6 {
            lams.push(lam);
            lam *= 10.0;
        }
        for lam in lams {
            if let Some(chol) = Cholesky::new(shifted(&h, lam)) {
                let cand = &x + chol.solve(&(-&g));
                grid_best = grid_best.min(p.value(&cand));
            }
        }
        assert!(out.f_next <= grid_best);
    }

    #[test]
    fn greedy_lm_step_shrinks_under_huge_damping() {
        let p = random_logistic(401, 25, 4, 0.5);
        let x = DVector::from_element(4, 1.0);
        let cfg = CubicConfig {
            lambda_min: 1e9,
            lambda_max: 1e12,
            ..CubicConfig::default()
        };
        let (out, lambda) = step_greedy_lm(&p, &x, &cfg).unwrap();
        assert!(lambda >= 1e9);
        assert!((&out.x_next - &x).norm() < 1e-8 * x.norm());
    }

    #[test]
    fn config_validation_rejects_bad_ranges() {
        let bad = CubicConfig {
            hessian_lipschitz: 0.0,
            ..CubicConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = CubicConfig {
            lambda_min: 5.0,
            lambda_max: 2.0,
            ..CubicConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = CubicConfig {
            inner_tolerance: -1.0,
            ..CubicConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
