//! Differentiable objectives and their one-dimensional restrictions.
//!
//! The [`Objective`] trait is the oracle interface every solver consumes:
//! value, gradient, Hessian, and a [`LineRestriction`] that evaluates
//! `phi(alpha) = f(x + alpha * d)` and its derivative along a fixed ray.
//! Line searches probe the restriction many times per iteration, so
//! objectives that can amortize work across probes should override
//! [`Objective::restrict`]; the provided [`LogisticProblem`] does, caching
//! margins so each probe costs O(m) instead of a full re-evaluation.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("search direction is the zero vector")]
    ZeroDirection,
    #[error("label {value} at example {index} is not -1 or +1")]
    InvalidLabel { value: f64, index: usize },
    #[error("regularization strength must be nonnegative, got {0}")]
    NegativeRegularization(f64),
    #[error("feature rows ({rows}) and label count ({labels}) disagree")]
    ExampleCountMismatch { rows: usize, labels: usize },
    #[error("feature column index {col} out of bounds for dimension {dim}")]
    ColumnOutOfBounds { col: usize, dim: usize },
}

/// Which oracle calls an objective supports. Everything in this crate
/// supports all four; the struct exists so generic drivers can reject a
/// method that needs a capability the objective lacks instead of panicking
/// mid-run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub value: bool,
    pub gradient: bool,
    pub hessian: bool,
    pub restriction: bool,
}

impl Default for Capabilities {
    fn default() -> Self {
        Capabilities {
            value: true,
            gradient: true,
            hessian: true,
            restriction: true,
        }
    }
}

/// One-dimensional restriction `phi(alpha) = f(x + alpha * d)` of an
/// objective along a fixed ray.
pub trait LineRestriction {
    /// `phi(alpha)`.
    fn value(&self, alpha: f64) -> f64;
    /// `phi'(alpha) = grad f(x + alpha * d) . d`.
    fn slope(&self, alpha: f64) -> f64;
    /// Both at once; overridden where a fused evaluation is cheaper.
    fn value_and_slope(&self, alpha: f64) -> (f64, f64) {
        (self.value(alpha), self.slope(alpha))
    }
}

/// A twice-differentiable objective on R^n.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }

    /// A known lower bound on the Hessian spectrum, when the objective
    /// carries one analytically (for example an explicit ridge term).
    fn convexity_lower_bound(&self) -> Option<f64> {
        None
    }

    /// Restriction of the objective to the ray `x + alpha * d`.
    ///
    /// The default falls back to full oracle calls per probe; implementors
    /// with exploitable structure should replace it. Errors if `d` is the
    /// zero vector, which would make every probe degenerate.
    fn restrict<'a>(
        &'a self,
        x: &DVector<f64>,
        d: &DVector<f64>,
    ) -> Result<Box<dyn LineRestriction + 'a>, OracleError> {
        if d.iter().all(|v| *v == 0.0) {
            return Err(OracleError::ZeroDirection);
        }
        Ok(Box::new(DirectRestriction {
            objective: self,
            x: x.clone(),
            d: d.clone(),
        }))
    }
}

/// Fallback restriction: each probe re-evaluates the full oracle at
/// `x + alpha * d`. Correct for any objective, never cheaper.
pub struct DirectRestriction<'a, O: Objective + ?Sized> {
    objective: &'a O,
    x: DVector<f64>,
    d: DVector<f64>,
}

impl<'a, O: Objective + ?Sized> DirectRestriction<'a, O> {
    pub fn new(objective: &'a O, x: &DVector<f64>, d: &DVector<f64>) -> Result<Self, OracleError> {
        if d.iter().all(|v| *v == 0.0) {
            return Err(OracleError::ZeroDirection);
        }
        Ok(DirectRestriction {
            objective,
            x: x.clone(),
            d: d.clone(),
        })
    }

    fn point(&self, alpha: f64) -> DVector<f64> {
        &self.x + &self.d * alpha
    }
}

impl<O: Objective + ?Sized> LineRestriction for DirectRestriction<'_, O> {
    fn value(&self, alpha: f64) -> f64 {
        self.objective.value(&self.point(alpha))
    }

    fn slope(&self, alpha: f64) -> f64 {
        self.objective.gradient(&self.point(alpha)).dot(&self.d)
    }
}

/// `log(1 + exp(u))` without overflow for large positive `u` and without
/// losing all precision for large negative `u`.
pub(crate) fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// `1 / (1 + exp(-t))`, evaluated on the branch that never exponentiates a
/// large positive argument.
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Feature matrix, dense or row-sparse. Sparse rows hold strictly
/// ascending column indices.
#[derive(Debug, Clone)]
pub enum Features {
    Dense(DMatrix<f64>),
    Sparse {
        rows: Vec<Vec<(usize, f64)>>,
        cols: usize,
    },
}

impl Features {
    pub fn nrows(&self) -> usize {
        match self {
            Features::Dense(a) => a.nrows(),
            Features::Sparse { rows, .. } => rows.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Features::Dense(a) => a.ncols(),
            Features::Sparse { cols, .. } => *cols,
        }
    }

    /// `A * x`: one margin per example.
    pub fn margins(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Features::Dense(a) => a * x,
            Features::Sparse { rows, .. } => DVector::from_iterator(
                rows.len(),
                rows.iter()
                    .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum()),
            ),
        }
    }

    /// `A^T * w`: weighted combination of example rows.
    pub fn weighted_sum(&self, w: &DVector<f64>) -> DVector<f64> {
        match self {
            Features::Dense(a) => a.tr_mul(w),
            Features::Sparse { rows, cols } => {
                let mut out = DVector::zeros(*cols);
                for (i, row) in rows.iter().enumerate() {
                    let wi = w[i];
                    for &(j, v) in row {
                        out[j] += wi * v;
                    }
                }
                out
            }
        }
    }

    /// `A^T * diag(w) * A` with `w >= 0`, returned exactly symmetric.
    pub fn weighted_gram(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let n = self.ncols();
        let mut h = match self {
            Features::Dense(a) => {
                // Scale rows by sqrt(w) so the product is a plain Gram
                // matrix and the heavy lifting stays in the matrix kernel.
                let mut b = a.clone();
                for i in 0..b.nrows() {
                    let s = w[i].sqrt();
                    for j in 0..b.ncols() {
                        b[(i, j)] *= s;
                    }
                }
                b.tr_mul(&b)
            }
            Features::Sparse { rows, .. } => {
                let mut h = DMatrix::zeros(n, n);
                for (i, row) in rows.iter().enumerate() {
                    let wi = w[i];
                    for (p, &(j1, v1)) in row.iter().enumerate() {
                        for &(j2, v2) in &row[p..] {
                            h[(j1, j2)] += wi * v1 * v2;
                        }
                    }
                }
                h
            }
        };
        // Mirror the upper triangle so round-off cannot break symmetry.
        for i in 0..n {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        h
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Features::Dense(a) => a.clone(),
            Features::Sparse { rows, cols } => {
                let mut a = DMatrix::zeros(rows.len(), *cols);
                for (i, row) in rows.iter().enumerate() {
                    for &(j, v) in row {
                        a[(i, j)] = v;
                    }
                }
                a
            }
        }
    }
}

/// Regularized logistic regression:
///
/// `f(x) = sum_i log(1 + exp(-b_i * a_i . x)) + (lambda / 2) * |x|^2`
///
/// with labels `b_i` in {-1, +1}. Strictly convex for `lambda > 0`; for
/// `lambda = 0` the infimum may be unattained (separable data).
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    features: Features,
    labels: DVector<f64>,
    lambda: f64,
}

impl LogisticProblem {
    pub fn new(features: Features, labels: DVector<f64>, lambda: f64) -> Result<Self, OracleError> {
        if !(lambda >= 0.0) {
            return Err(OracleError::NegativeRegularization(lambda));
        }
        if features.nrows() != labels.len() {
            return Err(OracleError::ExampleCountMismatch {
                rows: features.nrows(),
                labels: labels.len(),
            });
        }
        for (i, &b) in labels.iter().enumerate() {
            if b != 1.0 && b != -1.0 {
                return Err(OracleError::InvalidLabel { value: b, index: i });
            }
        }
        if let Features::Sparse { rows, cols } = &features {
            for row in rows {
                for &(j, _) in row {
                    if j >= *cols {
                        return Err(OracleError::ColumnOutOfBounds { col: j, dim: *cols });
                    }
                }
            }
        }
        Ok(LogisticProblem {
            features,
            labels,
            lambda,
        })
    }

    pub fn dense(a: DMatrix<f64>, labels: DVector<f64>, lambda: f64) -> Result<Self, OracleError> {
        LogisticProblem::new(Features::Dense(a), labels, lambda)
    }

    /// Same data, different ridge strength.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self, OracleError> {
        LogisticProblem::new(self.features.clone(), self.labels.clone(), lambda)
    }

    pub fn num_examples(&self) -> usize {
        self.labels.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    /// Per-example losses from precomputed margins `z = A * x`.
    fn loss_sum(&self, z: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..self.labels.len() {
            s += softplus(-self.labels[i] * z[i]);
        }
        s
    }
}

impl Objective for LogisticProblem {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        let z = self.features.margins(x);
        self.loss_sum(&z) + 0.5 * self.lambda * x.norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        let z = self.features.margins(x);
        // d/dz_i softplus(-b_i z_i) = -b_i * sigmoid(-b_i z_i)
        let w = DVector::from_iterator(
            self.labels.len(),
            self.labels
                .iter()
                .zip(z.iter())
                .map(|(&b, &zi)| -b * sigmoid(-b * zi)),
        );
        self.features.weighted_sum(&w) + x * self.lambda
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        let z = self.features.margins(x);
        // sigma * (1 - sigma) computed as sigmoid(t) * sigmoid(-t): both
        // factors stay accurate where the naive product would cancel.
        let w = DVector::from_iterator(
            self.labels.len(),
            self.labels.iter().zip(z.iter()).map(|(&b, &zi)| {
                let t = b * zi;
                sigmoid(t) * sigmoid(-t)
            }),
        );
        let mut h = self.features.weighted_gram(&w);
        for j in 0..h.nrows() {
            h[(j, j)] += self.lambda;
        }
        h
    }

    fn convexity_lower_bound(&self) -> Option<f64> {
        (self.lambda > 0.0).then_some(self.lambda)
    }

    fn restrict<'a>(
        &'a self,
        x: &DVector<f64>,
        d: &DVector<f64>,
    ) -> Result<Box<dyn LineRestriction + 'a>, OracleError> {
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        assert_eq!(d.len(), self.dim(), "direction dimension mismatch");
        if d.iter().all(|v| *v == 0.0) {
            return Err(OracleError::ZeroDirection);
        }
        Ok(Box::new(LogisticRestriction {
            labels: &self.labels,
            z: self.features.margins(x),
            dz: self.features.margins(d),
            lambda: self.lambda,
            xx: x.norm_squared(),
            xd: x.dot(d),
            dd: d.norm_squared(),
        }))
    }
}

/// Restriction of [`LogisticProblem`] along a ray. Margins `z = A x` and
/// `dz = A d` are cached at construction, so each probe is a single O(m)
/// pass regardless of the feature dimension.
struct LogisticRestriction<'a> {
    labels: &'a DVector<f64>,
    z: DVector<f64>,
    dz: DVector<f64>,
    lambda: f64,
    xx: f64,
    xd: f64,
    dd: f64,
}

impl LogisticRestriction<'_> {
    fn ridge(&self, alpha: f64) -> f64 {
        0.5 * self.lambda * (self.xx + 2.0 * alpha * self.xd + alpha * alpha * self.dd)
    }

    fn ridge_slope(&self, alpha: f64) -> f64 {
        self.lambda * (self.xd + alpha * self.dd)
    }
}

impl LineRestriction for LogisticRestriction<'_> {
    fn value(&self, alpha: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..self.labels.len() {
            s += softplus(-self.labels[i] * (self.z[i] + alpha * self.dz[i]));
        }
        s + self.ridge(alpha)
    }

    fn slope(&self, alpha: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..self.labels.len() {
            let b = self.labels[i];
            s += -b * self.dz[i] * sigmoid(-b * (self.z[i] + alpha * self.dz[i]));
        }
        s + self.ridge_slope(alpha)
    }

    fn value_and_slope(&self, alpha: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut s = 0.0;
        for i in 0..self.labels.len() {
            let b = self.labels[i];
            let t = -b * (self.z[i] + alpha * self.dz[i]);
            v += softplus(t);
            s += -b * self.dz[i] * sigmoid(t);
        }
        (v + self.ridge(alpha), s + self.ridge_slope(alpha))
    }
}

/// Convex quadratic `f(x) = 0.5 * (x - c)^T Q (x - c)` with symmetric
/// positive semidefinite `Q`. The minimizer is `c` with value 0, which
/// makes one-step exactness of Newton-type methods directly checkable.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    q: DMatrix<f64>,
    center: DVector<f64>,
}

impl QuadraticProblem {
    /// Builds the problem, symmetrizing `q` exactly. Panics if `q` is not
    /// square, does not match `center`, or is asymmetric beyond round-off.
    pub fn new(q: DMatrix<f64>, center: DVector<f64>) -> Self {
        assert_eq!(q.nrows(), q.ncols(), "Q must be square");
        assert_eq!(q.nrows(), center.len(), "Q and center dimensions disagree");
        let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut q = q;
        for i in 0..q.nrows() {
            for j in 0..i {
                let a = q[(i, j)];
                let b = q[(j, i)];
                assert!(
                    (a - b).abs() <= 1e-12 * scale,
                    "Q asymmetric at ({i}, {j}): {a} vs {b}"
                );
                let m = 0.5 * (a + b);
                q[(i, j)] = m;
                q[(j, i)] = m;
            }
        }
        QuadraticProblem { q, center }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }
}

impl Objective for QuadraticProblem {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let r = x - &self.center;
        0.5 * r.dot(&(&self.q * &r))
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * (x - &self.center)
    }

    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.q.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{RngExt, SeedableRng};

    fn small_problem(lambda: f64) -> LogisticProblem {
        // Three examples in R^2, chosen with margins small enough that the
        // naive loss formula is itself accurate to full precision.
        let a = DMatrix::from_row_slice(3, 2, &[0.3, -0.7, 1.1, 0.4, -0.5, 0.2]);
        let b = DVector::from_vec(vec![1.0, -1.0, 1.0]);
        LogisticProblem::dense(a, b, lambda).unwrap()
    }

    fn random_problem(seed: u64, m: usize, n: usize, lambda: f64) -> LogisticProblem {
        let mut rng = StdRng::seed_from_u64(seed);
        let a = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let b = DVector::from_fn(m, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        LogisticProblem::dense(a, b, lambda).unwrap()
    }

    fn random_vector(seed: u64, n: usize) -> DVector<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &u in &[-30.0, -3.0, -0.1, 0.0, 0.1, 3.0, 30.0] {
            assert_relative_eq!(softplus(u), (1.0 + f64::exp(u)).ln(), max_relative = 1e-14);
        }
    }

    #[test]
    fn softplus_survives_extreme_arguments() {
        assert_eq!(softplus(1e4), 1e4);
        assert!(softplus(-1e4) >= 0.0);
        assert!(softplus(-1e4) < 1e-300);
        assert!(softplus(750.0).is_finite());
        assert!(softplus(-750.0).is_finite());
    }

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_relative_eq!(sigmoid(2.0) + sigmoid(-2.0), 1.0, max_relative = 1e-15);
        assert_eq!(sigmoid(1e4), 1.0);
        // e^-700 is still representable; e^-10000 correctly rounds to 0.
        assert!(sigmoid(-700.0) > 0.0);
        assert!(sigmoid(-700.0) < 1e-300);
        assert_eq!(sigmoid(-1e4), 0.0);
    }

    #[test]
    fn value_at_zero_is_m_log_two() {
        let p = small_problem(0.0);
        let x = DVector::zeros(2);
        assert_relative_eq!(p.value(&x), 3.0 * f64::ln(2.0), max_relative = 1e-15);
    }

    #[test]
    fn value_matches_naive_formula() {
        let p = small_problem(1.0);
        let x = DVector::from_vec(vec![0.4, -1.2]);
        let a = p.features().to_dense();
        let mut expect = 0.5 * x.norm_squared();
        for i in 0..3 {
            let margin: f64 = (0..2).map(|j| a[(i, j)] * x[j]).sum();
            expect += (1.0 + (-p.labels()[i] * margin).exp()).ln();
        }
        assert_relative_eq!(p.value(&x), expect, max_relative = 1e-14);
    }

    #[test]
    fn zero_examples_reduce_to_ridge() {
        let p = LogisticProblem::dense(DMatrix::zeros(0, 4), DVector::zeros(0), 2.0).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, 0.0, -1.0]);
        assert_eq!(p.value(&x), 6.0);
        assert_eq!(p.gradient(&x), &x * 2.0);
        assert_eq!(p.hessian(&x), DMatrix::identity(4, 4) * 2.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = random_problem(7, 40, 6, 0.3);
        let x = random_vector(8, 6);
        let g = p.gradient(&x);
        let h = 1e-6;
        for j in 0..6 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
            assert_relative_eq!(g[j], fd, max_relative = 1e-7, epsilon = 1e-10);
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let p = random_problem(9, 30, 5, 0.7);
        let x = random_vector(10, 5);
        let hess = p.hessian(&x);
        let h = 1e-6;
        for j in 0..5 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (p.gradient(&xp) - p.gradient(&xm)) / (2.0 * h);
            for i in 0..5 {
                assert_relative_eq!(hess[(i, j)], col[i], max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn hessian_is_exactly_symmetric() {
        let p = random_problem(11, 25, 8, 0.0);
        let x = random_vector(12, 8);
        let h = p.hessian(&x);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(h[(i, j)], h[(j, i)]);
            }
        }
    }

    #[test]
    fn ridge_keeps_hessian_above_lambda() {
        // H - (lambda - eps) I must be positive definite for lambda > 0.
        let p = random_problem(13, 30, 6, 0.9);
        for seed in 0..10 {
            let x = random_vector(100 + seed, 6);
            let mut shifted = p.hessian(&x);
            for j in 0..6 {
                shifted[(j, j)] -= 0.9 - 1e-9;
            }
            assert!(
                nalgebra::Cholesky::new(shifted).is_some(),
                "spectrum dipped below the ridge strength at seed {seed}"
            );
        }
    }

    #[test]
    fn restriction_agrees_with_direct_evaluation() {
        let p = random_problem(17, 50, 7, 0.4);
        let x = random_vector(18, 7);
        let d = random_vector(19, 7);
        let phi = p.restrict(&x, &d).unwrap();
        for &alpha in &[0.0, 0.37, -1.5, 2.0, 11.0] {
            let y = &x + &d * alpha;
            assert_relative_eq!(phi.value(alpha), p.value(&y), max_relative = 1e-12);
            assert_relative_eq!(
                phi.slope(alpha),
                p.gradient(&y).dot(&d),
                max_relative = 1e-12,
                epsilon = 1e-12
            );
            let (v, s) = phi.value_and_slope(alpha);
            assert_eq!(v, phi.value(alpha));
            assert_eq!(s, phi.slope(alpha));
        }
    }

    #[test]
    fn restriction_slope_at_zero_is_directional_derivative() {
        let p = small_problem(0.25);
        let x = DVector::from_vec(vec![0.2, -0.3]);
        let d = DVector::from_vec(vec![1.0, 2.0]);
        let phi = p.restrict(&x, &d).unwrap();
        assert_relative_eq!(phi.slope(0.0), p.gradient(&x).dot(&d), max_relative = 1e-13);
    }

    #[test]
    fn restriction_rejects_zero_direction() {
        let p = small_problem(0.0);
        let x = DVector::zeros(2);
        let d = DVector::zeros(2);
        assert!(matches!(
            p.restrict(&x, &d),
            Err(OracleError::ZeroDirection)
        ));
    }

    #[test]
    fn sparse_and_dense_oracles_agree() {
        let p = random_problem(23, 20, 5, 0.6);
        let dense = p.features().to_dense();
        let rows: Vec<Vec<(usize, f64)>> = (0..20)
            .map(|i| (0..5).map(|j| (j, dense[(i, j)])).collect())
            .collect();
        let sp = LogisticProblem::new(Features::Sparse { rows, cols: 5 }, p.labels().clone(), 0.6)
            .unwrap();
        let x = random_vector(24, 5);
        let d = random_vector(25, 5);
        assert_relative_eq!(p.value(&x), sp.value(&x), max_relative = 1e-13);
        assert_relative_eq!(
            (p.gradient(&x) - sp.gradient(&x)).norm(),
            0.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            (p.hessian(&x) - sp.hessian(&x)).norm(),
            0.0,
            epsilon = 1e-12
        );
        let phi = sp.restrict(&x, &d).unwrap();
        assert_relative_eq!(
            phi.value(0.8),
            sp.value(&(&x + &d * 0.8)),
            max_relative = 1e-12
        );
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        let a = DMatrix::zeros(2, 2);
        let good = DVector::from_vec(vec![1.0, -1.0]);
        assert!(matches!(
            LogisticProblem::dense(a.clone(), DVector::from_vec(vec![1.0, 0.5]), 0.0),
            Err(OracleError::InvalidLabel { index: 1, .. })
        ));
        assert!(matches!(
            LogisticProblem::dense(a.clone(), good.clone(), -1.0),
            Err(OracleError::NegativeRegularization(_))
        ));
        assert!(matches!(
            LogisticProblem::dense(a.clone(), DVector::from_vec(vec![1.0]), 0.0),
            Err(OracleError::ExampleCountMismatch { .. })
        ));
        let bad_sparse = Features::Sparse {
            rows: vec![vec![(3, 1.0)], vec![]],
            cols: 2,
        };
        assert!(matches!(
            LogisticProblem::new(bad_sparse, good, 0.0),
            Err(OracleError::ColumnOutOfBounds { col: 3, dim: 2 })
        ));
    }

    #[test]
    fn quadratic_oracles() {
        let q = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let c = DVector::from_vec(vec![1.0, -2.0]);
        let p = QuadraticProblem::new(q.clone(), c.clone());
        assert_eq!(p.value(&c), 0.0);
        assert_eq!(p.gradient(&c), DVector::zeros(2));
        let x = DVector::from_vec(vec![2.0, 0.0]);
        let r = &x - &c;
        assert_relative_eq!(p.value(&x), 0.5 * r.dot(&(&q * &r)), max_relative = 1e-15);
        assert_eq!(p.hessian(&x), q);
        let phi = p.restrict(&x, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let y = &x + DVector::from_vec(vec![0.5, 0.5]);
        assert_relative_eq!(phi.value(0.5), p.value(&y), max_relative = 1e-14);
    }

    #[test]
    #[should_panic(expected = "asymmetric")]
    fn quadratic_rejects_asymmetric_matrix() {
        QuadraticProblem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DVector::zeros(2),
        );
    }

    proptest! {
        #[test]
        fn oracle_outputs_stay_finite(seed in 0u64..500, lambda in 0.0f64..2.0) {
            let p = random_problem(seed, 12, 4, lambda);
            let x = random_vector(seed.wrapping_add(1000), 4) * 10.0;
            let v = p.value(&x);
            let g = p.gradient(&x);
            let h = p.hessian(&x);
            prop_assert!(v.is_finite());
            prop_assert!(g.iter().all(|t| t.is_finite()));
            prop_assert!(h.iter().all(|t| t.is_finite()));
            for i in 0..4 {
                for j in 0..4 {
                    prop_assert_eq!(h[(i, j)], h[(j, i)]);
                }
            }
        }

        #[test]
        fn restriction_tracks_direct_eval(seed in 0u64..200, alpha in -20.0f64..20.0) {
            let p = random_problem(seed, 15, 3, 0.5);
            let x = random_vector(seed.wrapping_add(77), 3);
            let d = random_vector(seed.wrapping_add(78), 3);
            prop_assume!(d.iter().any(|v| *v != 0.0));
            let phi = p.restrict(&x, &d).unwrap();
            let y = &x + &d * alpha;
            let direct = p.value(&y);
            let via = phi.value(alpha);
            prop_assert!((via - direct).abs() <= 1e-11 * (1.0 + direct.abs()));
        }
    }
}
