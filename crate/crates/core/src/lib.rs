//! Second-order optimization with exact line search.
//!
//! The crate centers on Newton's method where the step size is chosen by
//! exactly minimizing the objective along the Newton direction, plus the
//! surrounding machinery needed to study it: differentiable oracles with
//! cheap one-dimensional restrictions, classical baselines (pure Newton,
//! Armijo backtracking, steepest descent with exact search), a hybrid
//! method that picks the better of a gradient and a Newton candidate each
//! iteration, a two-direction plane search, and two cubic-regularization
//! variants. The [`verify`] module turns known convergence-rate bounds
//! into runtime checkers that audit recorded traces, and [`data`] provides
//! deterministic synthetic problem generators plus file formats for
//! datasets, traces, and reference optima.

pub mod cubic;
pub mod data;
pub mod linesearch;
pub mod oracles;
pub mod solvers;
pub mod verify;
