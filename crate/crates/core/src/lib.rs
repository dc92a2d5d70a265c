//! Discrete-time bivariate semi-Markov engine for coupled rating migration.
//!
//! The crate computes transition probabilities with backward recurrence times
//! for a two-component semi-Markov chain whose embedded jumps are coupled
//! through the pair of occupied states, derives component and system
//! reliabilities under absorbing Down sets, and prices risk-free and risky
//! CDS contracts (par spreads, CVA) from them. An event-driven Monte Carlo
//! simulator provides an independent cross-check of every deterministic
//! quantity, and the `bismc` binary exposes the whole pipeline on files.
//!
//! The numeric core is generic over the scalar type (see [`real::Real`]);
//! the aliases below fix `f64`, which the CLI and file formats use.

pub mod kernel;
pub mod solver;
pub mod model;
pub mod real;

pub use kernel::{build_kernel, ensure_admissible, KernelError, KernelTables};
pub use model::{
    load_model, BivariateModel, Component, InitialCondition, MarginalTransitionLaw, ModelError,
    ModelFile, SojournLaw, StateSpace, ValidationReport, Violation,
};
pub use real::Real;
pub use solver::{solve_grid, state_prob, transition_prob, SolveError, SolverLimits, TransitionQuery, TransitionTable};

/// `f64` model, the concrete type the CLI and file formats work with.
pub type Model64 = BivariateModel<f64>;
/// `f64` kernel tables.
pub type KernelTables64 = KernelTables<f64>;
