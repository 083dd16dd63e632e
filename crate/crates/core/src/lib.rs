//! Row-action solvers for consistent linear systems `Ax = b`.
//!
//! The centerpiece is the greedy multi-step inertial Kaczmarz iteration
//! (`gmirk`): a greedy residual-thresholded row choice followed by an
//! inertial step that lands on the intersection of the last two working
//! hyperplanes. Plain randomized (`rk`), greedy (`grk`), inertial (`mirk`)
//! and oblique-projection (`oblique`) variants share the same [`Solver`]
//! trait and are looked up by name in a [`SolverRegistry`].
//!
//! The [`theory`] module turns the deterministic contraction bound and the
//! residual identities of the inertial iteration into checks over recorded
//! traces.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod io;
pub mod linalg;
pub mod selection;
pub mod solvers;
pub mod theory;

pub use linalg::{CsrMatrix, DenseMatrix, LinearSystem, Matrix, SpectralSummary};
pub use selection::{GreedyContext, IndexSource, ProbabilityRule};
pub use solvers::{run, solver_by_name, RunConfig, RunOutput, Solver, SolverRegistry};
