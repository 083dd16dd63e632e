//! Kaczmarz-type solvers behind a common [`Solver`] trait, looked up by name
//! through a [`SolverRegistry`].

mod run;
mod steps;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

pub use run::{run, IterationTrace, RunConfig, RunOutput, StoppingRule, TraceRecord};
pub use steps::{
    gmirk_beta, gmirk_step, grk_step, mirk_step, oblique_step, orthogonal_projection, rk_step,
    sketch2_project, NEAR_PARALLEL_TOL,
};

use crate::linalg::{LinalgError, LinearSystem};
use crate::selection::{GreedyContext, IndexSource, SelectionError, SelectionRecord};

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("working rows are numerically parallel")]
    NearParallelRows,
    #[error("unknown solver {0:?}")]
    UnknownSolver(String),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("no convergence within {} iterations", .0.trace.records.len())]
    MaxItersExceeded(Box<RunOutput>),
}

impl SolveError {
    /// The step was refused because the residual is already zero.
    pub fn is_converged_residual(&self) -> bool {
        matches!(
            self,
            SolveError::Selection(SelectionError::ConvergedResidual(_))
        )
    }
}

/// Iterate, iteration counter, last working row and maintained residual.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub k: usize,
    pub prev_index: Option<usize>,
    /// `A x - b`, updated incrementally by the steps.
    pub r: Vec<f64>,
    scratch: Vec<usize>,
}

impl SolverState {
    pub fn new(sys: &LinearSystem, x0: Vec<f64>) -> Result<Self, LinalgError> {
        let r = sys.residual(&x0)?;
        Ok(Self {
            x: x0,
            k: 0,
            prev_index: None,
            r,
            scratch: Vec::new(),
        })
    }

    /// Replaces the maintained residual by `A x - b` and returns
    /// `‖r_maintained - r_fresh‖₂`.
    pub fn refresh_residual(&mut self, sys: &LinearSystem) -> f64 {
        let fresh = sys
            .residual(&self.x)
            .expect("state dimensions fixed at construction");
        let drift = self
            .r
            .iter()
            .zip(&fresh)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        self.r = fresh;
        drift
    }
}

/// Result of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub selection: SelectionRecord,
    /// Coefficient on the previous working row; 0 for plain projections.
    pub beta_k: f64,
    /// `‖x^{k+1} - x^k‖₂`.
    pub step_norm: f64,
    /// Near-parallel rows forced a plain projection in an inertial variant.
    pub inertial_fallback: bool,
}

/// A row-action iteration.
pub trait Solver: fmt::Debug + Send + Sync {
    /// Stable name used by the registry, CLI and trace files.
    fn name(&self) -> &'static str;

    /// Uses the greedy index set `I_k`.
    fn is_greedy(&self) -> bool;

    /// Lands on the intersection of the last two working hyperplanes (k >= 1).
    fn is_inertial(&self) -> bool;

    fn step(
        &self,
        state: &mut SolverState,
        sys: &LinearSystem,
        ctx: &GreedyContext,
        source: &mut IndexSource,
    ) -> Result<StepOutcome, SolveError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomizedKaczmarz;

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyRandomizedKaczmarz;

#[derive(Debug, Clone, Copy, Default)]
pub struct InertialKaczmarz;

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyInertialKaczmarz;

#[derive(Debug, Clone, Copy, Default)]
pub struct ObliqueKaczmarz;

impl Solver for RandomizedKaczmarz {
    fn name(&self) -> &'static str {
        "rk"
    }
    fn is_greedy(&self) -> bool {
        false
    }
    fn is_inertial(&self) -> bool {
        false
    }
    fn step(
        &self,
        state: &mut SolverState,
        sys: &LinearSystem,
        _ctx: &GreedyContext,
        source: &mut IndexSource,
    ) -> Result<StepOutcome, SolveError> {
        rk_step(state, sys, source)
    }
}

impl Solver for GreedyRandomizedKaczmarz {
    fn name(&self) -> &'static str {
        "grk"
    }
    fn is_greedy(&self) -> bool {
        true
    }
    fn is_inertial(&self) -> bool {
        false
    }
    fn step(
        &self,
        state: &mut SolverState,
        sys: &LinearSystem,
        ctx: &GreedyContext,
        source: &mut IndexSource,
    ) -> Result<StepOutcome, SolveError> {
        grk_step(state, sys, ctx, source)
    }
}

impl Solver for InertialKaczmarz {
    fn name(&self) -> &'static str {
        "mirk"
    }
    fn is_greedy(&self) -> bool {
        false
    }
    fn is_inertial(&self) -> bool {
        true
    }
    fn step(
        &self,
        state: &mut SolverState,
        sys: &LinearSystem,
        _ctx: &GreedyContext,
        source: &mut IndexSource,
    ) -> Result<StepOutcome, SolveError> {
        mirk_step(state, sys, source)
    }
}

impl Solver for GreedyInertialKaczmarz {
    fn name(&self) -> &'static str {
        "gmirk"
    }
    fn is_greedy(&self) -> bool {
        true
    }
    fn is_inertial(&self) -> bool {
        true
    }
    fn step(
        &self,
        state: &mut SolverState,
        sys: &LinearSystem,
        ctx: &GreedyContext,
        source: &mut IndexSource,
    ) -> Result<StepOutcome, SolveError> {
        gmirk_step(state, sys, ctx, source)
    }
}

impl Solver for ObliqueKaczmarz {
    fn name(&self) -> &'static str {
        "oblique"
    }
    fn is_greedy(&self) -> bool {
        true
    }
    fn is_inertial(&self) -> bool {
        true
    }
    fn step(
        &self,
        state: &mut SolverState,
        sys: &LinearSystem,
        ctx: &GreedyContext,
        source: &mut IndexSource,
    ) -> Result<StepOutcome, SolveError> {
        oblique_step(state, sys, ctx, source)
    }
}

/// Name-keyed collection of solvers.
#[derive(Debug, Clone, Default)]
pub struct SolverRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Solver>>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// rk, grk, mirk, gmirk and oblique.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(RandomizedKaczmarz));
        reg.register(Arc::new(GreedyRandomizedKaczmarz));
        reg.register(Arc::new(InertialKaczmarz));
        reg.register(Arc::new(GreedyInertialKaczmarz));
        reg.register(Arc::new(ObliqueKaczmarz));
        reg
    }

    /// Adds or replaces the solver registered under `solver.name()`.
    pub fn register(&mut self, solver: Arc<dyn Solver>) -> Option<Arc<dyn Solver>> {
        self.entries.insert(solver.name(), solver)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Solver>, SolveError> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| SolveError::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }
}

/// The process-wide registry of built-in solvers.
pub fn builtin_registry() -> &'static SolverRegistry {
    static REGISTRY: OnceLock<SolverRegistry> = OnceLock::new();
    REGISTRY.get_or_init(SolverRegistry::with_builtins)
}

/// Looks a built-in solver up by name.
pub fn solver_by_name(name: &str) -> Result<Arc<dyn Solver>, SolveError> {
    builtin_registry().get(name)
}
