use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{SolveError, Solver, SolverState};
use crate::linalg::{dist_sq, norm_sq, LinearSystem};
use crate::selection::{GreedyContext, IndexSource, ProbabilityRule};

/// When a run counts as converged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoppingRule {
    /// `‖x - x*‖² / ‖x*‖² <= tol`; needs the reference solution.
    #[default]
    Rse,
    /// `‖Ax - b‖² / ‖b‖² <= tol`.
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_iters: usize,
    pub rse_tol: f64,
    pub seed: u64,
    pub rule: ProbabilityRule,
    pub residual_refresh_period: usize,
    pub stopping: StoppingRule,
    /// Keep every iterate (memory `k * n`); needed by the working-row residual check.
    pub retain_iterates: bool,
    /// Replaces sampling for the first `len()` iterations.
    pub forced_indices: Option<Vec<usize>>,
    /// Starting point; zeros when absent.
    pub x0: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_iters: 1_000_000,
            rse_tol: 1e-12,
            seed: 0,
            rule: ProbabilityRule::ResidualWeighted,
            residual_refresh_period: 50,
            stopping: StoppingRule::Rse,
            retain_iterates: false,
            forced_indices: None,
            x0: None,
        }
    }
}

/// One row per iteration `k`: what was selected at `x^k` and where the step
/// landed (`x^{k+1}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub index: usize,
    pub epsilon: f64,
    pub iset_size: usize,
    pub beta: f64,
    /// RSE of `x^{k+1}`; NaN without a reference solution.
    pub rse: f64,
    /// `‖A x^{k+1} - b‖²`.
    pub res_norm_sq: f64,
    /// `‖A x^k - b‖²` as seen by the selection.
    pub sel_res_norm_sq: f64,
    /// `max_i |r_i|² / ‖a_i‖²` at `x^k`.
    pub max_ratio: f64,
    /// Threshold schedule value `Γ_k` used at this step.
    pub gamma: f64,
    /// `‖x^{k+1} - x*‖²`; NaN without a reference solution.
    pub err_sq: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub variant: String,
    pub rule: ProbabilityRule,
    pub seed: u64,
    pub frob_sq: f64,
    pub records: Vec<TraceRecord>,
    /// `x^0, x^1, ...` when retention was requested.
    pub iterates: Option<Vec<Vec<f64>>>,
    /// `‖x^0 - x*‖²`, when a reference solution was given.
    pub initial_err_sq: Option<f64>,
    /// Largest `‖r_maintained - r_fresh‖₂ / max(1, ‖b‖₂)` seen at a refresh.
    pub max_refresh_drift: f64,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.index).collect()
    }

    pub fn final_rse(&self) -> Option<f64> {
        self.records.last().map(|r| r.rse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub trace: IterationTrace,
    pub x: Vec<f64>,
    pub converged: bool,
    /// Wall-clock seconds spent in the iteration loop.
    pub cpu_seconds: f64,
}

impl RunOutput {
    pub fn iterations(&self) -> usize {
        self.trace.records.len()
    }
}

/// Iterates `solver` until the stopping rule holds or `max_iters` is reached.
///
/// `x_star` must be the projection of the starting point onto the solution
/// set; it is required for [`StoppingRule::Rse`].
pub fn run(
    sys: &LinearSystem,
    solver: &dyn Solver,
    config: &RunConfig,
    x_star: Option<&[f64]>,
) -> Result<RunOutput, SolveError> {
    if config.max_iters == 0 {
        return Err(SolveError::InvalidConfig(
            "max_iters must be at least 1".into(),
        ));
    }
    if !(config.rse_tol > 0.0) {
        return Err(SolveError::InvalidConfig("rse_tol must be positive".into()));
    }
    if config.residual_refresh_period == 0 {
        return Err(SolveError::InvalidConfig(
            "residual_refresh_period must be at least 1".into(),
        ));
    }
    if config.stopping == StoppingRule::Rse && x_star.is_none() {
        return Err(SolveError::InvalidConfig(
            "RSE stopping needs a reference solution".into(),
        ));
    }
    let n = sys.cols();
    if let Some(xs) = x_star {
        if xs.len() != n {
            return Err(SolveError::InvalidConfig(format!(
                "reference solution has length {}, expected {n}",
                xs.len()
            )));
        }
    }
    let x0 = config.x0.clone().unwrap_or_else(|| vec![0.0; n]);
    let mut state = SolverState::new(sys, x0)?;
    let ctx = GreedyContext::new(sys, config.rule);
    let mut source = IndexSource::seeded(config.seed);
    if let Some(seq) = &config.forced_indices {
        if let Some(&i) = seq.iter().find(|&&i| i >= sys.rows()) {
            return Err(SolveError::InvalidConfig(format!(
                "forced index {i} out of range"
            )));
        }
        source = source.with_forced(seq.iter().copied());
    }

    let x_star_norm_sq = x_star.map(norm_sq);
    let b_norm_sq = norm_sq(sys.rhs());
    let b_scale = b_norm_sq.sqrt().max(1.0);
    let rel_err = |err_sq: f64| match x_star_norm_sq {
        Some(s) if s > 0.0 => err_sq / s,
        Some(_) => err_sq,
        None => f64::NAN,
    };
    let rel_res = |res_sq: f64| {
        if b_norm_sq > 0.0 {
            res_sq / b_norm_sq
        } else {
            res_sq
        }
    };
    let is_done = |rse: f64, res_sq: f64| match config.stopping {
        StoppingRule::Rse => rse <= config.rse_tol,
        StoppingRule::Residual => rel_res(res_sq) <= config.rse_tol,
    };

    let initial_err_sq = x_star.map(|xs| dist_sq(&state.x, xs));
    let mut trace = IterationTrace {
        variant: solver.name().to_string(),
        rule: config.rule,
        seed: config.seed,
        frob_sq: sys.frob_sq(),
        records: Vec::new(),
        iterates: config.retain_iterates.then(|| vec![state.x.clone()]),
        initial_err_sq,
        max_refresh_drift: 0.0,
    };

    let start = Instant::now();
    let mut converged = is_done(initial_err_sq.map_or(f64::NAN, rel_err), norm_sq(&state.r));
    while !converged && trace.records.len() < config.max_iters {
        let outcome = match solver.step(&mut state, sys, &ctx, &mut source) {
            Ok(o) => o,
            Err(e) if e.is_converged_residual() => {
                converged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        if state.k % config.residual_refresh_period == 0 {
            let drift = state.refresh_residual(sys) / b_scale;
            trace.max_refresh_drift = trace.max_refresh_drift.max(drift);
        }
        let err_sq = x_star.map_or(f64::NAN, |xs| dist_sq(&state.x, xs));
        let rse = rel_err(err_sq);
        let res_norm_sq = norm_sq(&state.r);
        let sel = outcome.selection;
        trace.records.push(TraceRecord {
            k: state.k - 1,
            index: sel.chosen_index,
            epsilon: sel.epsilon_k,
            iset_size: sel.index_set_size,
            beta: outcome.beta_k,
            rse,
            res_norm_sq,
            sel_res_norm_sq: sel.res_norm_sq,
            max_ratio: sel.max_ratio,
            gamma: sel.gamma_used,
            err_sq,
            fallback: outcome.inertial_fallback,
        });
        if let Some(iterates) = trace.iterates.as_mut() {
            iterates.push(state.x.clone());
        }
        converged = is_done(rse, res_norm_sq);
    }
    let output = RunOutput {
        trace,
        x: state.x,
        converged,
        cpu_seconds: start.elapsed().as_secs_f64(),
    };
    if converged {
        Ok(output)
    } else {
        Err(SolveError::MaxItersExceeded(Box::new(output)))
    }
}
