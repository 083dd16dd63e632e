//! Single-iteration updates shared by the registered solvers.

use log::debug;

use super::{SolveError, SolverState, StepOutcome};
use crate::linalg::{LinearSystem, RowView};
use crate::selection::{
    greedy_select, scan_residual, GreedyContext, IndexSource, SelectionError, SelectionRecord,
};

/// Relative guard on `‖a_i‖²‖a_j‖² - <a_i, a_j>²` and on `det` of the 2x2 Gram matrix.
pub const NEAR_PARALLEL_TOL: f64 = 1e-12;

/// Selection record for samplers that do not threshold: every row is eligible.
fn unfiltered_selection(
    state: &SolverState,
    sys: &LinearSystem,
    source: &mut IndexSource,
    draw: impl FnOnce(&mut IndexSource) -> usize,
) -> Result<SelectionRecord, SolveError> {
    let scan = scan_residual(&state.r, sys.row_sq_norms());
    if scan.res_norm_sq <= crate::selection::RESIDUAL_UNDERFLOW {
        return Err(SelectionError::ConvergedResidual(scan.res_norm_sq).into());
    }
    let chosen_index = source.next_forced().unwrap_or_else(|| draw(source));
    Ok(SelectionRecord {
        epsilon_k: 0.0,
        index_set_size: sys.rows(),
        chosen_index,
        gamma_used: sys.frob_sq(),
        max_ratio: scan.max_ratio,
        res_norm_sq: scan.res_norm_sq,
    })
}

fn greedy_selection(
    state: &mut SolverState,
    sys: &LinearSystem,
    gamma: f64,
    ctx: &GreedyContext,
    source: &mut IndexSource,
) -> Result<SelectionRecord, SolveError> {
    let mut scratch = std::mem::take(&mut state.scratch);
    let rec = greedy_select(
        &state.r,
        sys.row_sq_norms(),
        gamma,
        ctx.rule,
        source,
        &mut scratch,
    );
    state.scratch = scratch;
    Ok(rec?)
}

/// `x += c_prev a_prev + c_cur a_cur`, with the matching residual update.
/// Returns the step length.
fn apply_update(
    state: &mut SolverState,
    sys: &LinearSystem,
    cur: usize,
    c_cur: f64,
    prev: Option<(usize, f64)>,
) -> f64 {
    sys.row(cur).axpy(c_cur, &mut state.x);
    sys.add_scaled_row_product(cur, c_cur, &mut state.r);
    let norms = sys.row_sq_norms();
    let mut len_sq = c_cur * c_cur * norms[cur];
    if let Some((p, c_prev)) = prev {
        sys.row(p).axpy(c_prev, &mut state.x);
        sys.add_scaled_row_product(p, c_prev, &mut state.r);
        len_sq += c_prev * c_prev * norms[p] + 2.0 * c_prev * c_cur * sys.row_dot(cur, p);
        state.r[p] = 0.0;
    }
    state.r[cur] = 0.0;
    len_sq.max(0.0).sqrt()
}

/// Orthogonal projection of `x` onto `H_i`.
fn project(state: &mut SolverState, sys: &LinearSystem, i: usize) -> f64 {
    let tau = state.r[i] / sys.row_sq_norms()[i];
    apply_update(state, sys, i, -tau, None)
}

fn finish(
    state: &mut SolverState,
    selection: SelectionRecord,
    beta_k: f64,
    step_norm: f64,
    fallback: bool,
) -> StepOutcome {
    state.prev_index = Some(selection.chosen_index);
    state.k += 1;
    StepOutcome {
        selection,
        beta_k,
        step_norm,
        inertial_fallback: fallback,
    }
}

/// Randomized Kaczmarz: row sampled with probability `‖a_i‖² / ‖A‖_F²`,
/// then projected onto.
pub fn rk_step(
    state: &mut SolverState,
    sys: &LinearSystem,
    source: &mut IndexSource,
) -> Result<StepOutcome, SolveError> {
    let sel = unfiltered_selection(state, sys, source, |s| sys.sample_row_by_norm(s.rng()))?;
    let len = project(state, sys, sel.chosen_index);
    Ok(finish(state, sel, 0.0, len, false))
}

/// Greedy randomized Kaczmarz with threshold `Γ = ‖A‖_F²` at every step.
pub fn grk_step(
    state: &mut SolverState,
    sys: &LinearSystem,
    ctx: &GreedyContext,
    source: &mut IndexSource,
) -> Result<StepOutcome, SolveError> {
    let sel = greedy_selection(state, sys, ctx.frob_sq, ctx, source)?;
    let len = project(state, sys, sel.chosen_index);
    Ok(finish(state, sel, 0.0, len, false))
}

/// `β = <a_cur, a_prev> r_cur / (‖a_cur‖²‖a_prev‖² - <a_cur, a_prev>²)`.
pub fn gmirk_beta(a_cur: RowView<'_>, a_prev: RowView<'_>, r_cur: f64) -> Result<f64, SolveError> {
    beta_from_parts(
        a_cur.norm_sq(),
        a_prev.norm_sq(),
        a_cur.dot_row(&a_prev),
        r_cur,
    )
    .ok_or(SolveError::NearParallelRows)
}

fn beta_from_parts(n_cur: f64, n_prev: f64, g: f64, r_cur: f64) -> Option<f64> {
    let scale = n_cur * n_prev;
    let denom = scale - g * g;
    (denom > NEAR_PARALLEL_TOL * scale).then(|| g * r_cur / denom)
}

/// Inertial update from `x` using `cur` and the previous working row.
/// Falls back to a plain projection (β = 0) when the rows are near parallel.
fn inertial_update(
    state: &mut SolverState,
    sys: &LinearSystem,
    cur: usize,
    prev: usize,
) -> (f64, f64, bool) {
    let norms = sys.row_sq_norms();
    let g = sys.row_dot(cur, prev);
    let r_cur = state.r[cur];
    match beta_from_parts(norms[cur], norms[prev], g, r_cur) {
        Some(beta) => {
            // τ = (a_curᵀw - b_cur)/‖a_cur‖² with w = x + β a_prev
            let tau = (r_cur + beta * g) / norms[cur];
            let len = apply_update(state, sys, cur, -tau, Some((prev, beta)));
            (beta, len, false)
        }
        None => {
            debug!(
                "rows {cur} and {prev} near parallel at k = {}; taking β = 0",
                state.k
            );
            (0.0, project(state, sys, cur), true)
        }
    }
}

/// One step of the greedy multi-step inertial method.
///
/// `k = 0` is a plain greedy projection with `Γ_0 = ‖A‖_F²`. For `k >= 1`
/// the threshold uses `Γ_k`, and the update moves along the previous working
/// row before projecting, landing on `H_{i_k} ∩ H_{i_{k-1}}`.
pub fn gmirk_step(
    state: &mut SolverState,
    sys: &LinearSystem,
    ctx: &GreedyContext,
    source: &mut IndexSource,
) -> Result<StepOutcome, SolveError> {
    let gamma = ctx.gamma_k(state.k);
    let sel = greedy_selection(state, sys, gamma, ctx, source)?;
    let cur = sel.chosen_index;
    let (beta, len, fallback) = match state.prev_index.filter(|_| state.k > 0) {
        None => (0.0, project(state, sys, cur), false),
        Some(prev) => inertial_update(state, sys, cur, prev),
    };
    Ok(finish(state, sel, beta, len, fallback))
}

/// Multi-step inertial RK: norm-proportional sampling (no greedy filter)
/// with the same inertial update. A draw equal to the previous row is
/// redrawn once.
pub fn mirk_step(
    state: &mut SolverState,
    sys: &LinearSystem,
    source: &mut IndexSource,
) -> Result<StepOutcome, SolveError> {
    let prev = state.prev_index.filter(|_| state.k > 0);
    let sel = unfiltered_selection(state, sys, source, |s| {
        let i = sys.sample_row_by_norm(s.rng());
        if Some(i) == prev {
            sys.sample_row_by_norm(s.rng())
        } else {
            i
        }
    })?;
    let cur = sel.chosen_index;
    let (beta, len, fallback) = match prev {
        None => (0.0, project(state, sys, cur), false),
        Some(prev) => inertial_update(state, sys, cur, prev),
    };
    Ok(finish(state, sel, beta, len, fallback))
}

/// Greedy selection followed by an oblique projection onto `H_{i_k}` along
/// `d = a_{i_k} - (<a_{i_k}, a_{i_{k-1}}> / ‖a_{i_k-1}‖²) a_{i_{k-1}}`.
///
/// The reported `beta_k` is the resulting coefficient on `a_{i_{k-1}}`.
pub fn oblique_step(
    state: &mut SolverState,
    sys: &LinearSystem,
    ctx: &GreedyContext,
    source: &mut IndexSource,
) -> Result<StepOutcome, SolveError> {
    let gamma = ctx.gamma_k(state.k);
    let sel = greedy_selection(state, sys, gamma, ctx, source)?;
    let cur = sel.chosen_index;
    let Some(prev) = state.prev_index.filter(|_| state.k > 0) else {
        let len = project(state, sys, cur);
        return Ok(finish(state, sel, 0.0, len, false));
    };
    let norms = sys.row_sq_norms();
    let g = sys.row_dot(cur, prev);
    let shift = g / norms[prev];
    // <a_cur, d> = ‖d‖² since d ⟂ a_prev
    let d_norm_sq = norms[cur] - g * shift;
    if d_norm_sq <= NEAR_PARALLEL_TOL * (norms[cur] * d_norm_sq.max(0.0)).sqrt() {
        debug!("oblique direction degenerate for rows {cur}, {prev}; projecting orthogonally");
        let len = project(state, sys, cur);
        return Ok(finish(state, sel, 0.0, len, true));
    }
    let eta = -state.r[cur] / d_norm_sq;
    let c_prev = -eta * shift;
    let len = apply_update(state, sys, cur, eta, Some((prev, c_prev)));
    Ok(finish(state, sel, c_prev, len, false))
}

/// Least-norm correction onto `H_i ∩ H_j`: `argmin ‖z - x‖` subject to
/// `a_iᵀz = b_i` and `a_jᵀz = b_j`, via the 2x2 Gram system.
///
/// Residuals are recomputed from `x`, so this is independent of any
/// solver-maintained state.
pub fn sketch2_project(
    x: &[f64],
    sys: &LinearSystem,
    i: usize,
    j: usize,
) -> Result<Vec<f64>, SolveError> {
    let (ai, aj) = (sys.row(i), sys.row(j));
    let (nii, njj, nij) = (ai.norm_sq(), aj.norm_sq(), ai.dot_row(&aj));
    let det = nii * njj - nij * nij;
    if i == j || det <= NEAR_PARALLEL_TOL * nii * njj {
        return Err(SolveError::NearParallelRows);
    }
    let b = sys.rhs();
    let ci = b[i] - ai.dot(x);
    let cj = b[j] - aj.dot(x);
    let li = (njj * ci - nij * cj) / det;
    let lj = (nii * cj - nij * ci) / det;
    let mut z = x.to_vec();
    ai.axpy(li, &mut z);
    aj.axpy(lj, &mut z);
    Ok(z)
}

/// `x - (r_i/‖a_i‖²) a_i` computed from scratch; used by tests and the
/// verification path as a plain-projection reference.
pub fn orthogonal_projection(x: &[f64], sys: &LinearSystem, i: usize) -> Vec<f64> {
    let a = sys.row(i);
    let tau = (a.dot(x) - sys.rhs()[i]) / sys.row_sq_norms()[i];
    let mut z = x.to_vec();
    a.axpy(-tau, &mut z);
    z
}
