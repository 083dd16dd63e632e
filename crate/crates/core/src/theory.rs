//! Convergence factors of the greedy inertial iteration and post-hoc checks
//! of recorded traces against the deterministic error bound and the
//! residual identities.
//!
//! All checks are pure functions of a finished [`IterationTrace`]. They
//! return a [`CheckReport`] rather than an error so that a verification run
//! can report every outcome at once.

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::linalg::{dist_sq, norm_sq, CoherenceSummary, LinearSystem, SpectralSummary};
use crate::solvers::IterationTrace;

/// Relative slack on the contraction bound.
pub const BOUND_SLACK: f64 = 1e-9;
/// Tolerance on `a_iᵀx - b_i`, scaled by `max(‖a_i‖‖x‖, |b_i|, 1)`.
pub const WORKING_ROW_TOL: f64 = 1e-9;
/// Relative slack on `max_i |r_i|²/‖a_i‖² >= ‖r‖²/Γ_k` and `ε_k >= 1/Γ_k`.
pub const MAX_RATIO_SLACK: f64 = 1e-12;
/// Allowed null-space component of `x^k - x*`.
pub const RANGE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TheoryError {
    #[error(
        "bound is vacuous: (1 - δ²) γ2 = {scaled_gamma2:e} does not exceed σ²_min = {sigma_min_sq:e}"
    )]
    DegenerateBound {
        scaled_gamma2: f64,
        sigma_min_sq: f64,
    },
    #[error("σ²_min must be positive and δ below 1")]
    InvalidInput,
}

/// `ρ0 = 1 - σ²_min/‖A‖_F²`, `ρ1 = 1 - σ²_min/((1-δ²)γ1)`,
/// `ρ2 = 1 - σ²_min/((1-δ²)γ2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCertificate {
    pub rho0: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub sigma_min_sq: f64,
    pub frob_sq: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub delta: f64,
}

impl ConvergenceCertificate {
    /// Per-iteration factor of the plain greedy method:
    /// `1 - ½(‖A‖_F²/γ1 + 1) σ²_min/‖A‖_F²`.
    pub fn grk_factor(&self) -> f64 {
        grk_factor(self.sigma_min_sq, self.frob_sq, self.gamma1)
    }

    /// `ln` of the error bound factor after `k` iterations.
    pub fn log_factor(&self, k: usize) -> f64 {
        match k {
            0 => 0.0,
            1 => self.rho0.ln(),
            _ => (k - 2) as f64 * self.rho2.ln() + self.rho1.ln() + self.rho0.ln(),
        }
    }
}

pub fn grk_factor(sigma_min_sq: f64, frob_sq: f64, gamma1: f64) -> f64 {
    1.0 - 0.5 * (frob_sq / gamma1 + 1.0) * sigma_min_sq / frob_sq
}

pub fn certificate(
    sys: &LinearSystem,
    summary: &SpectralSummary,
    coherence: &CoherenceSummary,
) -> Result<ConvergenceCertificate, TheoryError> {
    certificate_from_parts(
        summary.sigma_min_sq,
        sys.frob_sq(),
        coherence.gamma1,
        coherence.gamma2,
        coherence.delta,
    )
}

pub fn certificate_from_parts(
    sigma_min_sq: f64,
    frob_sq: f64,
    gamma1: f64,
    gamma2: f64,
    delta: f64,
) -> Result<ConvergenceCertificate, TheoryError> {
    if !(sigma_min_sq > 0.0) || !(0.0..1.0).contains(&delta) {
        return Err(TheoryError::InvalidInput);
    }
    let coh = 1.0 - delta * delta;
    if coh * gamma2 <= sigma_min_sq {
        return Err(TheoryError::DegenerateBound {
            scaled_gamma2: coh * gamma2,
            sigma_min_sq,
        });
    }
    Ok(ConvergenceCertificate {
        rho0: 1.0 - sigma_min_sq / frob_sq,
        rho1: 1.0 - sigma_min_sq / (coh * gamma1),
        rho2: 1.0 - sigma_min_sq / (coh * gamma2),
        sigma_min_sq,
        frob_sq,
        gamma1,
        gamma2,
        delta,
    })
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    /// First offending iteration.
    Fail {
        k: usize,
    },
    Skipped(String),
}

impl CheckStatus {
    pub fn passed(&self) -> bool {
        matches!(self, CheckStatus::Pass)
    }

    pub fn failed(&self) -> bool {
        matches!(self, CheckStatus::Fail { .. })
    }
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckStatus::Pass => f.write_str("pass"),
            CheckStatus::Fail { k } => write!(f, "fail@{k}"),
            CheckStatus::Skipped(why) => write!(f, "skipped: {why}"),
        }
    }
}

impl Serialize for CheckStatus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Result of a trace check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub status: CheckStatus,
    /// Number of inequalities evaluated.
    pub checked: usize,
    /// Largest observed `lhs / rhs` (or `|residual| / tolerance`); < 1 is healthy.
    pub worst_ratio: f64,
}

impl CheckReport {
    fn skipped(why: &str) -> Self {
        Self {
            status: CheckStatus::Skipped(why.to_string()),
            checked: 0,
            worst_ratio: 0.0,
        }
    }
}

struct Tally {
    first_fail: Option<usize>,
    checked: usize,
    worst_ratio: f64,
}

impl Tally {
    fn new() -> Self {
        Self {
            first_fail: None,
            checked: 0,
            worst_ratio: 0.0,
        }
    }

    /// Records `lhs <= rhs` at iteration `k`.
    fn le(&mut self, k: usize, lhs: f64, rhs: f64) {
        self.checked += 1;
        let ok = lhs <= rhs;
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if ok {
            0.0
        } else {
            f64::INFINITY
        };
        self.worst_ratio = self.worst_ratio.max(ratio);
        if !ok && self.first_fail.is_none() {
            self.first_fail = Some(k);
        }
    }

    fn finish(self) -> CheckReport {
        CheckReport {
            status: match self.first_fail {
                Some(k) => CheckStatus::Fail { k },
                None => CheckStatus::Pass,
            },
            checked: self.checked,
            worst_ratio: self.worst_ratio,
        }
    }
}

/// `‖x^1 - x*‖² <= ρ0 e0` and `‖x^k - x*‖² <= ρ2^{k-2} ρ1 ρ0 e0` for `k >= 2`,
/// each with relative slack [`BOUND_SLACK`]. Products are formed in log space.
///
/// `k` in a failure is the iterate index (`x^k`).
pub fn check_error_bound(
    trace: &IterationTrace,
    cert: &ConvergenceCertificate,
    err0: f64,
) -> CheckReport {
    if trace.records.iter().any(|r| r.err_sq.is_nan()) {
        return CheckReport::skipped("trace has no reference errors");
    }
    let mut tally = Tally::new();
    for rec in &trace.records {
        let k = rec.k + 1;
        let bound = if err0 > 0.0 {
            (cert.log_factor(k) + err0.ln()).exp() * (1.0 + BOUND_SLACK)
        } else {
            0.0
        };
        tally.le(k, rec.err_sq, bound);
    }
    tally.finish()
}

/// `a_{i_{k-1}}ᵀx^k = b_{i_{k-1}}` for `k >= 1` and, after an inertial step,
/// `a_{i_{k-2}}ᵀx^k = b_{i_{k-2}}` for `k >= 2`.
///
/// Needs retained iterates and an inertial variant; otherwise skipped.
pub fn check_working_row_residuals(
    trace: &IterationTrace,
    sys: &LinearSystem,
    inertial: bool,
) -> CheckReport {
    if !inertial {
        return CheckReport::skipped("variant is not inertial");
    }
    let Some(iterates) = &trace.iterates else {
        return CheckReport::skipped("trace does not retain iterates");
    };
    let b = sys.rhs();
    let mut tally = Tally::new();
    let check_row = |tally: &mut Tally, k: usize, i: usize, x: &[f64]| {
        let a = sys.row(i);
        let res = (a.dot(x) - b[i]).abs();
        let scale = (sys.row_sq_norms()[i] * norm_sq(x))
            .sqrt()
            .max(b[i].abs())
            .max(1.0);
        tally.le(k, res, WORKING_ROW_TOL * scale);
    };
    for (k, x) in iterates.iter().enumerate().skip(1) {
        let Some(last) = trace.records.get(k - 1) else {
            break;
        };
        check_row(&mut tally, k, last.index, x);
        if k >= 2 && !last.fallback {
            check_row(&mut tally, k, trace.records[k - 2].index, x);
        }
    }
    tally.finish()
}

/// `max_i |r_i|²/‖a_i‖² >= ‖r‖²/Γ_k` at every recorded selection.
pub fn check_max_ratio(trace: &IterationTrace) -> CheckReport {
    let mut tally = Tally::new();
    for rec in &trace.records {
        let needed = rec.sel_res_norm_sq / rec.gamma * (1.0 - MAX_RATIO_SLACK);
        // lhs <= rhs form: needed <= max_ratio
        tally.le(rec.k, needed, rec.max_ratio);
    }
    tally.finish()
}

/// `ε_k >= 1/Γ_k`, and for `k >= 1` with `Γ_k < ‖A‖_F²`, `ε_k` strictly
/// exceeds the original threshold evaluated on the same residual.
pub fn check_epsilon_tightening(trace: &IterationTrace, greedy: bool) -> CheckReport {
    if !greedy {
        return CheckReport::skipped("variant does not threshold");
    }
    let mut tally = Tally::new();
    for rec in &trace.records {
        tally.le(rec.k, (1.0 - MAX_RATIO_SLACK) / rec.gamma, rec.epsilon);
        if rec.k >= 1 && rec.gamma < trace.frob_sq {
            let grk = 0.5 * (rec.max_ratio / rec.sel_res_norm_sq + 1.0 / trace.frob_sq);
            tally.checked += 1;
            if !(rec.epsilon > grk) && tally.first_fail.is_none() {
                tally.first_fail = Some(rec.k);
            }
        }
    }
    tally.finish()
}

/// `‖x^{k+1} - x*‖ <= ‖x^k - x*‖` at every step (relative slack [`BOUND_SLACK`]).
pub fn check_monotone_error(trace: &IterationTrace) -> CheckReport {
    let Some(mut prev) = trace.initial_err_sq else {
        return CheckReport::skipped("trace has no reference errors");
    };
    let mut tally = Tally::new();
    for rec in &trace.records {
        tally.le(rec.k + 1, rec.err_sq, prev * (1.0 + BOUND_SLACK));
        prev = rec.err_sq;
    }
    tally.finish()
}

/// `x^k - x*` has no component outside `Range(Aᵀ)` (up to [`RANGE_TOL`],
/// relative to `max(1, ‖x*‖)`).
pub fn check_range_membership(trace: &IterationTrace, summary: &SpectralSummary) -> CheckReport {
    let Some(iterates) = &trace.iterates else {
        return CheckReport::skipped("trace does not retain iterates");
    };
    let scale = norm_sq(&summary.x_star).sqrt().max(1.0);
    let mut tally = Tally::new();
    for (k, x) in iterates.iter().enumerate() {
        let diff: Vec<f64> = x.iter().zip(&summary.x_star).map(|(a, b)| a - b).collect();
        tally.le(
            k,
            summary.null_space_component_norm(&diff),
            RANGE_TOL * scale,
        );
    }
    tally.finish()
}

/// Recomputes `‖x^k - x*‖²` from retained iterates; used to cross-check the
/// errors recorded during the run.
pub fn recompute_errors(trace: &IterationTrace, x_star: &[f64]) -> Option<Vec<f64>> {
    trace
        .iterates
        .as_ref()
        .map(|its| its.iter().map(|x| dist_sq(x, x_star)).collect())
}
