//! Seeded sweeps over synthetic or file-based problems, and certification
//! runs that check a greedy inertial trace against its convergence factors.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::mpsc;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::{generate_synthetic, load_matrix_market, IoError, ProblemBundle, SyntheticSpec};
use crate::linalg::{CoherenceSummary, LinalgError, LinearSystem, SpectralSummary};
use crate::selection::ProbabilityRule;
use crate::solvers::{run, solver_by_name, RunConfig, SolveError, StoppingRule};
use crate::theory::{
    certificate, check_epsilon_tightening, check_error_bound, check_max_ratio,
    check_monotone_error, check_range_membership, check_working_row_residuals, CheckReport,
    CheckStatus, ConvergenceCertificate, BOUND_SLACK,
};

/// Environment variable bounding the worker pool.
pub const THREADS_ENV: &str = "KACZ_THREADS";

pub const BENCH_CSV_HEADER: &str = "variant,axis_value,t,mean_iters,mean_cpu,trials,failures";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchAxis {
    /// Sweep `m` with `n = other_dim`.
    Rows,
    /// Sweep `n` with `m = other_dim`.
    Cols,
    /// Run every file in `matrices`.
    Fixed,
}

impl std::str::FromStr for BenchAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rows" => Ok(Self::Rows),
            "cols" => Ok(Self::Cols),
            "fixed" => Ok(Self::Fixed),
            other => Err(format!(
                "unknown axis {other:?}; expected rows, cols or fixed"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPlan {
    pub axis: BenchAxis,
    pub sizes: Vec<usize>,
    /// The dimension held fixed by a rows or cols sweep.
    pub other_dim: usize,
    pub t_values: Vec<f64>,
    pub matrices: Vec<PathBuf>,
    pub variants: Vec<String>,
    pub trials: usize,
    pub base_seed: u64,
    pub rse_tol: f64,
    pub max_iters: usize,
    pub rule: ProbabilityRule,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self {
            axis: BenchAxis::Rows,
            sizes: vec![200, 400, 600, 800, 1000],
            other_dim: 100,
            t_values: vec![0.1, 0.5, 0.9],
            matrices: Vec::new(),
            variants: vec!["grk".into(), "gmirk".into()],
            trials: 20,
            base_seed: 0,
            rse_tol: 1e-12,
            max_iters: 1_000_000,
            rule: ProbabilityRule::ResidualWeighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum CellProblem {
    Synthetic { m: usize, n: usize, t: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
struct Cell {
    axis_value: String,
    t: Option<f64>,
    problem: CellProblem,
}

impl BenchPlan {
    pub fn validate(&self) -> Result<(), String> {
        if self.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        if self.variants.is_empty() {
            return Err("no variants given".into());
        }
        for v in &self.variants {
            solver_by_name(v).map_err(|e| e.to_string())?;
        }
        match self.axis {
            BenchAxis::Fixed if self.matrices.is_empty() => {
                return Err("a fixed plan needs at least one matrix".into())
            }
            BenchAxis::Fixed => {}
            _ => {
                if self.sizes.is_empty() || self.t_values.is_empty() {
                    return Err("a sweep needs sizes and t values".into());
                }
                if self.sizes.contains(&0) || self.other_dim == 0 {
                    return Err("dimensions must be positive".into());
                }
                if let Some(t) = self.t_values.iter().find(|t| !(0.0..1.0).contains(*t)) {
                    return Err(format!("t must lie in [0, 1), got {t}"));
                }
            }
        }
        if !(self.rse_tol > 0.0) || self.max_iters == 0 {
            return Err("rse_tol and max_iters must be positive".into());
        }
        Ok(())
    }

    fn cells(&self) -> Vec<Cell> {
        match self.axis {
            BenchAxis::Fixed => self
                .matrices
                .iter()
                .map(|p| Cell {
                    axis_value: p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| p.display().to_string()),
                    t: None,
                    problem: CellProblem::File(p.clone()),
                })
                .collect(),
            axis => self
                .t_values
                .iter()
                .flat_map(|&t| {
                    self.sizes.iter().map(move |&s| {
                        let (m, n) = match axis {
                            BenchAxis::Rows => (s, self.other_dim),
                            _ => (self.other_dim, s),
                        };
                        Cell {
                            axis_value: s.to_string(),
                            t: Some(t),
                            problem: CellProblem::Synthetic { m, n, t },
                        }
                    })
                })
                .collect(),
        }
    }
}

/// Averages for one `(variant, axis value, t)` cell over successful trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub variant: String,
    pub axis_value: String,
    pub t: Option<f64>,
    pub mean_iters: Option<f64>,
    pub mean_cpu: Option<f64>,
    pub trials: usize,
    pub failures: usize,
}

/// One solver run inside a sweep. `iters` is the number of steps taken,
/// which equals `max_iters` for a run that hit the cap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRun {
    pub variant: String,
    pub axis_value: String,
    pub t: Option<f64>,
    pub trial: usize,
    pub iters: usize,
    pub cpu_seconds: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub runs: Vec<TrialRun>,
}

impl BenchResult {
    pub fn get(&self, variant: &str, axis_value: &str, t: Option<f64>) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.axis_value == axis_value && r.t == t)
    }

    /// Mean step count over all trials of a cell, counting capped runs at
    /// the cap. For runs that hit the cap this is a lower bound on the true
    /// mean. `None` if the cell has no runs.
    pub fn censored_mean_iters(
        &self,
        variant: &str,
        axis_value: &str,
        t: Option<f64>,
    ) -> Option<f64> {
        let iters: Vec<usize> = self
            .runs
            .iter()
            .filter(|r| r.variant == variant && r.axis_value == axis_value && r.t == t)
            .map(|r| r.iters)
            .collect();
        (!iters.is_empty()).then(|| iters.iter().sum::<usize>() as f64 / iters.len() as f64)
    }

    /// Absent means are written as empty fields.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        writeln!(w, "{BENCH_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.variant,
                r.axis_value,
                opt(r.t),
                opt(r.mean_iters),
                opt(r.mean_cpu),
                r.trials,
                r.failures
            )?;
        }
        Ok(())
    }
}

/// Solver seed for a trial; kept apart from the problem seed so the index
/// stream does not reuse the generator that drew the matrix.
pub fn solver_seed(problem_seed: u64) -> u64 {
    problem_seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Runs `f` on a pool sized by `KACZ_THREADS` when set, else rayon's default.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                warn!("could not build a {n}-thread pool ({e}); using the global pool");
                f()
            }
        },
        None => f(),
    }
}

/// Projection of the origin onto the solution set. Uses the planted solution
/// directly when the system has full column rank.
pub fn reference_solution(bundle: &ProblemBundle) -> Result<Vec<f64>, LinalgError> {
    let n = bundle.sys.cols();
    let summary = SpectralSummary::compute(&bundle.sys, &vec![0.0; n])?;
    if summary.rank == n && bundle.x_star_gen.len() == n {
        Ok(bundle.x_star_gen.clone())
    } else {
        Ok(summary.x_star)
    }
}

struct TrialResult {
    cell: usize,
    trial: usize,
    variant: usize,
    iters: usize,
    cpu_seconds: f64,
    converged: bool,
}

/// Runs every `(cell, trial)` pair on the pool; trial `j` uses problem seed
/// `base_seed + j` and all variants in a trial share that problem.
pub fn run_bench(plan: &BenchPlan) -> Result<BenchResult, String> {
    plan.validate()?;
    let cells = plan.cells();
    let solvers: Vec<_> = plan
        .variants
        .iter()
        .map(|v| solver_by_name(v).expect("validated"))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..plan.trials).map(move |j| (c, j)))
        .collect();

    let (tx, rx) = mpsc::channel::<TrialResult>();
    with_pool(|| {
        jobs.par_iter().for_each_with(tx, |tx, &(c, j)| {
            let seed = plan.base_seed.wrapping_add(j as u64);
            let problem = build_problem(&cells[c].problem, seed).and_then(|b| {
                let xs = reference_solution(&b).map_err(|e| e.to_string())?;
                Ok((b, xs))
            });
            for (v, solver) in solvers.iter().enumerate() {
                let (iters, cpu_seconds, converged) = match &problem {
                    Ok((bundle, x_star)) => {
                        let config = RunConfig {
                            max_iters: plan.max_iters,
                            rse_tol: plan.rse_tol,
                            seed: solver_seed(seed),
                            rule: plan.rule,
                            stopping: StoppingRule::Rse,
                            ..RunConfig::default()
                        };
                        match run(&bundle.sys, solver.as_ref(), &config, Some(x_star)) {
                            Ok(out) => (out.iterations(), out.cpu_seconds, true),
                            Err(SolveError::MaxItersExceeded(out)) => {
                                (out.iterations(), out.cpu_seconds, false)
                            }
                            Err(e) => {
                                debug!("{} cell {c} trial {j}: {e}", solver.name());
                                (0, 0.0, false)
                            }
                        }
                    }
                    Err(e) => {
                        debug!("cell {c} trial {j}: {e}");
                        (0, 0.0, false)
                    }
                };
                // the receiver outlives the pool, so send cannot fail
                let _ = tx.send(TrialResult {
                    cell: c,
                    trial: j,
                    variant: v,
                    iters,
                    cpu_seconds,
                    converged,
                });
            }
        });
    });

    let mut results: Vec<TrialResult> = rx.into_iter().collect();
    results.sort_by_key(|r| (r.variant, r.cell, r.trial));
    let mut acc: BTreeMap<(usize, usize), (usize, f64, f64, usize)> = BTreeMap::new();
    for res in &results {
        let e = acc.entry((res.cell, res.variant)).or_default();
        if res.converged {
            e.0 += 1;
            e.1 += res.iters as f64;
            e.2 += res.cpu_seconds;
        } else {
            e.3 += 1;
        }
    }
    let runs = results
        .iter()
        .map(|r| TrialRun {
            variant: plan.variants[r.variant].clone(),
            axis_value: cells[r.cell].axis_value.clone(),
            t: cells[r.cell].t,
            trial: r.trial,
            iters: r.iters,
            cpu_seconds: r.cpu_seconds,
            converged: r.converged,
        })
        .collect();
    let mut rows = Vec::new();
    for (v, name) in plan.variants.iter().enumerate() {
        for (c, cell) in cells.iter().enumerate() {
            let (ok, iters, cpu, failures) = acc.get(&(c, v)).copied().unwrap_or_default();
            rows.push(BenchRow {
                variant: name.clone(),
                axis_value: cell.axis_value.clone(),
                t: cell.t,
                mean_iters: (ok > 0).then(|| iters / ok as f64),
                mean_cpu: (ok > 0).then(|| cpu / ok as f64),
                trials: plan.trials,
                failures,
            });
        }
    }
    Ok(BenchResult { rows, runs })
}

fn build_problem(problem: &CellProblem, seed: u64) -> Result<ProblemBundle, String> {
    let bundle = match problem {
        CellProblem::Synthetic { m, n, t } => {
            SyntheticSpec::new(*m, *n, *t, seed).and_then(|spec| generate_synthetic(&spec))
        }
        CellProblem::File(path) => load_matrix_market(path, None, seed),
    };
    bundle.map_err(|e: IoError| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    pub rule: ProbabilityRule,
    pub rse_tol: f64,
    pub max_iters: usize,
    /// Overwrite the first recorded error with the initial one, which the
    /// bound must reject whenever `ρ0 < 1`.
    pub inject_corruption: bool,
    /// Row cap for the pairwise coherence scan.
    pub delta_row_cap: Option<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            rule: ProbabilityRule::ResidualWeighted,
            rse_tol: 1e-12,
            max_iters: 100_000,
            inject_corruption: false,
            delta_row_cap: Some(crate::linalg::DEFAULT_DELTA_ROW_CAP),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub variant: String,
    pub iters: usize,
    pub converged: bool,
    pub bound: CheckStatus,
    pub lemma1: CheckStatus,
    pub lemma2: CheckStatus,
    pub epsilon: CheckStatus,
    pub monotone: CheckStatus,
    pub range: CheckStatus,
    pub certificate: Option<ConvergenceCertificate>,
    /// Why no bound could be checked, when the certificate is vacuous.
    pub degenerate: Option<String>,
    pub coherence: CoherenceSummary,
    pub rank: usize,
    pub slack: f64,
    pub bound_worst_ratio: f64,
    pub max_refresh_drift: f64,
}

impl VerifyReport {
    /// No check failed. Skipped checks do not count as failures.
    pub fn all_passed(&self) -> bool {
        [
            &self.bound,
            &self.lemma1,
            &self.lemma2,
            &self.epsilon,
            &self.monotone,
            &self.range,
        ]
        .iter()
        .all(|s| !s.failed())
    }
}

/// Runs the greedy inertial solver from the origin with iterate retention and
/// checks the trace. A degenerate certificate is reported, not raised.
pub fn verify(sys: &LinearSystem, opts: &VerifyOptions) -> Result<VerifyReport, SolveError> {
    let n = sys.cols();
    let summary = SpectralSummary::compute(sys, &vec![0.0; n])?;
    let coherence = sys.coherence(opts.delta_row_cap)?;
    let (cert, degenerate) = match certificate(sys, &summary, &coherence) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let solver = solver_by_name("gmirk")?;
    let config = RunConfig {
        max_iters: opts.max_iters,
        rse_tol: opts.rse_tol,
        seed: opts.seed,
        rule: opts.rule,
        retain_iterates: true,
        ..RunConfig::default()
    };
    let (mut output, converged) = match run(sys, solver.as_ref(), &config, Some(&summary.x_star)) {
        Ok(out) => (out, true),
        Err(SolveError::MaxItersExceeded(out)) => (*out, false),
        Err(e) => return Err(e),
    };
    let trace = &mut output.trace;
    let err0 = trace.initial_err_sq.unwrap_or(0.0);
    if opts.inject_corruption {
        if let Some(first) = trace.records.first_mut() {
            first.err_sq = err0;
        }
    }

    let bound: CheckReport = match &cert {
        Some(c) => check_error_bound(trace, c, err0),
        None => CheckReport {
            status: CheckStatus::Skipped("degenerate certificate".into()),
            checked: 0,
            worst_ratio: 0.0,
        },
    };
    Ok(VerifyReport {
        variant: solver.name().to_string(),
        iters: trace.len(),
        converged,
        lemma1: check_working_row_residuals(trace, sys, true).status,
        lemma2: check_max_ratio(trace).status,
        epsilon: check_epsilon_tightening(trace, true).status,
        monotone: check_monotone_error(trace).status,
        range: check_range_membership(trace, &summary).status,
        bound: bound.status,
        bound_worst_ratio: bound.worst_ratio,
        certificate: cert,
        degenerate,
        coherence,
        rank: summary.rank,
        slack: BOUND_SLACK,
        max_refresh_drift: trace.max_refresh_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn example() -> LinearSystem {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        LinearSystem::build(a, vec![1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn verify_small_example() {
        let opts = VerifyOptions {
            rule: ProbabilityRule::DeterministicArgmax,
            ..VerifyOptions::default()
        };
        let report = verify(&example(), &opts).unwrap();
        assert_eq!(report.bound, CheckStatus::Pass);
        assert_eq!(report.lemma1, CheckStatus::Pass);
        assert_eq!(report.lemma2, CheckStatus::Pass);
        let c = report.certificate.unwrap();
        assert!((c.rho0 - 0.75).abs() < 1e-12);
        assert!((c.rho1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.rho2 - 0.5).abs() < 1e-12);
        assert!(report.all_passed());
    }

    #[test]
    fn corruption_is_caught_at_first_iterate() {
        let opts = VerifyOptions {
            inject_corruption: true,
            ..VerifyOptions::default()
        };
        let report = verify(&example(), &opts).unwrap();
        assert_eq!(report.bound, CheckStatus::Fail { k: 1 });
        assert!(!report.all_passed());
    }

    #[test]
    fn degenerate_certificate_is_reported() {
        let a = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let sys = LinearSystem::build(a, vec![1.0, 2.0, 3.0]).unwrap();
        let report = verify(&sys, &VerifyOptions::default()).unwrap();
        assert!(report.certificate.is_none());
        assert!(report.degenerate.is_some());
        assert!(matches!(report.bound, CheckStatus::Skipped(_)));
        assert!(report.all_passed());
    }

    #[test]
    fn bench_single_trial_and_failures() {
        let plan = BenchPlan {
            sizes: vec![30],
            other_dim: 10,
            t_values: vec![0.5],
            trials: 1,
            base_seed: 5,
            ..BenchPlan::default()
        };
        let result = run_bench(&plan).unwrap();
        assert_eq!(result.rows.len(), 2);

        // trials = 1: the mean is the single run
        let bundle = generate_synthetic(&SyntheticSpec::new(30, 10, 0.5, 5).unwrap()).unwrap();
        let xs = reference_solution(&bundle).unwrap();
        let config = RunConfig {
            seed: solver_seed(5),
            ..RunConfig::default()
        };
        let single = run(
            &bundle.sys,
            solver_by_name("gmirk").unwrap().as_ref(),
            &config,
            Some(&xs),
        )
        .unwrap();
        let row = result.get("gmirk", "30", Some(0.5)).unwrap();
        assert_eq!(row.mean_iters, Some(single.iterations() as f64));
        assert_eq!(row.failures, 0);

        let starved = BenchPlan {
            max_iters: 1,
            trials: 3,
            ..plan
        };
        let result = run_bench(&starved).unwrap();
        for row in &result.rows {
            assert_eq!(row.failures, 3);
            assert_eq!(row.mean_iters, None);
        }
        assert_eq!(result.runs.len(), 6);
        assert_eq!(
            result.censored_mean_iters("grk", "30", Some(0.5)),
            Some(1.0)
        );
        let mut csv = Vec::new();
        result.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().next(), Some(BENCH_CSV_HEADER));
        assert_eq!(text.lines().nth(1), Some("grk,30,0.5,,,3,3"));
    }

    #[test]
    fn bench_is_deterministic() {
        let plan = BenchPlan {
            sizes: vec![40, 60],
            other_dim: 10,
            t_values: vec![0.1, 0.9],
            trials: 3,
            base_seed: 77,
            ..BenchPlan::default()
        };
        let a = run_bench(&plan).unwrap();
        let b = run_bench(&plan).unwrap();
        let iters = |r: &BenchResult| r.rows.iter().map(|x| x.mean_iters).collect::<Vec<_>>();
        assert_eq!(iters(&a), iters(&b));
    }

    #[test]
    fn plan_validation() {
        assert!(BenchPlan {
            trials: 0,
            ..BenchPlan::default()
        }
        .validate()
        .is_err());
        assert!(BenchPlan {
            variants: vec!["nope".into()],
            ..BenchPlan::default()
        }
        .validate()
        .is_err());
        assert!(BenchPlan {
            axis: BenchAxis::Fixed,
            ..BenchPlan::default()
        }
        .validate()
        .is_err());
        assert!(BenchPlan {
            t_values: vec![1.0],
            ..BenchPlan::default()
        }
        .validate()
        .is_err());
        assert!(BenchPlan::default().validate().is_ok());
    }
}
