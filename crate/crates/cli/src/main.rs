//! `kacz`: solve a system, run a seeded sweep, or certify a greedy inertial
//! run against its convergence factors.
//!
//! Exit codes: 0 success, 1 input or I/O error, 2 iteration cap reached
//! (`solve`), 3 a certification check failed (`verify`).

mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use config::{FileConfig, OneOrMany};
use kacz_core::bench::{
    reference_solution, run_bench, solver_seed, verify, BenchAxis, BenchPlan, VerifyOptions,
};
use kacz_core::io::{
    generate_synthetic, load_matrix_market, write_json, write_summary_json, write_trace_csv,
    ProblemBundle, RunSummary, SyntheticSpec,
};
use kacz_core::solvers::{run, solver_by_name, RunConfig, SolveError, StoppingRule};
use kacz_core::ProbabilityRule;

const EXIT_INPUT: u8 = 1;
const EXIT_MAX_ITERS: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "kacz", version, about = "Greedy and inertial Kaczmarz solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one system and write `trace.csv` and `summary.json`.
    Solve(SolveArgs),
    /// Average iteration counts and timings over seeded trials.
    Bench(BenchArgs),
    /// Run the greedy inertial solver with full checking; prints a JSON report.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct RunFlags {
    /// TOML file with defaults for any of these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "rse-tol")]
    rse_tol: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Sampling rule inside the greedy index set: residual, uniform or argmax.
    #[arg(long)]
    rule: Option<ProbabilityRule>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProblemFlags {
    /// Synthetic problem as `m=..,n=..,t=..[,seed=..]`.
    #[arg(long, conflicts_with = "matrix")]
    synthetic: Option<String>,
    /// MatrixMarket coefficient matrix.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// MatrixMarket right-hand side; a solution is planted when absent.
    #[arg(long, requires = "matrix")]
    rhs: Option<PathBuf>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    variant: Option<String>,
    #[command(flatten)]
    problem: ProblemFlags,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    problem: ProblemFlags,
    #[command(flatten)]
    run: RunFlags,
    /// Corrupt the first recorded error so that the bound check must fail.
    #[arg(long)]
    inject_corruption: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// rows, cols or fixed.
    #[arg(long)]
    axis: Option<BenchAxis>,
    /// Comma-separated solver names.
    #[arg(long, value_delimiter = ',')]
    variant: Vec<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    rows: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    cols: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    t: Vec<f64>,
    /// MatrixMarket files for a fixed-matrix plan; repeatable.
    #[arg(long)]
    matrix: Vec<PathBuf>,
    #[command(flatten)]
    run: RunFlags,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn load_config(flags: &RunFlags) -> Result<FileConfig> {
    flags
        .config
        .as_deref()
        .map(FileConfig::load)
        .transpose()
        .map(Option::unwrap_or_default)
}

fn single<T: Clone>(v: Option<OneOrMany<T>>, key: &str) -> Result<Option<T>> {
    match v.map(OneOrMany::into_vec) {
        None => Ok(None),
        Some(v) if v.len() == 1 => Ok(Some(v[0].clone())),
        Some(_) => bail!("config key {key} takes a single value here"),
    }
}

fn resolve_rule(flags: &RunFlags, file: &FileConfig) -> Result<ProbabilityRule> {
    match (flags.rule, &file.rule) {
        (Some(r), _) => Ok(r),
        (None, Some(s)) => s.parse().map_err(|e| anyhow!("config rule: {e}")),
        (None, None) => Ok(ProbabilityRule::default()),
    }
}

/// Problem from flags, falling back to the config file. The problem seed is
/// `--seed` unless the synthetic spec names its own.
fn resolve_problem(p: &ProblemFlags, file: &FileConfig, seed: u64) -> Result<ProblemBundle> {
    let matrix = p.matrix.clone().or(single(file.matrix.clone(), "matrix")?);
    let synthetic = p.synthetic.clone().or(file.synthetic.clone());
    if let Some(path) = matrix.filter(|_| p.synthetic.is_none()) {
        let rhs = p.rhs.clone().or(file.rhs.clone());
        return load_matrix_market(&path, rhs.as_deref(), seed)
            .with_context(|| format!("loading {}", path.display()));
    }
    let spec = match synthetic {
        Some(s) => {
            let mut spec: SyntheticSpec = s.parse()?;
            if !s.contains("seed") {
                spec.seed = seed;
            }
            spec
        }
        None => {
            let rows = p.rows.or(single(file.rows.clone(), "rows")?);
            let cols = p.cols.or(single(file.cols.clone(), "cols")?);
            let t = p.t.or(single(file.t.clone(), "t")?);
            match (rows, cols, t) {
                (Some(m), Some(n), Some(t)) => SyntheticSpec::new(m, n, t, seed)?,
                _ => bail!("no problem given: use --matrix, --synthetic, or --rows/--cols/--t"),
            }
        }
    };
    Ok(generate_synthetic(&spec)?)
}

fn out_dir(flags: &RunFlags, file: &FileConfig) -> Result<Option<PathBuf>> {
    let dir = flags.out.clone().or(file.out.clone());
    if let Some(d) = &dir {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let file = load_config(&args.run)?;
    let seed = args.run.seed.or(file.seed).unwrap_or(0);
    let variant = args
        .variant
        .clone()
        .or(single(file.variant.clone(), "variant")?)
        .unwrap_or_else(|| "gmirk".into());
    let solver = solver_by_name(&variant)?;
    let bundle = resolve_problem(&args.problem, &file, seed)?;
    let dir = out_dir(&args.run, &file)?.unwrap_or_else(|| PathBuf::from("."));

    let reference = match reference_solution(&bundle) {
        Ok(x) => Some(x),
        Err(e) => {
            warn!("no reference solution ({e}); stopping on the relative residual");
            None
        }
    };
    let config = RunConfig {
        max_iters: args.run.max_iters.or(file.max_iters).unwrap_or(1_000_000),
        rse_tol: args.run.rse_tol.or(file.rse_tol).unwrap_or(1e-12),
        seed: solver_seed(seed),
        rule: resolve_rule(&args.run, &file)?,
        stopping: if reference.is_some() {
            StoppingRule::Rse
        } else {
            StoppingRule::Residual
        },
        ..RunConfig::default()
    };
    info!(
        "solving {}x{} with {variant}",
        bundle.sys.rows(),
        bundle.sys.cols()
    );
    let (output, code) = match run(&bundle.sys, solver.as_ref(), &config, reference.as_deref()) {
        Ok(out) => (out, ExitCode::SUCCESS),
        Err(SolveError::MaxItersExceeded(out)) => (*out, ExitCode::from(EXIT_MAX_ITERS)),
        Err(e) => return Err(e.into()),
    };

    let mut summary = RunSummary::from_output(&output);
    summary.seed = seed;
    let trace_path = dir.join("trace.csv");
    let summary_path = dir.join("summary.json");
    let mut w = create(&trace_path)?;
    write_trace_csv(&output.trace, &mut w)?;
    w.flush()?;
    let mut w = create(&summary_path)?;
    write_summary_json(&summary, &mut w)?;
    w.flush()?;

    let status = if output.converged {
        "converged"
    } else {
        "iteration cap reached"
    };
    eprintln!(
        "{variant}: {status} after {} iterations; wrote {} and {}",
        summary.iters,
        trace_path.display(),
        summary_path.display()
    );
    Ok(code)
}

/// A repeatable flag wins over the config entry when given at all.
fn list<T: Clone>(flag: &[T], cfg: Option<OneOrMany<T>>) -> Option<Vec<T>> {
    if flag.is_empty() {
        cfg.map(OneOrMany::into_vec)
    } else {
        Some(flag.to_vec())
    }
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    let file = load_config(&args.run)?;
    let defaults = BenchPlan::default();
    let matrices: Vec<PathBuf> = list(&args.matrix, file.matrix.clone()).unwrap_or_default();
    let axis = match (args.axis, &file.axis) {
        (Some(a), _) => a,
        (None, Some(s)) => s.parse().map_err(|e: String| anyhow!(e))?,
        (None, None) if !matrices.is_empty() => BenchAxis::Fixed,
        (None, None) => BenchAxis::Rows,
    };
    let rows = list(&args.rows, file.rows.clone());
    let cols = list(&args.cols, file.cols.clone());
    let one = |v: Option<Vec<usize>>, name: &str, default: usize| -> Result<usize> {
        match v.as_deref() {
            None => Ok(default),
            Some([x]) => Ok(*x),
            Some(_) => bail!("--{name} takes one value when it is not the swept axis"),
        }
    };
    let (sizes, other_dim) = match axis {
        BenchAxis::Rows => (
            rows.unwrap_or(defaults.sizes.clone()),
            one(cols, "cols", defaults.other_dim)?,
        ),
        BenchAxis::Cols => (
            cols.unwrap_or(defaults.sizes.clone()),
            one(rows, "rows", defaults.other_dim)?,
        ),
        BenchAxis::Fixed => (Vec::new(), 0),
    };
    let plan = BenchPlan {
        axis,
        sizes,
        other_dim,
        t_values: list(&args.t, file.t.clone()).unwrap_or(defaults.t_values),
        matrices,
        variants: list(&args.variant, file.variant.clone()).unwrap_or(defaults.variants),
        trials: args.trials.or(file.trials).unwrap_or(defaults.trials),
        base_seed: args.run.seed.or(file.seed).unwrap_or(defaults.base_seed),
        rse_tol: args
            .run
            .rse_tol
            .or(file.rse_tol)
            .unwrap_or(defaults.rse_tol),
        max_iters: args
            .run
            .max_iters
            .or(file.max_iters)
            .unwrap_or(defaults.max_iters),
        rule: resolve_rule(&args.run, &file)?,
    };
    let result = run_bench(&plan).map_err(|e| anyhow!(e))?;
    let mut stdout = io::stdout().lock();
    result.write_csv(&mut stdout)?;
    if let Some(dir) = out_dir(&args.run, &file)? {
        let path = dir.join("bench.csv");
        let mut w = create(&path)?;
        result.write_csv(&mut w)?;
        w.flush()?;
        eprintln!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let file = load_config(&args.run)?;
    let seed = args.run.seed.or(file.seed).unwrap_or(0);
    let bundle = resolve_problem(&args.problem, &file, seed)?;
    let defaults = VerifyOptions::default();
    let opts = VerifyOptions {
        seed: solver_seed(seed),
        rule: resolve_rule(&args.run, &file)?,
        rse_tol: args
            .run
            .rse_tol
            .or(file.rse_tol)
            .unwrap_or(defaults.rse_tol),
        max_iters: args
            .run
            .max_iters
            .or(file.max_iters)
            .unwrap_or(defaults.max_iters),
        inject_corruption: args.inject_corruption,
        ..defaults
    };
    let report = verify(&bundle.sys, &opts)?;
    write_json(&report, io::stdout().lock())?;
    if let Some(dir) = out_dir(&args.run, &file)? {
        let mut w = create(&dir.join("verify.json"))?;
        write_json(&report, &mut w)?;
        w.flush()?;
    }
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    })
}
