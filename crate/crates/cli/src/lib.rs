//! Command-line front end. [`run`] is the whole program; `main` only forwards
//! the process arguments and exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ssnewton::baselines::josephy_newton;
use ssnewton::boxcones::DEFAULT_ACTIVITY_TOL;
use ssnewton::geproblem::{builtin_registry, find_builtin, load_affine_problem, FaceVerdict, GeProblem};
use ssnewton::ssnsolver::{approximation_step, solve, SolveReport, SolveStatus};

/// Probes drawn when estimating the semismooth* defect in `check`.
pub const DEFECT_SAMPLES: usize = 200;
const DEFECT_SEED: u64 = 0x5eed;
/// Moduli at or below this are reported as degenerate.
const MODULUS_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "ssnewton", version, about = "Semismooth* Newton solver for generalized equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a solver from a starting point.
    Solve(SolveArgs),
    /// Check non-degeneracy and second-order conditions at a point.
    Check(CheckArgs),
    /// List builtin problems.
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Ssstar,
    Josephy,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Builtin problem name or path to a JSON problem file.
    #[arg(long)]
    problem: String,
    #[arg(long, value_enum, default_value = "ssstar")]
    method: Method,
    /// Comma-separated starting point.
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    /// Comma-separated starting multiplier (Josephy only).
    #[arg(long, allow_hyphen_values = true)]
    lambda0: Option<String>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, value_enum, default_value = "json")]
    output: OutputFormat,
    /// Comma-separated solution used for error-based rates.
    #[arg(long, allow_hyphen_values = true)]
    known_solution: Option<String>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, alias = "x0", allow_hyphen_values = true)]
    x: String,
    /// Multiplier at the point; defaults to the approximation-step multiplier.
    #[arg(long, alias = "lambda0", allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long, value_enum, default_value = "text")]
    output: CheckFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckFormat {
    Text,
    Json,
}

/// Side-by-side result of `--method compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub ssstar: SolveReport,
    pub josephy: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub problem: String,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `None` when the point is interior, where the modulus is unbounded.
    pub nondegeneracy_modulus: Option<f64>,
    pub non_degenerate: bool,
    pub faces: Vec<FaceVerdict>,
    pub second_order_passed: bool,
    pub defect_samples: usize,
    pub max_defect: f64,
    pub passed: bool,
}

/// Process exit code for a solver status.
pub fn exit_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Converged => 0,
        SolveStatus::MaxIter
        | SolveStatus::QpInfeasible
        | SolveStatus::SingularNewtonSystem
        | SolveStatus::UnsolvableSubproblem
        | SolveStatus::NumericalFailure => 2,
    }
}

pub fn parse_vector(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            let t = t.trim();
            let v: f64 = t.parse().with_context(|| format!("invalid number {t:?}"))?;
            if !v.is_finite() {
                bail!("non-finite value {t:?}");
            }
            Ok(v)
        })
        .collect()
}

/// A builtin by name, otherwise a JSON problem file.
pub fn resolve_problem(spec: &str) -> anyhow::Result<GeProblem> {
    if let Some(b) = find_builtin(spec) {
        return Ok(b.problem);
    }
    let path = std::path::Path::new(spec);
    if !path.exists() {
        bail!("unknown problem {spec:?} (not a builtin name or an existing file)");
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
    load_affine_problem(&text).with_context(|| format!("loading {spec}"))
}

fn check_len(what: &str, v: &[f64], expected: usize) -> anyhow::Result<()> {
    if v.len() != expected {
        bail!("{what} has {} entries, problem expects {expected}", v.len());
    }
    Ok(())
}

/// Runs the program on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a, out, err),
        Command::Check(a) => cmd_check(&a, out),
        Command::List => cmd_list(out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn cmd_list(out: &mut dyn Write) -> anyhow::Result<i32> {
    for b in builtin_registry() {
        writeln!(out, "{}", b.problem.name())?;
    }
    Ok(0)
}

/// Runs one method on a problem; shared by the solve and compare paths so the
/// two produce identical reports.
pub fn run_method(
    problem: &GeProblem,
    method: Method,
    x0: &[f64],
    lambda0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
    known_solution: Option<&[f64]>,
) -> anyhow::Result<SolveReport> {
    let mut report = match method {
        Method::Ssstar => solve(problem, x0, tol, max_iter)?,
        Method::Josephy => josephy_newton(problem, x0, lambda0, tol, max_iter)?,
        Method::Compare => bail!("compare is not a single method"),
    };
    if let Some(x_bar) = known_solution {
        report.annotate_errors(x_bar);
    }
    Ok(report)
}

fn cmd_solve(a: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<i32> {
    if a.tol.is_nan() || a.tol <= 0.0 {
        bail!("--tol must be positive");
    }
    if a.max_iter == 0 {
        bail!("--max-iter must be at least 1");
    }
    let problem = resolve_problem(&a.problem)?;
    let x0 = parse_vector(&a.x0).context("--x0")?;
    check_len("--x0", &x0, problem.n())?;
    let lambda0 = a.lambda0.as_deref().map(parse_vector).transpose().context("--lambda0")?;
    if let Some(l) = &lambda0 {
        check_len("--lambda0", l, problem.s())?;
    }
    let known = a
        .known_solution
        .as_deref()
        .map(parse_vector)
        .transpose()
        .context("--known-solution")?;
    if let Some(k) = &known {
        check_len("--known-solution", k, problem.n())?;
    }
    let run = |m| run_method(&problem, m, &x0, lambda0.as_deref(), a.tol, a.max_iter, known.as_deref());
    let (document, code, statuses) = match a.method {
        Method::Compare => {
            let cmp = CompareReport {
                ssstar: run(Method::Ssstar)?,
                josephy: run(Method::Josephy)?,
            };
            let both = cmp.ssstar.status == SolveStatus::Converged
                && cmp.josephy.status == SolveStatus::Converged;
            let doc = match a.output {
                OutputFormat::Json => serde_json::to_string_pretty(&cmp)? + "\n",
                OutputFormat::Csv => compare_csv(&cmp, problem.n()),
            };
            let statuses = format!("ssstar: {}, josephy: {}", cmp.ssstar.status, cmp.josephy.status);
            (doc, if both { 0 } else { 2 }, statuses)
        }
        m => {
            let report = run(m)?;
            let doc = match a.output {
                OutputFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
                OutputFormat::Csv => report_csv(&report, problem.n()),
            };
            (doc, exit_code(report.status), report.status.to_string())
        }
    };
    match &a.out {
        Some(path) => std::fs::write(path, &document).with_context(|| format!("writing {}", path.display()))?,
        None => out.write_all(document.as_bytes())?,
    }
    if a.output == OutputFormat::Csv || a.out.is_some() {
        writeln!(err, "status: {statuses}")?;
    }
    Ok(code)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn has_errors(report: &SolveReport) -> bool {
    report.iterations.iter().any(|r| r.error_norm.is_some())
}

fn record_columns(report: &SolveReport, n: usize, prefix: &str) -> Vec<String> {
    let mut cols: Vec<String> = (1..=n).map(|i| format!("{prefix}x{i}")).collect();
    for c in ["residual", "step_norm", "rate"] {
        cols.push(format!("{prefix}{c}"));
    }
    if has_errors(report) {
        cols.push(format!("{prefix}error_norm"));
        cols.push(format!("{prefix}error_rate"));
    }
    cols
}

fn record_cells(report: &SolveReport, n: usize, k: usize) -> Vec<String> {
    let width = record_columns(report, n, "").len();
    let Some(r) = report.iterations.get(k) else {
        return vec![String::new(); width];
    };
    let mut cells: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
    cells.push(r.residual.to_string());
    cells.push(opt(r.step_norm));
    cells.push(opt(r.rate_estimate));
    if has_errors(report) {
        cells.push(opt(r.error_norm));
        cells.push(opt(r.error_rate));
    }
    cells
}

/// Header `k,x1..xn,residual,step_norm,rate` and one row per iteration.
pub fn report_csv(report: &SolveReport, n: usize) -> String {
    let mut s = String::from("k,");
    s += &record_columns(report, n, "").join(",");
    s.push('\n');
    for k in 0..report.iterations.len() {
        s += &format!("{k},{}\n", record_cells(report, n, k).join(","));
    }
    s
}

/// Both runs side by side, prefixed `ssstar_` and `josephy_`; the shorter run
/// leaves empty cells.
pub fn compare_csv(cmp: &CompareReport, n: usize) -> String {
    let mut header = vec!["k".to_string()];
    header.extend(record_columns(&cmp.ssstar, n, "ssstar_"));
    header.extend(record_columns(&cmp.josephy, n, "josephy_"));
    let mut s = header.join(",") + "\n";
    let rows = cmp.ssstar.iterations.len().max(cmp.josephy.iterations.len());
    for k in 0..rows {
        let mut cells = vec![k.to_string()];
        cells.extend(record_cells(&cmp.ssstar, n, k));
        cells.extend(record_cells(&cmp.josephy, n, k));
        s += &(cells.join(",") + "\n");
    }
    s
}

fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let problem = resolve_problem(&a.problem)?;
    let x = parse_vector(&a.x).context("--x")?;
    check_len("--x", &x, problem.n())?;
    let lambda = match &a.lambda {
        Some(t) => parse_vector(t).context("--lambda")?,
        None => approximation_step(&problem, &x)
            .map_err(|e| anyhow!("no multiplier given and approximation step failed: {e}"))?
            .lambda,
    };
    check_len("--lambda", &lambda, problem.s())?;
    let d = problem.eval_g(&x)?;
    let set = problem.set();
    if !set.contains(&d, DEFAULT_ACTIVITY_TOL) {
        bail!("g(x) = {d:?} is not in D");
    }
    if !set.normal_cone_membership(&d, &lambda, DEFAULT_ACTIVITY_TOL)? {
        bail!("lambda = {lambda:?} is not in the normal cone of D at g(x)");
    }
    let modulus = problem.nondegeneracy_modulus(&x, &d)?;
    let second = problem.check_second_order(&x, &lambda)?;
    let max_defect =
        set.max_sampled_defect(&d, &lambda, DEFECT_SAMPLES, DEFECT_SEED, DEFAULT_ACTIVITY_TOL)?;
    let non_degenerate = modulus > MODULUS_TOL;
    let second_order_passed = second.passed();
    let report = CheckReport {
        problem: problem.name().to_string(),
        x,
        lambda,
        nondegeneracy_modulus: modulus.is_finite().then_some(modulus),
        non_degenerate,
        faces: second.faces,
        second_order_passed,
        defect_samples: DEFECT_SAMPLES,
        max_defect,
        passed: non_degenerate && second_order_passed,
    };
    match a.output {
        CheckFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
        CheckFormat::Text => write_check_text(&report, out)?,
    }
    Ok(if report.passed { 0 } else { 2 })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn write_check_text(r: &CheckReport, out: &mut dyn Write) -> anyhow::Result<()> {
    writeln!(out, "problem: {}", r.problem)?;
    let modulus = r.nondegeneracy_modulus.map_or("inf (interior point)".to_string(), |m| m.to_string());
    writeln!(out, "non-degeneracy modulus: {modulus} [{}]", verdict(r.non_degenerate))?;
    for f in &r.faces {
        // 1-based, matching the usual coordinate naming.
        let j: Vec<String> = f.index_set.iter().map(|i| (i + 1).to_string()).collect();
        let note = if f.rank_deficient { ", rank deficient" } else { "" };
        writeln!(
            out,
            "second-order face J = {{{}}}: {} (dim {}, det {}{note})",
            j.join(","),
            verdict(f.regular),
            f.dimension,
            f.determinant
        )?;
    }
    writeln!(out, "second-order condition: {}", verdict(r.second_order_passed))?;
    writeln!(out, "semismooth* defect max over {} samples: {}", r.defect_samples, r.max_defect)?;
    writeln!(out, "overall: {}", verdict(r.passed))?;
    Ok(())
}
