//! Command-line pipeline: `check`, `solve`, `spectrum` and `oracle`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, Format, InitialGuess, RunConfig};
use crate::fourier::VectorField;
use crate::kernel::essential_spectrum;
use crate::multiplier::{ContractionCertificate, MultiplierError};
use crate::nonlinearity::{verify_growth, verify_lipschitz};
use crate::oracle::{residual_report, residual_threshold, OracleError};
use crate::problem::{validate_problem, ProblemSpec};
use crate::solver::{analyze, nontriviality_check, picard_solve, random_field, Analysis, IterationTrace, SolverError};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Input = 1,
    Infeasible = 2,
    NoConvergence = 3,
}

#[derive(Debug, Parser)]
#[command(name = "idrift", version, about = "Solvability certificates and spectral fixed-point solves for nonlocal systems with drift")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run configuration
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides outputs.directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Enforce the complete block layout
    #[arg(long)]
    pub strict: bool,
    /// Seed for audits and random initial guesses
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Solution CSV to audit (default: <out>/solution.csv)
    #[arg(long)]
    pub solution: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solvability and contraction certificate only
    Check(RunArgs),
    /// Full pipeline: certificate, Picard iteration, residual audit
    Solve(RunArgs),
    /// Export the essential-spectrum curves
    Spectrum(RunArgs),
    /// Physical-space residual of a solution file
    Oracle(OracleArgs),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(String),
    #[error("solution file: {0}")]
    Solution(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Solver(e) => match e {
                SolverError::NoConvergence { .. } => ExitCode::NoConvergence,
                SolverError::Multiplier(MultiplierError::SolvabilityViolation { .. })
                | SolverError::CertificateFailed { .. }
                | SolverError::ConstraintInconsistency { .. }
                | SolverError::ContractionViolation { .. } => ExitCode::Infeasible,
                _ => ExitCode::Input,
            },
            _ => ExitCode::Input,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

struct Run {
    cfg: RunConfig,
    problem: ProblemSpec,
    out: PathBuf,
    strict: bool,
    seed: u64,
}

impl Run {
    fn new(args: &RunArgs) -> Result<Self, CliError> {
        let mut cfg = RunConfig::load(&args.config)?;
        if let Some(seed) = args.seed {
            cfg.numerics.seed = seed;
        }
        let out = args.out.clone().unwrap_or_else(|| cfg.outputs.directory.clone());
        fs::create_dir_all(&out).map_err(io_err(&out))?;
        let problem = cfg.problem_spec()?;
        Ok(Run {
            strict: args.strict || cfg.numerics.strict_mode,
            seed: cfg.numerics.seed,
            cfg,
            problem,
            out,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn wants(&self, f: Format) -> bool {
        self.cfg.outputs.formats.contains(&f)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))
    }

    /// Certificate is acceptable for the configured mode.
    fn acceptable(&self, c: &ContractionCertificate) -> bool {
        if self.cfg.numerics.certified_mode {
            c.certified
        } else {
            c.pass
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Input as i32 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code as i32,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as i32
        }
    }
}

pub fn execute(cmd: &Command) -> Result<ExitCode, CliError> {
    match cmd {
        Command::Check(a) => check(&Run::new(a)?).map(|(code, _)| code),
        Command::Solve(a) => solve(&Run::new(a)?),
        Command::Spectrum(a) => spectrum(&Run::new(a)?),
        Command::Oracle(a) => oracle(&Run::new(&a.run)?, a.solution.as_deref()),
    }
}

#[derive(Serialize)]
struct AuditSummary {
    lipschitz_estimate: Option<f64>,
    growth_margin: Option<f64>,
    failures: Vec<String>,
}

fn audits(run: &Run) -> AuditSummary {
    let model = &run.problem.nonlinearity;
    let d = &run.problem.domain;
    let trials = run.cfg.numerics.audit_trials.max(1);
    let mut failures = Vec::new();
    let lipschitz_estimate = match verify_lipschitz(model, d, trials, run.seed) {
        Ok(a) => Some(a.estimate),
        Err(e) => {
            failures.push(e.to_string());
            None
        }
    };
    let growth_margin = match verify_growth(model, d, trials, run.seed.wrapping_add(1)) {
        Ok(a) => Some(a.min_margin),
        Err(e) => {
            failures.push(e.to_string());
            None
        }
    };
    AuditSummary {
        lipschitz_estimate,
        growth_margin,
        failures,
    }
}

/// Writes solvability.json and certificate.json; returns the exit code a
/// check alone would give and the analysis when the problem was well formed.
fn check(run: &Run) -> Result<(ExitCode, Option<Analysis>), CliError> {
    let analysis = match analyze(&run.problem, run.strict) {
        Ok(a) => a,
        Err(SolverError::Invalid(violations)) => {
            let report = validate_problem(&run.problem, run.strict);
            run.write_json(
                "solvability.json",
                &json!({ "valid": false, "validation": report, "violations": violations }),
            )?;
            eprintln!("error: invalid problem: {}", violations.join("; "));
            return Ok((ExitCode::Input, None));
        }
        Err(e) => return Err(e.into()),
    };
    let audit = audits(run);
    let failures: Vec<String> = analysis
        .orthogonality
        .iter()
        .enumerate()
        .flat_map(|(k, r)| r.failures().map(move |c| format!("equation {}: {}", k + 1, c.name)))
        .collect();
    let nontrivial = nontriviality_check(&run.problem, &analysis)?;
    let essential: Vec<_> = analysis
        .essential
        .iter()
        .map(|e| json!({ "min_distance": e.min_distance, "argmin": e.argmin, "fredholm": e.fredholm }))
        .collect();
    let tags: Vec<String> = analysis.tags.iter().map(|t| t.to_string()).collect();
    // slow kernel decay at the box edge hints at a non-integrable kernel
    let kernel_tails: Vec<_> = analysis.spectra.iter().map(|k| k.base.truncation_warning()).collect();
    run.write_json(
        "solvability.json",
        &json!({
            "valid": true,
            "validation": analysis.validation,
            "tags": tags,
            "constraints": analysis.constraints,
            "solvable": analysis.solvable(),
            "failed_conditions": failures,
            "orthogonality": analysis.orthogonality,
            "essential_spectrum": essential,
            "kernel_truncation": kernel_tails,
            "nonlinearity_audit": audit,
            "nontriviality": nontrivial,
        }),
    )?;
    let mut code = ExitCode::Success;
    if !failures.is_empty() || !audit.failures.is_empty() {
        code = ExitCode::Infeasible;
    }
    if let Some(c) = &analysis.certificate {
        run.write_json(
            "certificate.json",
            &json!({ "status": c.status(), "acceptable": run.acceptable(c), "certificate": c }),
        )?;
        if !run.acceptable(c) {
            code = ExitCode::Infeasible;
        }
    }
    for f in &failures {
        eprintln!("solvability: condition failed: {f}");
    }
    for f in &audit.failures {
        eprintln!("nonlinearity audit: {f}");
    }
    Ok((code, Some(analysis)))
}

fn format_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the trace as CSV with columns
/// `step, increment_h2, ratio, residual_l2, wall_ms`.
pub fn emit_trace_csv(trace: &IterationTrace, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Csv(e.to_string()))?;
    let csv_err = |e: csv::Error| CliError::Csv(e.to_string());
    w.write_record(["step", "increment_h2", "ratio", "residual_l2", "wall_ms"]).map_err(csv_err)?;
    for r in &trace.rows {
        w.write_record([
            r.step.to_string(),
            r.increment_h2.to_string(),
            format_opt(r.ratio),
            format_opt(r.residual_l2),
            r.wall_ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn emit_trace_json(trace: &IterationTrace, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(&trace.rows).expect("trace serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn emit_trace(run: &Run, trace: &IterationTrace) -> Result<(), CliError> {
    if run.wants(Format::Csv) {
        emit_trace_csv(trace, &run.path("trace.csv"))?;
    }
    if run.wants(Format::Json) {
        emit_trace_json(trace, &run.path("trace.json"))?;
    }
    Ok(())
}

fn write_solution(run: &Run, u: &VectorField) -> Result<(), CliError> {
    let path = run.path("solution.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Csv(e.to_string()))?;
    let csv_err = |e: csv::Error| CliError::Csv(e.to_string());
    let mut header = vec!["x".to_string()];
    header.extend((1..=u.len()).map(|k| format!("u_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (j, x) in u.domain().nodes().iter().enumerate() {
        let mut row = vec![x.to_string()];
        row.extend(u.components().iter().map(|c| c.physical()[j].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))
}

fn solve(run: &Run) -> Result<ExitCode, CliError> {
    let (code, analysis) = check(run)?;
    let Some(analysis) = analysis else {
        return Ok(code);
    };
    if code != ExitCode::Success && !(run.cfg.numerics.allow_uncertified && analysis.solvable()) {
        return Ok(code);
    }
    let d = run.problem.domain;
    let v0 = match run.cfg.numerics.initial {
        InitialGuess::Zero => VectorField::zeros(d, run.problem.len()),
        InitialGuess::Random => random_field(&d, run.problem.len(), &mut ChaCha8Rng::seed_from_u64(run.seed))?,
    };
    let opts = run.cfg.solve_options();
    let solution = match picard_solve(&run.problem, &analysis, &v0, &opts) {
        Ok(s) => s,
        Err(SolverError::NoConvergence {
            iterations,
            increment,
            trace,
        }) => {
            emit_trace(run, &trace)?;
            eprintln!("error: no convergence after {iterations} steps (last increment {increment:e})");
            return Ok(ExitCode::NoConvergence);
        }
        Err(e) => return Err(e.into()),
    };
    emit_trace(run, &solution.trace)?;
    write_solution(run, &solution.fixed_point)?;
    let threshold = residual_threshold(opts.tol);
    run.write_json(
        "residual.json",
        &json!({ "threshold": threshold, "within_threshold": solution.residual.l2 <= threshold, "report": solution.residual }),
    )?;
    run.write_json(
        "solve.json",
        &json!({
            "status": solution.status,
            "iterations": solution.trace.len(),
            "final_increment": solution.trace.rows.last().map(|r| r.increment_h2),
            "a_priori_bound": solution.a_priori_bound,
            "a_posteriori_bound": solution.a_posteriori_bound,
            "h2_norm": crate::fourier::h2_norm(&solution.fixed_point),
            "nontrivial": solution.nontrivial.nontrivial,
            "truncation_warnings": solution.fixed_point.truncation_warnings(),
        }),
    )?;
    Ok(ExitCode::Success)
}

fn spectrum(run: &Run) -> Result<ExitCode, CliError> {
    let report = validate_problem(&run.problem, run.strict);
    if !report.passed() {
        eprintln!("error: invalid problem: {}", report.violations.join("; "));
        return Ok(ExitCode::Input);
    }
    let d = &run.problem.domain;
    let p = d.frequencies();
    let curves: Vec<_> = run.problem.equations.iter().map(|eq| essential_spectrum(eq, d, &p)).collect();
    if run.wants(Format::Csv) {
        let path = run.path("spectrum.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Csv(e.to_string()))?;
        let csv_err = |e: csv::Error| CliError::Csv(e.to_string());
        w.write_record(["equation", "p", "re", "im", "abs"]).map_err(csv_err)?;
        for (k, c) in curves.iter().enumerate() {
            for (p, l) in &c.curve {
                w.write_record([
                    (k + 1).to_string(),
                    p.to_string(),
                    l.re.to_string(),
                    l.im.to_string(),
                    l.norm().to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(io_err(&path))?;
    }
    if run.wants(Format::Json) {
        run.write_json("spectrum.json", &curves)?;
    }
    Ok(ExitCode::Success)
}

/// Reads a solution CSV with columns `x, u_1..u_N` on the problem grid.
pub fn read_solution(path: &Path, problem: &ProblemSpec) -> Result<Vec<Vec<f64>>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Csv(format!("{}: {e}", path.display())))?;
    let n = problem.len();
    let width = r.headers().map_err(|e| CliError::Csv(e.to_string()))?.len();
    if width != n + 1 {
        return Err(CliError::Solution(format!("{width} columns, expected x plus {n} components")));
    }
    let nodes = problem.domain.nodes();
    let h = problem.domain.step();
    let mut cols = vec![Vec::with_capacity(nodes.len()); n];
    for (j, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Csv(e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Solution(format!("row {}: {e}", j + 1)))?;
        match nodes.get(j) {
            Some(x) if (vals[0] - x).abs() <= 1e-9 * h.max(1.0) => {}
            _ => return Err(CliError::Solution(format!("row {} does not lie on the problem grid", j + 1))),
        }
        for k in 0..n {
            cols[k].push(vals[k + 1]);
        }
    }
    if cols.first().map_or(0, Vec::len) != nodes.len() {
        return Err(CliError::Solution(format!(
            "{} rows, grid has {} points",
            cols.first().map_or(0, Vec::len),
            nodes.len()
        )));
    }
    Ok(cols)
}

fn oracle(run: &Run, solution: Option<&Path>) -> Result<ExitCode, CliError> {
    let path = solution.map(Path::to_path_buf).unwrap_or_else(|| run.path("solution.csv"));
    let samples = read_solution(&path, &run.problem)?;
    let report = residual_report(&samples, &run.problem)?;
    let threshold = residual_threshold(run.cfg.numerics.tol);
    let ok = report.l2 <= threshold;
    run.write_json(
        "residual.json",
        &json!({ "solution": path.display().to_string(), "threshold": threshold, "within_threshold": ok, "report": report }),
    )?;
    let mut stdout = std::io::stdout();
    let _ = writeln!(stdout, "residual L2 = {:e} (threshold {:e})", report.l2, threshold);
    Ok(if ok { ExitCode::Success } else { ExitCode::Infeasible })
}
