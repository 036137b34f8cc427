//! Experiment front-end: a line-oriented config format, experiment dispatch,
//! CSV output and verdict summaries.
//!
//! ```text
//! # comment
//! [experiment]
//! kind = run            # run | spectral | flow | compare | schedule
//! seed = 7
//!
//! [problem]
//! name = quadratic_diag
//! dim = 10
//! mu = 0.01
//! lip = 1
//! ```
//!
//! Full-line comments start with `#` or `;`. Keys must belong to the
//! section they appear in; unknown and duplicate keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::flow::{
    continuous_lyapunov_check, default_slack, integrate_gradient_flow, integrate_nag_flow, integrate_rescaled,
    integrate_rescaled_gradient_flow, reference_of, rescaled_gradient_check, rescaled_lyapunov_check, sublinear_check,
    BetaMode, FlowVerdict,
};
use crate::linalg::{load_matrix, Vector};
use crate::lyapunov::{verify_trace, Check};
use crate::problems::{catalog, make_quadratic, CompositeProblem, QuadraticProblem};
use crate::schedules::{generate, rescale_factor, RescaleKind, StepRule};
use crate::solvers::{run, RestartPolicy, RunConfig, RunTrace, SchemeKind};
use crate::spectral::{
    condition_check, gd_rates, scaled_mu0_analysis, gs_radius_bounds, SpectralReport, SPECTRAL_TOL,
};

/// CSV schema version written in every output header.
pub const SCHEMA: u32 = 1;

const SECTIONS: &[(&str, &[&str])] = &[
    ("experiment", &["kind", "seed", "output"]),
    ("problem", &["name", "dim", "mu", "lip", "kappa", "rows", "path"]),
    ("scheme", &["name", "gamma0", "step", "x0", "v0", "restart", "restart_period", "restart_sigma"]),
    ("budget", &["iterations", "gap_tol", "horizon", "tol", "slack"]),
    ("spectral", &["analysis", "alphas", "gamma0"]),
    ("flow", &["model", "gamma0", "rescale", "b", "beta"]),
    ("compare", &["schemes"]),
    ("schedule", &["rule", "gamma0", "mu", "lip"]),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Run,
    Spectral,
    Flow,
    Compare,
    Schedule,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Run => "run",
            ExperimentKind::Spectral => "spectral",
            ExperimentKind::Flow => "flow",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Schedule => "schedule",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    QuadraticDiag { dim: usize, mu: f64, lip: f64 },
    QuadraticMu0 { dim: usize, lip: f64, kappa: f64 },
    QuadraticRandom { dim: usize, mu: f64, lip: f64 },
    Logistic1d,
    Logistic2d,
    Lasso { rows: usize, dim: usize },
    Matrix { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub enum StartSpec {
    Ones,
    Zeros,
    Random,
    Values(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSpec {
    pub scheme: SchemeKind,
    pub gamma0: Option<f64>,
    pub step: Option<f64>,
    pub x0: StartSpec,
    /// `None`: `v0 = x0`.
    pub v0: Option<StartSpec>,
    pub restart: RestartPolicy,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Budget {
    pub iterations: usize,
    pub gap_tol: Option<f64>,
    pub horizon: f64,
    pub tol: f64,
    /// Defaults to `100 tol`.
    pub slack: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralAnalysis {
    /// Radius bound over a grid of steps in `(0, 2/sqrt(kappa)]`.
    StepGrid,
    /// `kappa(G) = sqrt(kappa(A))`.
    Condition,
    /// Scaled amplifiers for `mu = 0`.
    Mu0,
    /// Gradient-descent rates.
    Gd,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralSpec {
    pub analysis: SpectralAnalysis,
    pub alphas: usize,
    pub gamma0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowModel {
    Nag,
    Rescaled,
    Gradient,
    RescaledGradient,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowSpec {
    pub model: FlowModel,
    pub gamma0: Option<f64>,
    /// `None`: closed-form factor; `Some(b)`: rational factor.
    pub rational_b: Option<f64>,
    pub beta: BetaMode,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleSpec {
    pub rule: StepRule,
    pub gamma0: f64,
    pub mu: f64,
    pub lip: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub problem: ProblemSpec,
    pub scheme: SchemeSpec,
    pub budget: Budget,
    pub spectral: SpectralSpec,
    pub flow: FlowSpec,
    pub compare: Vec<SchemeKind>,
    pub schedule: ScheduleSpec,
}

struct Entry {
    value: String,
    line: usize,
}

struct Raw {
    entries: BTreeMap<(String, String), Entry>,
}

fn semantic(field: &str, message: impl std::fmt::Display) -> Error {
    Error::Config { message: format!("{field}: {message}") }
}

impl Raw {
    fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<(String, String), Entry> = BTreeMap::new();
        let mut section: Option<&'static (&'static str, &'static [&'static str])> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::ConfigSyntax { line, message: format!("unterminated section header `{t}`") })?
                    .trim();
                section = Some(SECTIONS.iter().find(|(s, _)| *s == name).ok_or_else(|| Error::ConfigSyntax {
                    line,
                    message: format!(
                        "unknown section [{name}]; valid sections: {}",
                        SECTIONS.iter().map(|(s, _)| *s).collect::<Vec<_>>().join(", ")
                    ),
                })?);
                continue;
            }
            let (key, value) = t
                .split_once('=')
                .ok_or_else(|| Error::ConfigSyntax { line, message: format!("expected `key = value`, got `{t}`") })?;
            let (key, value) = (key.trim(), value.trim());
            let (sname, keys) =
                section.ok_or_else(|| Error::ConfigSyntax { line, message: format!("key `{key}` outside any section") })?;
            if key.is_empty() {
                return Err(Error::ConfigSyntax { line, message: "empty key".into() });
            }
            if !keys.contains(&key) {
                return Err(Error::ConfigSyntax {
                    line,
                    message: format!("unknown key `{key}` in [{sname}]; valid keys: {}", keys.join(", ")),
                });
            }
            let k = (sname.to_string(), key.to_string());
            if let Some(prev) = entries.get(&k) {
                return Err(Error::ConfigSyntax {
                    line,
                    message: format!("duplicate key `{sname}.{key}` (first set on line {}, again on line {line})", prev.line),
                });
            }
            entries.insert(k, Entry { value: value.to_string(), line });
        }
        Ok(Self { entries })
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn str(&self, section: &str, key: &str) -> Option<&str> {
        self.get(section, key).map(|e| e.value.as_str())
    }

    fn parse_as<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|err| semantic(&format!("{section}.{key} (line {})", e.line), format!("`{}`: {err}", e.value))),
        }
    }
}

fn parse_start(field: &str, s: &str) -> Result<StartSpec> {
    match s {
        "ones" => Ok(StartSpec::Ones),
        "zeros" => Ok(StartSpec::Zeros),
        "random" => Ok(StartSpec::Random),
        _ => s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(StartSpec::Values)
            .map_err(|_| semantic(field, format!("`{s}` is not ones, zeros, random or a comma-separated list"))),
    }
}

fn parse_problem(raw: &Raw) -> Result<ProblemSpec> {
    let name = raw.str("problem", "name").ok_or_else(|| semantic("problem.name", "required"))?;
    let dim = |d: usize| -> Result<usize> { Ok(raw.parse_as("problem", "dim")?.unwrap_or(d)) };
    let f = |k: &str, d: f64| -> Result<f64> { Ok(raw.parse_as("problem", k)?.unwrap_or(d)) };
    Ok(match name {
        "quadratic_diag" => ProblemSpec::QuadraticDiag { dim: dim(10)?, mu: f("mu", 0.01)?, lip: f("lip", 1.0)? },
        "quadratic_mu0" => ProblemSpec::QuadraticMu0 { dim: dim(10)?, lip: f("lip", 1.0)?, kappa: f("kappa", 100.0)? },
        "quadratic_random" => ProblemSpec::QuadraticRandom { dim: dim(10)?, mu: f("mu", 0.01)?, lip: f("lip", 1.0)? },
        "logistic_1d" => ProblemSpec::Logistic1d,
        "logistic_2d" => ProblemSpec::Logistic2d,
        "lasso" => ProblemSpec::Lasso { rows: raw.parse_as("problem", "rows")?.unwrap_or(8), dim: dim(5)? },
        "matrix" => ProblemSpec::Matrix {
            path: PathBuf::from(raw.str("problem", "path").ok_or_else(|| semantic("problem.path", "required for name = matrix"))?),
        },
        other => {
            return Err(semantic(
                "problem.name",
                format!(
                    "unknown problem `{other}`; valid problems: quadratic_diag, quadratic_mu0, quadratic_random, logistic_1d, logistic_2d, lasso, matrix"
                ),
            ))
        }
    })
}

fn parse_scheme(raw: &Raw, required: bool) -> Result<SchemeSpec> {
    let scheme = match raw.str("scheme", "name") {
        Some(s) => s.parse::<SchemeKind>().map_err(|e| semantic("scheme.name", e))?,
        None if required => return Err(semantic("scheme.name", format!("required; valid schemes: {}", SchemeKind::valid_names()))),
        None => SchemeKind::Nag,
    };
    let x0 = match raw.str("scheme", "x0") {
        Some(s) => parse_start("scheme.x0", s)?,
        None => StartSpec::Ones,
    };
    let v0 = match raw.str("scheme", "v0") {
        None | Some("x0") => None,
        Some(s) => Some(parse_start("scheme.v0", s)?),
    };
    let period: Option<usize> = raw.parse_as("scheme", "restart_period")?;
    let sigma: Option<f64> = raw.parse_as("scheme", "restart_sigma")?;
    let restart = match raw.str("scheme", "restart").unwrap_or("none") {
        "none" => RestartPolicy::None,
        "adaptive" => RestartPolicy::Adaptive,
        "fixed" => {
            if period.is_none() && sigma.is_none() {
                return Err(semantic("scheme.restart", "fixed restart needs restart_period or restart_sigma"));
            }
            RestartPolicy::Fixed { period, sigma }
        }
        other => return Err(semantic("scheme.restart", format!("unknown policy `{other}`; valid: none, fixed, adaptive"))),
    };
    Ok(SchemeSpec {
        scheme,
        gamma0: raw.parse_as("scheme", "gamma0")?,
        step: raw.parse_as("scheme", "step")?,
        x0,
        v0,
        restart,
    })
}

/// Parses and validates a config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw = Raw::parse(text)?;
    let kind = match raw.str("experiment", "kind") {
        Some("run") => ExperimentKind::Run,
        Some("spectral") => ExperimentKind::Spectral,
        Some("flow") => ExperimentKind::Flow,
        Some("compare") => ExperimentKind::Compare,
        Some("schedule") => ExperimentKind::Schedule,
        Some(other) => {
            return Err(semantic("experiment.kind", format!("unknown kind `{other}`; valid: run, spectral, flow, compare, schedule")))
        }
        None => return Err(semantic("experiment.kind", "required")),
    };
    let problem = if kind == ExperimentKind::Schedule && raw.str("problem", "name").is_none() {
        ProblemSpec::QuadraticDiag { dim: 10, mu: 0.01, lip: 1.0 }
    } else {
        parse_problem(&raw)?
    };
    let scheme = parse_scheme(&raw, kind == ExperimentKind::Run)?;
    let budget = Budget {
        iterations: raw.parse_as("budget", "iterations")?.unwrap_or(500),
        gap_tol: raw.parse_as("budget", "gap_tol")?,
        horizon: raw.parse_as("budget", "horizon")?.unwrap_or(10.0),
        tol: raw.parse_as("budget", "tol")?.unwrap_or(1e-9),
        slack: raw.parse_as("budget", "slack")?,
    };
    if budget.iterations == 0 {
        return Err(semantic("budget.iterations", "must be at least 1"));
    }
    let analysis = match raw.str("spectral", "analysis").unwrap_or("step_grid") {
        "step_grid" => SpectralAnalysis::StepGrid,
        "condition" => SpectralAnalysis::Condition,
        "mu0" => SpectralAnalysis::Mu0,
        "gd" => SpectralAnalysis::Gd,
        other => {
            return Err(semantic("spectral.analysis", format!("unknown analysis `{other}`; valid: step_grid, condition, mu0, gd")))
        }
    };
    let spectral = SpectralSpec {
        analysis,
        alphas: raw.parse_as("spectral", "alphas")?.unwrap_or(20),
        gamma0: raw.parse_as("spectral", "gamma0")?.unwrap_or(1.0),
    };
    let model = match raw.str("flow", "model").unwrap_or("nag") {
        "nag" => FlowModel::Nag,
        "rescaled" => FlowModel::Rescaled,
        "gradient" => FlowModel::Gradient,
        "rescaled_gradient" => FlowModel::RescaledGradient,
        other => {
            return Err(semantic("flow.model", format!("unknown model `{other}`; valid: nag, rescaled, gradient, rescaled_gradient")))
        }
    };
    let rational_b = match raw.str("flow", "rescale").unwrap_or("closed_form") {
        "closed_form" => None,
        "rational" => Some(raw.parse_as("flow", "b")?.unwrap_or(2.0)),
        other => return Err(semantic("flow.rescale", format!("unknown rescale `{other}`; valid: closed_form, rational"))),
    };
    let beta = match raw.str("flow", "beta").unwrap_or("alpha_squared") {
        "alpha_squared" => BetaMode::AlphaSquared,
        "equality" => BetaMode::Equality,
        other => return Err(semantic("flow.beta", format!("unknown beta mode `{other}`; valid: alpha_squared, equality"))),
    };
    let flow = FlowSpec { model, gamma0: raw.parse_as("flow", "gamma0")?, rational_b, beta };
    let compare = match raw.str("compare", "schemes") {
        None => vec![SchemeKind::GsCorrected, SchemeKind::Nag, SchemeKind::Oag1, SchemeKind::Oag2],
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse::<SchemeKind>().map_err(|e| semantic("compare.schemes", e)))
            .collect::<Result<Vec<_>>>()?,
    };
    let rule = match raw.str("schedule", "rule") {
        None => StepRule::Nag,
        Some(s) => s.parse::<StepRule>().map_err(|e| semantic("schedule.rule", e))?,
    };
    let schedule = ScheduleSpec {
        rule,
        gamma0: raw.parse_as("schedule", "gamma0")?.unwrap_or(1.0),
        mu: raw.parse_as("schedule", "mu")?.unwrap_or(0.0),
        lip: raw.parse_as("schedule", "lip")?.unwrap_or(1.0),
    };
    Ok(ExperimentConfig {
        kind,
        seed: raw.parse_as("experiment", "seed")?.unwrap_or(0),
        output: raw.str("experiment", "output").map(PathBuf::from),
        problem,
        scheme,
        budget,
        spectral,
        flow,
        compare,
        schedule,
    })
}

/// Reads a config file; relative matrix paths resolve against its directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    if let ProblemSpec::Matrix { path: m } = &mut cfg.problem {
        if m.is_relative() {
            if let Some(dir) = path.parent() {
                *m = dir.join(&*m);
            }
        }
    }
    Ok(cfg)
}

struct Built {
    composite: CompositeProblem,
    quadratic: Option<QuadraticProblem>,
}

fn build_problem(spec: &ProblemSpec, seed: u64) -> Result<Built> {
    let quad = |q: QuadraticProblem| Built { composite: q.composite(), quadratic: Some(q) };
    Ok(match spec {
        ProblemSpec::QuadraticDiag { dim, mu, lip } => quad(catalog::quadratic_diag(*dim, *mu, *lip)?),
        ProblemSpec::QuadraticMu0 { dim, lip, kappa } => quad(catalog::quadratic_mu0(*dim, *lip, *kappa)?),
        ProblemSpec::QuadraticRandom { dim, mu, lip } => {
            quad(catalog::quadratic_random(*dim, *mu, *lip, &mut catalog::rng(seed))?)
        }
        ProblemSpec::Logistic1d => Built { composite: catalog::logistic_1d()?, quadratic: None },
        ProblemSpec::Logistic2d => Built { composite: catalog::logistic_2d()?, quadratic: None },
        ProblemSpec::Lasso { rows, dim } => Built { composite: catalog::lasso(*rows, *dim, seed)?, quadratic: None },
        ProblemSpec::Matrix { path } => quad(make_quadratic(load_matrix(path)?)?),
    })
}

fn start_point(spec: &StartSpec, dim: usize, rng: &mut impl rand::Rng, field: &str) -> Result<Vector> {
    Ok(match spec {
        StartSpec::Ones => Vector::from_element(dim, 1.0),
        StartSpec::Zeros => Vector::zeros(dim),
        StartSpec::Random => catalog::gaussian_vector(dim, rng),
        StartSpec::Values(v) => {
            if v.len() != dim {
                return Err(semantic(field, format!("has {} entries, problem dimension is {dim}", v.len())));
            }
            Vector::from_row_slice(v)
        }
    })
}

/// One row of a CSV file.
struct Csv {
    text: String,
}

impl Csv {
    fn new(kind: &str, header: &[String]) -> Self {
        let mut text = format!("# schema={SCHEMA} kind={kind}\n");
        text.push_str(&header.join(","));
        text.push('\n');
        Self { text }
    }
    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    num(x.unwrap_or(f64::NAN))
}

fn hdr(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Result of an experiment: output files and verdict lines.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub pass: bool,
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

struct Writer<'a> {
    dir: &'a Path,
    outcome: Outcome,
}

impl Writer<'_> {
    fn file(&mut self, name: &str, csv: Csv) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, csv.text)?;
        self.outcome.files.push(path);
        Ok(())
    }
    fn verdict(&mut self, pass: bool, line: String) {
        self.outcome.pass &= pass;
        self.outcome.lines.push(format!("{} {line}", if pass { "PASS" } else { "FAIL" }));
    }
    fn check(&mut self, prefix: &str, c: &Check) {
        self.verdict(c.pass, format!("{prefix}{}: worst {:.3e} over {} checks", c.name, c.worst, c.checked));
    }
    fn note(&mut self, line: String) {
        self.outcome.lines.push(format!("NOTE {line}"));
    }
}

/// Runs an experiment, writing CSV files and `verdict.txt` into `out_dir`.
/// `Outcome::pass` is true iff every asserted check passed.
pub fn execute(config: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    fs::create_dir_all(out_dir)?;
    let mut w = Writer { dir: out_dir, outcome: Outcome { pass: true, ..Default::default() } };
    match config.kind {
        ExperimentKind::Run => exec_run(config, &mut w)?,
        ExperimentKind::Compare => exec_compare(config, &mut w)?,
        ExperimentKind::Spectral => exec_spectral(config, &mut w)?,
        ExperimentKind::Flow => exec_flow(config, &mut w)?,
        ExperimentKind::Schedule => exec_schedule(config, &mut w)?,
    }
    let mut text = String::new();
    for l in &w.outcome.lines {
        let _ = writeln!(text, "{l}");
    }
    let _ = writeln!(text, "OVERALL {}", if w.outcome.pass { "PASS" } else { "FAIL" });
    let path = out_dir.join("verdict.txt");
    fs::write(&path, text)?;
    w.outcome.files.push(path);
    Ok(w.outcome)
}

fn run_config(config: &ExperimentConfig, problem: &CompositeProblem) -> Result<RunConfig> {
    let s = &config.scheme;
    let mut rng = catalog::rng(config.seed.wrapping_add(1));
    let x0 = start_point(&s.x0, problem.dim(), &mut rng, "scheme.x0")?;
    let v0 = match &s.v0 {
        None => None,
        Some(spec) => Some(start_point(spec, problem.dim(), &mut rng, "scheme.v0")?),
    };
    let mut rc = RunConfig::new(x0);
    rc.v0 = v0;
    rc.max_iter = config.budget.iterations;
    rc.gap_tol = config.budget.gap_tol;
    rc.gamma0 = s.gamma0;
    rc.step = s.step;
    rc.restart = s.restart.clone();
    Ok(rc)
}

fn trace_csv(trace: &RunTrace) -> Csv {
    let mut csv = Csv::new("run", &hdr(&["k", "gap", "lyapunov", "alpha", "gamma", "factor", "envelope"]));
    for r in &trace.records {
        csv.row(&[r.k.to_string(), opt(r.gap), opt(r.lyapunov), num(r.alpha), num(r.gamma), opt(r.factor), opt(r.envelope)]);
    }
    csv
}

/// Runs a scheme; a diverged run yields its partial trace and a failure note.
fn run_traced(scheme: SchemeKind, problem: &CompositeProblem, rc: &RunConfig) -> Result<(RunTrace, Option<String>)> {
    match run(scheme, problem, rc) {
        Ok(t) => Ok((t, None)),
        Err(Error::Diverged { k, gap, factor, trace }) => {
            Ok((*trace, Some(format!("diverged at k = {k}: gap {gap:.3e} exceeds {factor:.1e} x initial gap"))))
        }
        Err(e) => Err(e),
    }
}

fn record_trace_verdict(w: &mut Writer, prefix: &str, trace: &RunTrace, diverged: Option<String>) {
    if let Some(msg) = diverged {
        w.verdict(false, format!("{prefix}{msg}"));
    }
    if trace.scheme.has_lyapunov() && trace.reference.is_some() {
        let verdict = verify_trace(trace);
        for c in &verdict.checks {
            w.check(prefix, c);
        }
        if !verdict.lyapunov_increases.is_empty() {
            w.note(format!("{prefix}Lyapunov increased at {} steps", verdict.lyapunov_increases.len()));
        }
    } else {
        w.note(format!("{prefix}no Lyapunov certificate for {} on this problem", trace.scheme.name()));
    }
    if let Some(g) = trace.last().gap {
        w.note(format!("{prefix}final gap {g:.6e} after {} iterations", trace.iterations()));
    }
}

fn exec_run(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let built = build_problem(&config.problem, config.seed)?;
    let rc = run_config(config, &built.composite)?;
    let (trace, diverged) = run_traced(config.scheme.scheme, &built.composite, &rc)?;
    w.file("run.csv", trace_csv(&trace))?;
    record_trace_verdict(w, "", &trace, diverged);
    Ok(())
}

fn exec_compare(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let built = build_problem(&config.problem, config.seed)?;
    let problem = &built.composite;
    let rc = run_config(config, problem)?;
    let results: Vec<Result<(RunTrace, Option<String>)>> = std::thread::scope(|s| {
        let handles: Vec<_> =
            config.compare.iter().map(|&scheme| s.spawn({ let rc = &rc; move || run_traced(scheme, problem, rc) })).collect();
        handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
    });
    let mut summary = Csv::new("compare", &hdr(&["scheme", "iterations", "final_gap", "final_lyapunov", "pass"]));
    for (scheme, res) in config.compare.iter().zip(results) {
        let (trace, diverged) = res?;
        let before = w.outcome.pass;
        w.outcome.pass = true;
        record_trace_verdict(w, &format!("{}: ", scheme.name()), &trace, diverged);
        let ok = w.outcome.pass;
        w.outcome.pass = before && ok;
        let last = trace.last();
        summary.row(&[scheme.name().to_string(), trace.iterations().to_string(), opt(last.gap), opt(last.lyapunov), ok.to_string()]);
        w.file(&format!("compare_{}.csv", scheme.name()), trace_csv(&trace))?;
    }
    w.file("compare.csv", summary)?;
    Ok(())
}

fn quadratic_of(built: Built, what: &str) -> Result<QuadraticProblem> {
    built.quadratic.ok_or_else(|| semantic("problem.name", format!("{what} needs a quadratic problem")))
}

fn spectral_rows(csv: &mut Csv, k: usize, r: &SpectralReport) {
    csv.row(&[
        k.to_string(),
        r.label.clone(),
        num(r.alpha),
        num(r.rho),
        num(r.bound),
        opt(r.norm2),
        r.pass().to_string(),
    ]);
}

fn exec_spectral(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let q = quadratic_of(build_problem(&config.problem, config.seed)?, "spectral analysis")?;
    let spec = &config.spectral;
    let cols = hdr(&["k", "transform", "alpha", "rho", "bound", "norm2", "pass"]);
    match spec.analysis {
        SpectralAnalysis::StepGrid => {
            if spec.alphas == 0 {
                return Err(semantic("spectral.alphas", "must be at least 1"));
            }
            let amax = 2.0 / q.condition().sqrt();
            let mut csv = Csv::new("spectral", &cols);
            let mut worst = f64::NEG_INFINITY;
            let mut ok = true;
            for i in 1..=spec.alphas {
                let alpha = if i == spec.alphas { amax } else { amax * i as f64 / spec.alphas as f64 };
                for r in gs_radius_bounds(&q, alpha)? {
                    worst = worst.max(r.rho - r.bound);
                    ok &= r.pass();
                    spectral_rows(&mut csv, i, &r);
                }
            }
            w.file("spectral.csv", csv)?;
            w.verdict(ok, format!("gs_radius_bound: max rho - bound {worst:.3e} over {} steps", spec.alphas));
        }
        SpectralAnalysis::Condition => {
            let c = condition_check(&q, true)?;
            let mut csv = Csv::new("spectral_condition", &hdr(&["transform", "kappa", "sqrt_kappa_a", "dense_kappa", "max_real_part"]));
            csv.row(&["HB".into(), num(c.kappa_hb), num(c.sqrt_kappa_a), opt(c.dense_kappa_hb), num(c.max_real_part)]);
            csv.row(&["NAG".into(), num(c.kappa_nag), num(c.sqrt_kappa_a), opt(c.dense_kappa_nag), num(c.max_real_part)]);
            w.file("spectral.csv", csv)?;
            w.verdict(
                c.pass(1e-8),
                format!("transform_condition: kappa HB {:.12e}, NAG {:.12e}, sqrt(kappa(A)) {:.12e}", c.kappa_hb, c.kappa_nag, c.sqrt_kappa_a),
            );
        }
        SpectralAnalysis::Mu0 => {
            let an = scaled_mu0_analysis(&q, spec.gamma0, config.budget.iterations, true)?;
            let mut csv = Csv::new("spectral_mu0", &hdr(&["k", "alpha", "rho", "bound", "norm2", "product", "decay_bound", "pass"]));
            for (k, r) in an.reports.iter().enumerate() {
                csv.row(&[
                    k.to_string(),
                    num(r.alpha),
                    num(r.rho),
                    num(r.bound),
                    opt(r.norm2),
                    num(an.rho_products[k + 1]),
                    num(an.decay_bounds[k + 1]),
                    r.pass().to_string(),
                ]);
            }
            w.file("spectral.csv", csv)?;
            w.verdict(an.worst_equality_error <= SPECTRAL_TOL, format!("scaled_radius_equality: worst {:.3e}", an.worst_equality_error));
            w.verdict(an.worst_product_error <= SPECTRAL_TOL, format!("radius_product: worst {:.3e}", an.worst_product_error));
            w.verdict(an.bound_holds, "inverse_square_decay".to_string());
        }
        SpectralAnalysis::Gd => {
            let r = gd_rates(&q)?;
            let mut csv = Csv::new("spectral_gd", &hdr(&["step", "alpha", "rate", "rho"]));
            csv.row(&["optimal".into(), num(r.alpha_opt), num(r.rate_opt), num(r.rho_opt)]);
            csv.row(&["inverse_lip".into(), num(r.alpha_simple), num(r.rate_simple), num(r.rho_simple)]);
            w.file("spectral.csv", csv)?;
            w.verdict(r.pass(), format!("gd_rates: optimal {:.12e}, 1/L {:.12e}", r.rate_opt, r.rate_simple));
        }
    }
    Ok(())
}

fn flow_csv(kind: &str, t: &[f64], xs: &[Vector], values: &[f64], envelope: &[f64], value_name: &str) -> Csv {
    let d = xs.first().map_or(0, |x| x.len());
    let mut cols = vec!["t".to_string()];
    cols.extend((0..d).map(|i| format!("x{i}")));
    cols.push(value_name.into());
    cols.push("envelope".into());
    let mut csv = Csv::new(kind, &cols);
    for i in 0..t.len() {
        let mut row = vec![num(t[i])];
        row.extend(xs[i].iter().map(|&v| num(v)));
        row.push(num(values[i]));
        row.push(num(envelope[i]));
        csv.row(&row);
    }
    csv
}

fn flow_verdict(w: &mut Writer, v: &FlowVerdict) {
    for c in &v.checks {
        w.check("", c);
    }
}

fn exec_flow(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let built = build_problem(&config.problem, config.seed)?;
    if !built.composite.nonsmooth.is_zero() {
        return Err(semantic("problem.name", "flows need a smooth problem"));
    }
    let p = &built.composite.smooth;
    let reference = reference_of(p)?;
    let b = &config.budget;
    let slack = b.slack.unwrap_or(default_slack(b.tol));
    let rc = run_config(config, &built.composite)?;
    let x0 = rc.x0.clone();
    let v0 = rc.v0.clone().unwrap_or_else(|| x0.clone());
    match config.flow.model {
        FlowModel::Nag => {
            let traj = integrate_nag_flow(p, &x0, &v0, config.flow.gamma0.unwrap_or(p.lip), b.horizon, b.tol)?;
            let v = continuous_lyapunov_check(&traj, p, &reference, slack);
            w.file("flow.csv", flow_csv("flow_nag", &traj.t, &traj.x, &v.lyapunov, &v.envelope, "lyapunov"))?;
            flow_verdict(w, &v);
            w.note(format!("{} accepted / {} rejected steps", traj.stats.accepted, traj.stats.rejected));
        }
        FlowModel::Rescaled => {
            let gamma0 = config.flow.gamma0.unwrap_or(p.lip);
            let kind = match config.flow.rational_b {
                Some(bb) => RescaleKind::Rational { gamma0, b: bb },
                None => RescaleKind::ClosedForm { gamma0 },
            };
            let r = rescale_factor(kind, p.mu)?;
            let traj = integrate_rescaled(p, &r, config.flow.beta, &x0, &v0, b.horizon, b.tol)?;
            let v = rescaled_lyapunov_check(&traj, p, &reference, slack);
            w.file("flow.csv", flow_csv("flow_rescaled", &traj.tau, &traj.y, &v.lyapunov, &v.envelope, "lyapunov"))?;
            flow_verdict(w, &v);
        }
        FlowModel::Gradient | FlowModel::RescaledGradient => {
            let rescaled = config.flow.model == FlowModel::RescaledGradient;
            let traj = if rescaled {
                integrate_rescaled_gradient_flow(p, &x0, b.horizon, b.tol)?
            } else {
                integrate_gradient_flow(p, &x0, b.horizon, b.tol)?
            };
            let check = if rescaled {
                rescaled_gradient_check(&traj, p, &reference, slack)
            } else {
                sublinear_check(&traj, p, &reference, slack)
            };
            let gaps: Vec<f64> = traj.x.iter().map(|x| p.value(x) - reference.value).collect();
            let d0 = 0.5 * (&x0 - &reference.minimizer).norm_squared();
            let env: Vec<f64> = traj
                .t
                .iter()
                .map(|&t| if rescaled { (gaps[0] + d0) * (-t).exp() } else if t > 0.0 { d0 / t } else { f64::INFINITY })
                .collect();
            w.file("flow.csv", flow_csv("flow_gradient", &traj.t, &traj.x, &gaps, &env, "gap"))?;
            w.check("", &check);
        }
    }
    Ok(())
}

fn exec_schedule(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let s = &config.schedule;
    let sched = generate(s.rule, s.gamma0, s.mu, s.lip, config.budget.iterations)?;
    let mut csv = Csv::new("schedule", &hdr(&["k", "alpha", "gamma", "log_product", "log_bound"]));
    for k in 0..=sched.len() {
        let alpha = sched.alphas.get(k).copied().unwrap_or(f64::NAN);
        csv.row(&[k.to_string(), num(alpha), num(sched.gammas[k]), num(sched.log_products[k]), opt(sched.log_product_bound(k))]);
    }
    w.file("schedule.csv", csv)?;
    match sched.worst_product_excess() {
        Some(e) => w.verdict(e <= 1e-12, format!("product_bound: worst relative excess {e:.3e}")),
        None => w.note("no product bound for this rule".into()),
    }
    if let Some(bound) = sched.alpha_lower_bound() {
        let worst = sched.alphas.iter().map(|&a| bound - a).fold(f64::NEG_INFINITY, f64::max);
        w.verdict(sched.alphas.iter().all(|&a| a >= bound * (1.0 - 1e-15)), format!("alpha_lower_bound: worst shortfall {worst:.3e}"));
    }
    Ok(())
}
