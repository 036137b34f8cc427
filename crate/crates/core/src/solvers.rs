//! Discrete schemes for the NAG flow, one pure step function each, and a
//! driver that records Lyapunov values, contraction factors and envelopes.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::lyapunov::{discrete_lyapunov, rate_envelope};
use crate::problems::{CompositeProblem, Reference, SmoothProblem};
use crate::schedules::{gamma_next, solve_alpha, GammaMode, StepRule};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub x: Vector,
    pub v: Vector,
    pub gamma: f64,
    pub k: usize,
    /// Step size of the step that produced this state (NaN initially).
    pub last_alpha: f64,
    pub last_y: Option<Vector>,
}

impl SolverState {
    pub fn new(x0: Vector, v0: Vector, gamma0: f64) -> Self {
        Self { x: x0, v: v0, gamma: gamma0, k: 0, last_alpha: f64::NAN, last_y: None }
    }

    fn next(&self, x: Vector, v: Vector, gamma: f64, alpha: f64, y: Option<Vector>) -> Self {
        Self { x, v, gamma, k: self.k + 1, last_alpha: alpha, last_y: y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Gd,
    Implicit,
    Gs,
    GsCorrected,
    Nag,
    Oag1,
    Oag2,
    FistaSimple,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 8] = [
        SchemeKind::Gd,
        SchemeKind::Implicit,
        SchemeKind::Gs,
        SchemeKind::GsCorrected,
        SchemeKind::Nag,
        SchemeKind::Oag1,
        SchemeKind::Oag2,
        SchemeKind::FistaSimple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Gd => "gd",
            SchemeKind::Implicit => "implicit",
            SchemeKind::Gs => "gs",
            SchemeKind::GsCorrected => "gs_corrected",
            SchemeKind::Nag => "nag",
            SchemeKind::Oag1 => "oag1",
            SchemeKind::Oag2 => "oag2",
            SchemeKind::FistaSimple => "fista_simple",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
    }

    /// Schemes that need `g = 0`.
    pub fn requires_smooth(self) -> bool {
        matches!(self, SchemeKind::Gd | SchemeKind::Implicit | SchemeKind::Gs | SchemeKind::GsCorrected | SchemeKind::Nag)
    }

    /// Schemes driven by a user step size rather than a step rule.
    pub fn takes_step(self) -> bool {
        matches!(self, SchemeKind::Gd | SchemeKind::Implicit | SchemeKind::Gs)
    }

    pub fn step_rule(self) -> Option<StepRule> {
        match self {
            SchemeKind::GsCorrected | SchemeKind::Oag1 => Some(StepRule::Oag1),
            SchemeKind::Nag | SchemeKind::Oag2 | SchemeKind::FistaSimple => Some(StepRule::Nag),
            _ => None,
        }
    }

    /// Whether the driver tracks `(v, gamma)` and hence a Lyapunov value.
    pub fn has_lyapunov(self) -> bool {
        !matches!(self, SchemeKind::Gd | SchemeKind::FistaSimple)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown scheme {s:?} (valid: {})", Self::valid_names())))
    }
}

/// `x_{k+1}` choice in NAG. A custom update receives `(problem, y_k,
/// grad f(y_k))` and must satisfy `f(x_{k+1}) <= f(y_k) - |grad f(y_k)|^2/(2L)`.
#[derive(Clone, Default)]
pub enum XUpdate {
    #[default]
    GradientDescent,
    Custom(Arc<dyn Fn(&SmoothProblem, &Vector, &Vector) -> Vector + Send + Sync>),
}

impl fmt::Debug for XUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XUpdate::GradientDescent => f.write_str("GradientDescent"),
            XUpdate::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// `y - g/L`, written exactly as the gradient mapping computes its prox
/// argument so that `g = 0` composites reproduce the smooth schemes bit for bit.
fn gradient_step(y: &Vector, g: &Vector, lip: f64) -> Vector {
    y - g * (1.0 / lip)
}

fn check_dims(n: usize, state: &SolverState) -> Result<()> {
    for got in [state.x.len(), state.v.len()] {
        if got != n {
            return Err(Error::Dimension { expected: n, got });
        }
    }
    if !(state.gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {}", state.gamma)));
    }
    Ok(())
}

fn check_step(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("step size must be positive, got {alpha}")));
    }
    Ok(())
}

/// `x_{k+1} = x_k - alpha grad f(x_k)`; `v`, `gamma` untouched.
pub fn step_gd(problem: &SmoothProblem, state: &SolverState, alpha: f64) -> Result<SolverState> {
    check_step(alpha)?;
    let g = problem.gradient(&state.x);
    let x = &state.x - g * alpha;
    Ok(state.next(x, state.v.clone(), state.gamma, alpha, None))
}

/// Implicit Euler for the NAG flow:
///
/// ```text
/// (x1 - x)/a = v1 - x1
/// (v1 - v)/a = mu/g (x1 - v1) - grad f(x1)/g
/// g1 = (g + mu a)/(1 + a)
/// ```
///
/// Eliminating `v1 = x1 + (x1 - x)/a` leaves
/// `(g(1+a) + a mu) x1 + a^2 grad f(x1) = g(x + a v) + a mu x`, solved exactly
/// for quadratics and by damped Newton otherwise.
pub fn step_implicit(problem: &SmoothProblem, state: &SolverState, alpha: f64) -> Result<SolverState> {
    check_step(alpha)?;
    check_dims(problem.dim(), state)?;
    let (g, mu, a) = (state.gamma, problem.mu, alpha);
    let c = g * (1.0 + a) + a * mu;
    let rhs = (&state.x + &state.v * a) * g + &state.x * (a * mu);
    let n = problem.dim();
    let x1 = if let Some((am, b)) = problem.objective.quadratic() {
        let m = Matrix::identity(n, n) * c + am * (a * a);
        let r = rhs + b * (a * a);
        m.cholesky()
            .ok_or_else(|| Error::InnerSolve { iterations: 0, residual: f64::NAN })?
            .solve(&r)
    } else {
        implicit_newton(problem, &state.x, &rhs, c, a)?
    };
    let v1 = &x1 + (&x1 - &state.x) / a;
    let g1 = gamma_next(GammaMode::Implicit, g, a, mu)?;
    Ok(state.next(x1, v1, g1, a, None))
}

fn fd_hessian(problem: &SmoothProblem, z: &Vector) -> Matrix {
    let n = z.len();
    let mut h = Matrix::zeros(n, n);
    for j in 0..n {
        let step = 1e-6 * (1.0 + z[j].abs());
        let mut e = Vector::zeros(n);
        e[j] = step;
        let col = (problem.gradient(&(z + &e)) - problem.gradient(&(z - &e))) / (2.0 * step);
        h.set_column(j, &col);
    }
    (&h + h.transpose()) * 0.5
}

/// Damped Newton on `phi(z) = c z + a^2 grad f(z) - rhs`, warm-started at `z0`.
fn implicit_newton(problem: &SmoothProblem, z0: &Vector, rhs: &Vector, c: f64, a: f64) -> Result<Vector> {
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 100;
    let n = z0.len();
    let phi = |z: &Vector| z * c + problem.gradient(z) * (a * a) - rhs;
    let scale = rhs.norm().max(1.0);
    let mut z = z0.clone();
    let mut r = phi(&z);
    for it in 0..MAX_ITER {
        if r.norm() <= TOL * scale {
            return Ok(z);
        }
        let h = problem.objective.hessian(&z).unwrap_or_else(|| fd_hessian(problem, &z));
        let j = Matrix::identity(n, n) * c + h * (a * a);
        let dz = j
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&r))
            .or_else(|| j.lu().solve(&r))
            .ok_or(Error::InnerSolve { iterations: it, residual: r.norm() })?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let zt = &z - &dz * t;
            let rt = phi(&zt);
            if rt.norm() < r.norm() {
                z = zt;
                r = rt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r.norm() <= TOL * scale {
        Ok(z)
    } else {
        Err(Error::InnerSolve { iterations: MAX_ITER, residual: r.norm() / scale })
    }
}

fn rel(d: &Vector, a: &Vector, b: &Vector) -> f64 {
    d.norm() / a.norm().max(b.norm()).max(1.0)
}

/// Relative residual of the implicit system at `(old, new)`: the max over both
/// equations of `|lhs - rhs| / max(1, |lhs|, |rhs|)`.
pub fn implicit_residual(problem: &SmoothProblem, old: &SolverState, new: &SolverState, alpha: f64) -> f64 {
    let l1 = (&new.x - &old.x) / alpha;
    let r1 = &new.v - &new.x;
    let l2 = (&new.v - &old.v) / alpha;
    let r2 = (&new.x - &new.v) * (problem.mu / old.gamma) - problem.gradient(&new.x) / old.gamma;
    rel(&(&l1 - &r1), &l1, &r1).max(rel(&(&l2 - &r2), &l2, &r2))
}

/// Naive Gauss-Seidel splitting: `x1 = (x + a v)/(1 + a)` from the old `v`,
/// then `v1` from the equation that is linear in `v1`.
pub fn step_gs(problem: &SmoothProblem, state: &SolverState, alpha: f64) -> Result<SolverState> {
    check_step(alpha)?;
    check_dims(problem.dim(), state)?;
    let (g, mu, a) = (state.gamma, problem.mu, alpha);
    let x1 = (&state.x + &state.v * a) / (1.0 + a);
    let grad = problem.gradient(&x1);
    let v1 = (&state.v * g + &x1 * (a * mu) - grad * a) / (g + a * mu);
    let g1 = gamma_next(GammaMode::Implicit, g, a, mu)?;
    Ok(state.next(x1, v1, g1, a, None))
}

/// Gauss-Seidel with the extra gradient step, `L a^2 = g (1 + a)`.
pub fn step_gs_corrected(problem: &SmoothProblem, state: &SolverState) -> Result<SolverState> {
    check_dims(problem.dim(), state)?;
    let (g, mu, lip) = (state.gamma, problem.mu, problem.lip);
    let a = solve_alpha(StepRule::Oag1, g, mu, lip)?;
    let g1 = gamma_next(GammaMode::Implicit, g, a, mu)?;
    let y = (&state.x + &state.v * a) / (1.0 + a);
    let grad = problem.gradient(&y);
    let x1 = gradient_step(&y, &grad, lip);
    let v1 = (&state.v * g + &y * (mu * a) - grad * a) / (g + mu * a);
    Ok(state.next(x1, v1, g1, a, Some(y)))
}

/// Nesterov's accelerated gradient (estimate-sequence form).
pub fn step_nag(problem: &SmoothProblem, state: &SolverState, x_update: &XUpdate) -> Result<SolverState> {
    check_dims(problem.dim(), state)?;
    let (g, mu, lip) = (state.gamma, problem.mu, problem.lip);
    let a = solve_alpha(StepRule::Nag, g, mu, lip)?;
    let g1 = gamma_next(GammaMode::Explicit, g, a, mu)?;
    let y = (&state.v * (a * g) + &state.x * g1) / (g + mu * a);
    let grad = problem.gradient(&y);
    let x1 = match x_update {
        XUpdate::GradientDescent => gradient_step(&y, &grad, lip),
        XUpdate::Custom(f) => {
            let x1 = f(problem, &y, &grad);
            let fy = problem.value(&y);
            let lhs = problem.value(&x1);
            let rhs = fy - grad.norm_squared() / (2.0 * lip);
            if lhs > rhs + 1e-14 * fy.abs().max(1.0) {
                return Err(Error::DescentViolated { lhs, rhs });
            }
            x1
        }
    };
    let v1 = (&state.v * ((1.0 - a) * g) + (&y * mu - grad) * a) / g1;
    Ok(state.next(x1, v1, g1, a, Some(y)))
}

/// OAG method I: gradient-mapping version of the corrected Gauss-Seidel step.
pub fn step_oag1(problem: &CompositeProblem, state: &SolverState) -> Result<SolverState> {
    check_dims(problem.dim(), state)?;
    let (g, mu, lip) = (state.gamma, problem.mu(), problem.lip());
    let a = solve_alpha(StepRule::Oag1, g, mu, lip)?;
    let g1 = gamma_next(GammaMode::Implicit, g, a, mu)?;
    let y = (&state.x + &state.v * a) / (1.0 + a);
    let (gm, x1) = problem.gradient_mapping_point(&y, 1.0 / lip);
    let v1 = (&state.v * g + &y * (mu * a) - gm * a) / (g + mu * a);
    Ok(state.next(x1, v1, g1, a, Some(y)))
}

/// OAG method II: gradient-mapping version of NAG.
pub fn step_oag2(problem: &CompositeProblem, state: &SolverState) -> Result<SolverState> {
    check_dims(problem.dim(), state)?;
    let (g, mu, lip) = (state.gamma, problem.mu(), problem.lip());
    let a = solve_alpha(StepRule::Nag, g, mu, lip)?;
    let g1 = gamma_next(GammaMode::Explicit, g, a, mu)?;
    let y = (&state.v * (a * g) + &state.x * g1) / (g + mu * a);
    let (gm, x1) = problem.gradient_mapping_point(&y, 1.0 / lip);
    let v1 = (&state.v * ((1.0 - a) * g) + (&y * mu - gm) * a) / g1;
    Ok(state.next(x1, v1, g1, a, Some(y)))
}

/// Two-sequence form of OAG-II (FISTA when `mu = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct FistaState {
    pub x: Vector,
    pub y: Vector,
    /// `alpha_k`, paired with `y_k`.
    pub alpha: f64,
    pub k: usize,
}

impl FistaState {
    /// `y_0 = x_0`, `alpha_0` from `L a^2 = (1 - a) g0 + mu a`.
    pub fn new(problem: &CompositeProblem, x0: Vector, gamma0: f64) -> Result<Self> {
        let alpha = solve_alpha(StepRule::Nag, gamma0, problem.mu(), problem.lip())?;
        Ok(Self { y: x0.clone(), x: x0, alpha, k: 0 })
    }
}

/// ```text
/// x1 = y - G_F(y)/L
/// L a1^2 = L a^2 (1 - a1) + mu a1
/// y1 = x1 + b (x1 - x),  b = a(1 - a)/(a^2 + a1)
/// ```
pub fn step_fista(problem: &CompositeProblem, state: &FistaState) -> Result<FistaState> {
    let (mu, lip) = (problem.mu(), problem.lip());
    let a = state.alpha;
    let (_, x1) = problem.gradient_mapping_point(&state.y, 1.0 / lip);
    let a1 = solve_alpha(StepRule::Nag, lip * a * a, mu, lip)?;
    let beta = a * (1.0 - a) / (a * a + a1);
    let y1 = &x1 + (&x1 - &state.x) * beta;
    Ok(FistaState { x: x1, y: y1, alpha: a1, k: state.k + 1 })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub enum RestartPolicy {
    #[default]
    None,
    /// Reset `(gamma, v) <- (gamma_0, x)` every `period` steps; without a
    /// period, `round(e sqrt(4L/sigma))` is used.
    Fixed { period: Option<usize>, sigma: Option<f64> },
    /// Reset when `F(x_{k+1}) > F(x_k)`.
    Adaptive,
}

impl RestartPolicy {
    pub fn fixed_period(&self, lip: f64) -> Result<Option<usize>> {
        match self {
            RestartPolicy::Fixed { period: Some(p), .. } => {
                if *p == 0 {
                    return Err(Error::invalid("restart period must be >= 1"));
                }
                Ok(Some(*p))
            }
            RestartPolicy::Fixed { period: None, sigma: Some(s) } => {
                if !(*s > 0.0) {
                    return Err(Error::invalid(format!("restart sigma must be positive, got {s}")));
                }
                Ok(Some(optimal_restart_period(lip, *s)))
            }
            RestartPolicy::Fixed { period: None, sigma: None } => {
                Err(Error::invalid("fixed restart needs a period or sigma"))
            }
            _ => Ok(None),
        }
    }
}

/// `k* = round(e sqrt(4L/sigma))`, at least 1.
pub fn optimal_restart_period(lip: f64, sigma: f64) -> usize {
    ((std::f64::consts::E * (4.0 * lip / sigma).sqrt()).round() as usize).max(1)
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub max_iter: usize,
    /// Stop once `F(x_k) - F* <= gap_tol` (needs a reference).
    pub gap_tol: Option<f64>,
    /// Defaults to `L`.
    pub gamma0: Option<f64>,
    pub x0: Vector,
    /// Defaults to `x0`.
    pub v0: Option<Vector>,
    /// Step size for GD (default `1/L`), IMPLICIT (default 1) and GS
    /// (default `sqrt(mu/L)`, or `1/sqrt(L)` if `mu = 0`).
    pub step: Option<f64>,
    pub restart: RestartPolicy,
    pub x_update: XUpdate,
    /// Abort once the gap exceeds this multiple of the initial gap.
    pub divergence_factor: f64,
}

impl RunConfig {
    pub fn new(x0: Vector) -> Self {
        Self {
            max_iter: 500,
            gap_tol: None,
            gamma0: None,
            x0,
            v0: None,
            step: None,
            restart: RestartPolicy::None,
            x_update: XUpdate::GradientDescent,
            divergence_factor: 1e6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub x: Vector,
    pub v: Vector,
    pub gamma: f64,
    /// Step size that produced this record (NaN at k = 0).
    pub alpha: f64,
    pub value: f64,
    pub gap: Option<f64>,
    pub lyapunov: Option<f64>,
    /// `L_k / L_{k-1}`.
    pub factor: Option<f64>,
    pub envelope: Option<f64>,
    /// `|grad f(x_k)|^2`, recorded for naive GS only.
    pub grad_norm_sq: Option<f64>,
    /// `(gamma, v)` were reset after this step; `v`, `gamma`, `lyapunov`
    /// hold the post-reset values and `pre_restart_lyapunov` the value before.
    pub restart: bool,
    pub pre_restart_lyapunov: Option<f64>,
}

#[derive(Clone)]
pub struct RunTrace {
    pub scheme: SchemeKind,
    pub gamma0: f64,
    pub mu: f64,
    pub lip: f64,
    pub step: Option<f64>,
    pub reference: Option<Reference>,
    pub records: Vec<TraceRecord>,
    pub restarts: Vec<usize>,
}

impl fmt::Debug for RunTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let last = self.last();
        f.debug_struct("RunTrace")
            .field("scheme", &self.scheme)
            .field("iterations", &self.iterations())
            .field("last_gap", &last.gap)
            .field("last_lyapunov", &last.lyapunov)
            .field("restarts", &self.restarts.len())
            .finish_non_exhaustive()
    }
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace always holds the initial record")
    }
    pub fn gaps(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.gap).collect()
    }
}

enum Iterate {
    Three(SolverState),
    Two(FistaState),
}

impl Iterate {
    fn x(&self) -> &Vector {
        match self {
            Iterate::Three(s) => &s.x,
            Iterate::Two(s) => &s.x,
        }
    }
}

fn default_step(scheme: SchemeKind, mu: f64, lip: f64) -> Option<f64> {
    match scheme {
        SchemeKind::Gd => Some(1.0 / lip),
        SchemeKind::Implicit => Some(1.0),
        SchemeKind::Gs => Some(if mu > 0.0 { (mu / lip).sqrt() } else { 1.0 / lip.sqrt() }),
        _ => None,
    }
}

struct Segment {
    start: usize,
    gamma0: f64,
    gamma1: f64,
    l0: f64,
    c0: f64,
    log_prod: f64,
}

/// Runs `scheme` from `config` and records every iterate.
pub fn run(scheme: SchemeKind, problem: &CompositeProblem, config: &RunConfig) -> Result<RunTrace> {
    let (mu, lip) = (problem.mu(), problem.lip());
    let n = problem.dim();
    if scheme.requires_smooth() && !problem.nonsmooth.is_zero() {
        return Err(Error::SchemeMismatch { scheme: scheme.name().into(), reason: "requires a smooth problem (g = 0)".into() });
    }
    if config.x0.len() != n {
        return Err(Error::Dimension { expected: n, got: config.x0.len() });
    }
    let gamma0 = config.gamma0.unwrap_or(lip);
    if !(gamma0 > 0.0) {
        return Err(Error::invalid(format!("gamma0 must be positive, got {gamma0}")));
    }
    let v0 = config.v0.clone().unwrap_or_else(|| config.x0.clone());
    if v0.len() != n {
        return Err(Error::Dimension { expected: n, got: v0.len() });
    }
    let step = if scheme.takes_step() { config.step.or(default_step(scheme, mu, lip)) } else { None };
    if let Some(a) = step {
        check_step(a)?;
    }
    let period = config.restart.fixed_period(lip)?;
    let reference = problem.reference().ok();
    let smooth = &problem.smooth;

    let lyap = |s: &SolverState| -> Option<f64> {
        let r = reference.as_ref()?;
        scheme.has_lyapunov().then(|| discrete_lyapunov(problem, s, r).ok()).flatten()
    };
    let c0_of = |x: &Vector, v: &Vector| -> Option<f64> {
        let r = reference.as_ref()?;
        Some(problem.value(x) - r.value + 0.5 * lip * (v - &r.minimizer).norm_squared())
    };
    let gap_of = |value: f64| reference.as_ref().map(|r| value - r.value);
    let gamma1_of = |g0: f64| -> f64 {
        solve_alpha(StepRule::Nag, g0, mu, lip)
            .and_then(|a| gamma_next(GammaMode::Explicit, g0, a, mu))
            .unwrap_or(f64::NAN)
    };

    let mut it = if scheme == SchemeKind::FistaSimple {
        Iterate::Two(FistaState::new(problem, config.x0.clone(), gamma0)?)
    } else {
        Iterate::Three(SolverState::new(config.x0.clone(), v0.clone(), gamma0))
    };

    let value0 = problem.value(&config.x0);
    let l0 = match &it {
        Iterate::Three(s) => lyap(s),
        Iterate::Two(_) => None,
    };
    let mut seg = Segment {
        start: 0,
        gamma0,
        gamma1: gamma1_of(gamma0),
        l0: l0.unwrap_or(f64::NAN),
        c0: c0_of(&config.x0, &v0).unwrap_or(f64::NAN),
        log_prod: 0.0,
    };
    let grad_sq = |x: &Vector| (scheme == SchemeKind::Gs).then(|| smooth.gradient(x).norm_squared());
    let mut trace = RunTrace {
        scheme,
        gamma0,
        mu,
        lip,
        step,
        reference: reference.clone(),
        records: vec![TraceRecord {
            k: 0,
            x: config.x0.clone(),
            v: v0.clone(),
            gamma: if scheme.has_lyapunov() { gamma0 } else { f64::NAN },
            alpha: f64::NAN,
            value: value0,
            gap: gap_of(value0),
            lyapunov: l0,
            factor: None,
            envelope: l0.and_then(|l| envelope_for(scheme, 0, &seg, mu, lip).or(Some(l))),
            grad_norm_sq: grad_sq(&config.x0),
            restart: false,
            pre_restart_lyapunov: None,
        }],
        restarts: Vec::new(),
    };
    let gap0 = trace.records[0].gap;

    for k in 0..config.max_iter {
        let prev = trace.last();
        if let (Some(tol), Some(gap)) = (config.gap_tol, prev.gap) {
            if gap <= tol {
                break;
            }
        }
        let prev_value = prev.value;
        let prev_l = prev.lyapunov;

        it = match &it {
            Iterate::Three(s) => Iterate::Three(match scheme {
                SchemeKind::Gd => step_gd(smooth, s, step.unwrap())?,
                SchemeKind::Implicit => step_implicit(smooth, s, step.unwrap())?,
                SchemeKind::Gs => step_gs(smooth, s, step.unwrap())?,
                SchemeKind::GsCorrected => step_gs_corrected(smooth, s)?,
                SchemeKind::Nag => step_nag(smooth, s, &config.x_update)?,
                SchemeKind::Oag1 => step_oag1(problem, s)?,
                SchemeKind::Oag2 => step_oag2(problem, s)?,
                SchemeKind::FistaSimple => unreachable!(),
            }),
            Iterate::Two(f) => Iterate::Two(step_fista(problem, f)?),
        };
        let value = problem.value(it.x());
        let gap = gap_of(value);
        let mut rec = match &it {
            Iterate::Three(s) => {
                let l = lyap(s);
                TraceRecord {
                    k: k + 1,
                    x: s.x.clone(),
                    v: s.v.clone(),
                    gamma: if scheme.has_lyapunov() { s.gamma } else { f64::NAN },
                    alpha: s.last_alpha,
                    value,
                    gap,
                    lyapunov: l,
                    factor: l.zip(prev_l).map(|(a, b)| a / b),
                    envelope: None,
                    grad_norm_sq: grad_sq(&s.x),
                    restart: false,
                    pre_restart_lyapunov: None,
                }
            }
            Iterate::Two(f) => TraceRecord {
                k: k + 1,
                x: f.x.clone(),
                v: f.y.clone(),
                gamma: f64::NAN,
                alpha: f.alpha,
                value,
                gap,
                lyapunov: None,
                factor: None,
                envelope: None,
                grad_norm_sq: None,
                restart: false,
                pre_restart_lyapunov: None,
            },
        };
        if scheme == SchemeKind::Implicit {
            seg.log_prod -= step.unwrap().ln_1p();
        }
        rec.envelope = envelope_for(scheme, k + 1 - seg.start, &seg, mu, lip);

        // divergence guard
        if let (Some(g), Some(g0)) = (gap, gap0) {
            let blown = !g.is_finite() || (g0 > 0.0 && g > config.divergence_factor * g0);
            if blown {
                trace.records.push(rec);
                return Err(Error::Diverged { k: k + 1, gap: g, factor: config.divergence_factor, trace: Box::new(trace) });
            }
        }
        if !value.is_finite() {
            trace.records.push(rec);
            return Err(Error::Diverged { k: k + 1, gap: value, factor: config.divergence_factor, trace: Box::new(trace) });
        }

        let restart_now = match &config.restart {
            RestartPolicy::None => false,
            RestartPolicy::Fixed { .. } => (k + 1 - seg.start) % period.unwrap() == 0,
            RestartPolicy::Adaptive => value > prev_value,
        };
        if restart_now {
            match &mut it {
                Iterate::Three(s) => {
                    s.v = s.x.clone();
                    s.gamma = gamma0;
                    rec.pre_restart_lyapunov = rec.lyapunov;
                    rec.v = s.v.clone();
                    if scheme.has_lyapunov() {
                        rec.gamma = gamma0;
                    }
                    rec.lyapunov = lyap(s);
                    rec.factor = None;
                }
                Iterate::Two(f) => {
                    *f = FistaState::new(problem, f.x.clone(), gamma0)?;
                    rec.v = f.y.clone();
                }
            }
            rec.restart = true;
            trace.restarts.push(k + 1);
            seg = Segment {
                start: k + 1,
                gamma0,
                gamma1: gamma1_of(gamma0),
                l0: rec.lyapunov.unwrap_or(f64::NAN),
                c0: c0_of(&rec.x, &rec.v).unwrap_or(f64::NAN),
                log_prod: 0.0,
            };
            rec.envelope = envelope_for(scheme, 0, &seg, mu, lip);
        }
        trace.records.push(rec);
    }
    Ok(trace)
}

fn envelope_for(scheme: SchemeKind, k: usize, seg: &Segment, mu: f64, lip: f64) -> Option<f64> {
    if !seg.l0.is_finite() {
        return None;
    }
    match scheme {
        SchemeKind::Implicit => Some(seg.l0 * seg.log_prod.exp()),
        SchemeKind::GsCorrected | SchemeKind::Nag | SchemeKind::Oag1 | SchemeKind::Oag2 => {
            rate_envelope(scheme, k, seg.gamma0, seg.gamma1, mu, lip, seg.l0, seg.c0).ok()
        }
        _ => None,
    }
}

/// [`run`] with `policy` substituted into the config.
pub fn restart_wrap(inner: SchemeKind, policy: RestartPolicy, problem: &CompositeProblem, config: &RunConfig) -> Result<RunTrace> {
    let mut cfg = config.clone();
    cfg.restart = policy;
    run(inner, problem, &cfg)
}
