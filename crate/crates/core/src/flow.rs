//! Continuous-time models: the NAG flow
//!
//! ```text
//! x' = v - x,   gamma v' = mu (x - v) - grad f(x),   gamma' = mu - gamma,
//! ```
//!
//! its time-rescaled form, and the plain gradient flow, together with
//! numerical certificates of their Lyapunov decay.

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::lyapunov::Check;
use crate::ode::{dopri5, Stats, StepControl};
use crate::problems::{Reference, SmoothProblem};
use crate::schedules::RescaleFactor;

/// Allowed `|gamma(t) - (mu + (gamma0 - mu) e^-t)| / max(1, gamma0)`.
pub const GAMMA_TOL: f64 = 1e-8;
/// Allowed `beta(tau) - (mu + (gamma0 - mu) e^{-int alpha})`.
pub const BETA_TOL: f64 = 1e-6;

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-12..=1e-4).contains(&tol) {
        return Err(Error::invalid(format!("integrator tolerance must lie in [1e-12, 1e-4], got {tol}")));
    }
    Ok(())
}

fn check_start(problem: &SmoothProblem, xs: &[&Vector], t_end: f64) -> Result<()> {
    for x in xs {
        if x.len() != problem.dim() {
            return Err(Error::Dimension { expected: problem.dim(), got: x.len() });
        }
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!("time horizon must be positive, got {t_end}")));
    }
    Ok(())
}

fn split(z: &Vector, d: usize) -> (Vector, Vector) {
    (z.rows(0, d).into_owned(), z.rows(d, d).into_owned())
}

fn stack(parts: &[&Vector], extra: &[f64]) -> Vector {
    let n: usize = parts.iter().map(|p| p.len()).sum::<usize>() + extra.len();
    let mut z = Vector::zeros(n);
    let mut at = 0;
    for p in parts {
        z.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    for (i, e) in extra.iter().enumerate() {
        z[at + i] = *e;
    }
    z
}

pub fn reference_of(problem: &SmoothProblem) -> Result<Reference> {
    let minimizer = problem.minimizer.clone().ok_or(Error::MissingReference)?;
    let value = problem.value(&minimizer);
    Ok(Reference { minimizer, value })
}

#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vector>,
    pub v: Vec<Vector>,
    /// Integrated jointly with `(x, v)`.
    pub gamma: Vec<f64>,
    pub mu: f64,
    pub gamma0: f64,
    pub stats: Stats,
}

impl FlowTrajectory {
    pub fn gamma_closed_form(&self, t: f64) -> f64 {
        self.mu + (self.gamma0 - self.mu) * (-t).exp()
    }

    /// `max_t |gamma(t) - closed form| / max(1, gamma0)`; the integrator
    /// controls relative error, so the deviation scales with `gamma0`.
    pub fn gamma_error(&self) -> f64 {
        let scale = self.gamma0.max(1.0);
        self.t.iter().zip(&self.gamma).map(|(&t, &g)| (g - self.gamma_closed_form(t)).abs() / scale).fold(0.0, f64::max)
    }
}

/// Adaptive DOPRI5 integration of the NAG flow on `[0, t_end]` with
/// `x(0) = x0`, `v(0) = v0`, `gamma(0) = gamma0`.
pub fn integrate_nag_flow(
    problem: &SmoothProblem,
    x0: &Vector,
    v0: &Vector,
    gamma0: f64,
    t_end: f64,
    tol: f64,
) -> Result<FlowTrajectory> {
    check_tol(tol)?;
    check_start(problem, &[x0, v0], t_end)?;
    if !(gamma0 > 0.0) {
        return Err(Error::invalid(format!("gamma0 must be positive, got {gamma0}")));
    }
    let (d, mu) = (problem.dim(), problem.mu);
    let rhs = |_t: f64, z: &Vector| {
        let (x, v) = split(z, d);
        let gamma = z[2 * d];
        let dx = &v - &x;
        let dv = ((&x - &v) * mu - problem.gradient(&x)) / gamma;
        stack(&[&dx, &dv], &[mu - gamma])
    };
    let sol = dopri5(rhs, 0.0, &stack(&[x0, v0], &[gamma0]), t_end, StepControl::Adaptive { tol })?;
    let mut traj = FlowTrajectory {
        t: sol.t,
        x: Vec::with_capacity(sol.y.len()),
        v: Vec::with_capacity(sol.y.len()),
        gamma: Vec::with_capacity(sol.y.len()),
        mu,
        gamma0,
        stats: sol.stats,
    };
    for z in &sol.y {
        let (x, v) = split(z, d);
        traj.x.push(x);
        traj.v.push(v);
        traj.gamma.push(z[2 * d]);
    }
    Ok(traj)
}

#[derive(Clone, Debug)]
pub struct FlowVerdict {
    /// Lyapunov value at every sample.
    pub lyapunov: Vec<f64>,
    /// Decay envelope at every sample.
    pub envelope: Vec<f64>,
    pub checks: Vec<Check>,
}

impl FlowVerdict {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `e^{w_i} L_i` non-increasing and `L_i <= e^{-w_i} L_0`, relative to `slack`.
fn weighted_decay(lyap: &[f64], weights: &[f64], slack: f64) -> (Check, Check, Vec<f64>) {
    let floor = (1e-14 * lyap[0]).max(f64::MIN_POSITIVE);
    let mut mono = Check::with_tol("scaled_lyapunov_monotone", slack);
    let mut env = Check::with_tol("decay_envelope", slack);
    let mut envelope = Vec::with_capacity(lyap.len());
    let mut prev = lyap[0];
    for (i, (&l, &w)) in lyap.iter().zip(weights).enumerate() {
        let scaled = w.exp() * l;
        if i > 0 {
            mono.observe(i, (scaled - prev) / (prev + floor));
        }
        env.observe(i, (scaled - lyap[0]) / (lyap[0] + floor));
        envelope.push((-w).exp() * lyap[0]);
        prev = scaled;
    }
    (mono, env, envelope)
}

/// `100 tol`, the slack used for flow certificates by default.
pub fn default_slack(tol: f64) -> f64 {
    100.0 * tol
}

/// Certifies `L(t) = f(x) - f* + gamma/2 |v - x*|^2` along a NAG-flow
/// trajectory: `e^t L(t)` non-increasing, `L(t) <= e^-t L(0)`, and `gamma`
/// on its closed form.
pub fn continuous_lyapunov_check(
    traj: &FlowTrajectory,
    problem: &SmoothProblem,
    reference: &Reference,
    slack: f64,
) -> FlowVerdict {
    let lyap: Vec<f64> = traj
        .x
        .iter()
        .zip(&traj.v)
        .zip(&traj.gamma)
        .map(|((x, v), &g)| problem.value(x) - reference.value + 0.5 * g * (v - &reference.minimizer).norm_squared())
        .collect();
    let (mono, env, envelope) = weighted_decay(&lyap, &traj.t, slack);
    let mut gamma = Check::with_tol("gamma_closed_form", GAMMA_TOL);
    for (i, (&t, &g)) in traj.t.iter().zip(&traj.gamma).enumerate() {
        gamma.observe(i, (g - traj.gamma_closed_form(t)).abs() / traj.gamma0.max(1.0));
    }
    FlowVerdict { lyapunov: lyap, envelope, checks: vec![mono, env, gamma] }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaMode {
    /// `beta = alpha^2`.
    AlphaSquared,
    /// `beta' = alpha (mu - beta)`.
    Equality,
}

#[derive(Clone, Debug)]
pub struct RescaledTrajectory {
    pub tau: Vec<f64>,
    pub y: Vec<Vector>,
    pub w: Vec<Vector>,
    pub beta: Vec<f64>,
    /// `int_0^tau alpha`, integrated as an extra state.
    pub alpha_integral: Vec<f64>,
    pub rescale: RescaleFactor,
    pub mode: BetaMode,
    pub stats: Stats,
}

/// Integrates `y' = alpha (w - y)`, `beta w' = mu alpha (y - w) - alpha grad f(y)`
/// with `y(0) = x0`, `w(0) = v0`, `beta(0) = gamma0`.
pub fn integrate_rescaled(
    problem: &SmoothProblem,
    rescale: &RescaleFactor,
    mode: BetaMode,
    x0: &Vector,
    v0: &Vector,
    tau_end: f64,
    tol: f64,
) -> Result<RescaledTrajectory> {
    check_tol(tol)?;
    check_start(problem, &[x0, v0], tau_end)?;
    if rescale.mu != problem.mu {
        return Err(Error::invalid(format!("rescale built for mu = {}, problem has mu = {}", rescale.mu, problem.mu)));
    }
    let (d, mu) = (problem.dim(), problem.mu);
    let rhs = |tau: f64, z: &Vector| {
        let (y, w) = split(z, d);
        let beta = z[2 * d];
        let a = rescale.evaluate(tau);
        let dy = (&w - &y) * a;
        let dw = ((&y - &w) * (mu * a) - problem.gradient(&y) * a) / beta;
        let dbeta = match mode {
            BetaMode::AlphaSquared => 2.0 * a * rescale.derivative(tau),
            BetaMode::Equality => a * (mu - beta),
        };
        stack(&[&dy, &dw], &[dbeta, a])
    };
    let z0 = stack(&[x0, v0], &[rescale.gamma0(), 0.0]);
    let sol = dopri5(rhs, 0.0, &z0, tau_end, StepControl::Adaptive { tol })?;
    let mut traj = RescaledTrajectory {
        tau: sol.t,
        y: Vec::new(),
        w: Vec::new(),
        beta: Vec::new(),
        alpha_integral: Vec::new(),
        rescale: *rescale,
        mode,
        stats: sol.stats,
    };
    for z in &sol.y {
        let (y, w) = split(z, d);
        traj.y.push(y);
        traj.w.push(w);
        traj.beta.push(z[2 * d]);
        traj.alpha_integral.push(z[2 * d + 1]);
    }
    Ok(traj)
}

/// Certifies the rescaled Lyapunov function `f(y) - f* + beta/2 |w - x*|^2`:
/// `e^{int alpha} L~` non-increasing, `L~(tau) <= e^{-int alpha} L~(0)` with
/// the closed-form integral, `beta` below its bound, and the quadrature of
/// `int alpha` on its closed form.
pub fn rescaled_lyapunov_check(
    traj: &RescaledTrajectory,
    problem: &SmoothProblem,
    reference: &Reference,
    slack: f64,
) -> FlowVerdict {
    let lyap: Vec<f64> = traj
        .y
        .iter()
        .zip(&traj.w)
        .zip(&traj.beta)
        .map(|((y, w), &b)| problem.value(y) - reference.value + 0.5 * b * (w - &reference.minimizer).norm_squared())
        .collect();
    let closed: Vec<f64> = traj.tau.iter().map(|&t| traj.rescale.integral(t)).collect();
    let (mono, env, envelope) = weighted_decay(&lyap, &closed, slack);
    let (mu, g0) = (traj.rescale.mu, traj.rescale.gamma0());
    let mut beta = Check::with_tol("beta_bound", BETA_TOL);
    let mut quad = Check::with_tol("alpha_integral", slack);
    for (i, (&b, (&q, &c))) in traj.beta.iter().zip(traj.alpha_integral.iter().zip(&closed)).enumerate() {
        beta.observe(i, b - (mu + (g0 - mu) * (-q).exp()));
        quad.observe(i, (q - c).abs() / c.abs().max(1.0));
    }
    FlowVerdict { lyapunov: lyap, envelope, checks: vec![mono, env, beta, quad] }
}

#[derive(Clone, Debug)]
pub struct GradientTrajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vector>,
    pub stats: Stats,
}

fn gradient_trajectory(problem: &SmoothProblem, x0: &Vector, t_end: f64, tol: f64, time_scale: fn(f64) -> f64) -> Result<GradientTrajectory> {
    check_tol(tol)?;
    check_start(problem, &[x0], t_end)?;
    let sol = dopri5(|t, x| -problem.gradient(x) * time_scale(t), 0.0, x0, t_end, StepControl::Adaptive { tol })?;
    Ok(GradientTrajectory { t: sol.t, x: sol.y, stats: sol.stats })
}

/// `x' = -grad f(x)`, `x(0) = x0`.
pub fn integrate_gradient_flow(problem: &SmoothProblem, x0: &Vector, t_end: f64, tol: f64) -> Result<GradientTrajectory> {
    gradient_trajectory(problem, x0, t_end, tol, |_| 1.0)
}

/// The gradient flow under `t = e^s`: `gamma(s) y' = -grad f(y)` with
/// `gamma(s) = e^-s` (so `gamma' = -gamma`, `gamma(0) = 1`); `y(s)` equals
/// `x(e^s)` for the gradient flow passing through `y0` at `t = 1`.
pub fn integrate_rescaled_gradient_flow(
    problem: &SmoothProblem,
    y0: &Vector,
    s_end: f64,
    tol: f64,
) -> Result<GradientTrajectory> {
    gradient_trajectory(problem, y0, s_end, tol, f64::exp)
}

/// Checks `weight(t) (f(x(t)) - f*) <= c` over samples with `t >= t_from`;
/// violations are relative to `c`.
pub fn weighted_gap_check(
    name: &'static str,
    traj: &GradientTrajectory,
    problem: &SmoothProblem,
    reference: &Reference,
    t_from: f64,
    weight: impl Fn(f64) -> f64,
    c: f64,
    slack: f64,
) -> Check {
    let mut check = Check::with_tol(name, slack);
    for (i, (&t, x)) in traj.t.iter().zip(&traj.x).enumerate() {
        if t >= t_from {
            check.observe(i, (weight(t) * (problem.value(x) - reference.value) - c) / c.max(f64::MIN_POSITIVE));
        }
    }
    check
}

/// `f(x(t)) - f* <= |x0 - x*|^2 / (2t)` for the convex gradient flow.
pub fn sublinear_check(traj: &GradientTrajectory, problem: &SmoothProblem, reference: &Reference, slack: f64) -> Check {
    let c = 0.5 * (&traj.x[0] - &reference.minimizer).norm_squared();
    weighted_gap_check("sublinear_gap", traj, problem, reference, 0.0, |t| t, c, slack)
}

/// `e^s (f(y(s)) - f*) <= C` along the rescaled gradient flow started at
/// `y0`, with `C = f(y0) - f* + |y0 - x*|^2/2`. This follows from
/// `gap(t) <= min(gap(1), |y0 - x*|^2/(2(t - 1)))` for the gradient flow
/// through `y0` at `t = 1`, with `t = e^s`.
pub fn rescaled_gradient_check(traj: &GradientTrajectory, problem: &SmoothProblem, reference: &Reference, slack: f64) -> Check {
    let y0 = &traj.x[0];
    let c = problem.value(y0) - reference.value + 0.5 * (y0 - &reference.minimizer).norm_squared();
    weighted_gap_check("rescaled_exponential_gap", traj, problem, reference, 0.0, f64::exp, c, slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::problems::{catalog, make_quadratic};
    use crate::schedules::{rescale_factor, RescaleKind};

    fn diag(xs: &[f64]) -> SmoothProblem {
        make_quadratic(Matrix::from_diagonal(&Vector::from_row_slice(xs))).unwrap().smooth
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn equilibrium_is_constant() {
        let p = diag(&[1.0, 3.0]);
        let zero = Vector::zeros(2);
        let traj = integrate_nag_flow(&p, &zero, &zero, 2.0, 5.0, 1e-9).unwrap();
        assert!(traj.x.iter().chain(&traj.v).all(|x| x.norm() == 0.0));
        let verdict = continuous_lyapunov_check(&traj, &p, &reference_of(&p).unwrap(), 1e-7);
        assert!(verdict.lyapunov.iter().all(|&l| l == 0.0));
        assert!(verdict.pass());
        let g = integrate_gradient_flow(&p, &zero, 3.0, 1e-9).unwrap();
        assert!(g.x.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn scalar_flow_matches_matrix_exponential() {
        // f = x^2/2, mu = gamma0 = 1: z' = [[-1, 1], [0, -1]] z, a Jordan block
        let p = diag(&[1.0]);
        let tol = 1e-9;
        let (x0, v0) = (v(&[1.0]), v(&[-2.0]));
        let traj = integrate_nag_flow(&p, &x0, &v0, 1.0, 5.0, tol).unwrap();
        let g = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        let z0 = v(&[1.0, -2.0]);
        for i in 0..traj.t.len() {
            let z = (&g * traj.t[i]).exp() * &z0;
            assert!((traj.x[i][0] - z[0]).abs() <= 10.0 * tol && (traj.v[i][0] - z[1]).abs() <= 10.0 * tol);
            assert_eq!(traj.gamma[i], 1.0);
        }
    }

    #[test]
    fn gamma_follows_closed_form() {
        let p = diag(&[0.5, 2.0]);
        let traj = integrate_nag_flow(&p, &v(&[1.0, 1.0]), &v(&[0.0, 2.0]), 3.0, 5.0, 1e-10).unwrap();
        let g5 = *traj.gamma.last().unwrap();
        assert!((g5 - (0.5 + 2.5 * (-5f64).exp())).abs() <= GAMMA_TOL);
        assert!(traj.gamma_error() <= GAMMA_TOL);
    }

    #[test]
    fn lyapunov_decays_on_two_dim_quadratic() {
        let p = diag(&[1.0, 10.0]);
        let tol = 1e-9;
        let x0 = v(&[1.0, 1.0]);
        for gamma0 in [1.0, 10.0] {
            let traj = integrate_nag_flow(&p, &x0, &x0, gamma0, 10.0, tol).unwrap();
            let verdict = continuous_lyapunov_check(&traj, &p, &reference_of(&p).unwrap(), 1e-6);
            assert!(verdict.pass(), "{:?}", verdict.checks);
            let (l0, lt) = (verdict.lyapunov[0], *verdict.lyapunov.last().unwrap());
            assert!(lt <= (-10f64).exp() * l0 * (1.0 + 1e-6));
        }
    }

    #[test]
    fn lyapunov_decays_across_smooth_catalog() {
        for entry in catalog::standard().unwrap() {
            if !entry.problem.nonsmooth.is_zero() {
                continue;
            }
            let p = &entry.problem.smooth;
            let x0 = Vector::from_element(p.dim(), 1.0);
            let v0 = Vector::zeros(p.dim());
            let traj = integrate_nag_flow(p, &x0, &v0, p.lip, 10.0, 1e-9).unwrap();
            let verdict = continuous_lyapunov_check(&traj, p, &reference_of(p).unwrap(), 1e-6);
            assert!(verdict.pass(), "{}: {:?}", entry.name, verdict.checks);
        }
    }

    #[test]
    fn rescaled_constant_factor() {
        // gamma0 = mu: alpha = sqrt(mu), damping 2 sqrt(mu), decay e^{-sqrt(mu) tau}
        let p = diag(&[0.25, 1.0]);
        let r = rescale_factor(RescaleKind::ClosedForm { gamma0: 0.25 }, 0.25).unwrap();
        for tau in [0.0, 1.0, 7.5] {
            assert!((r.evaluate(tau) - 0.5).abs() < 1e-15);
            assert!((r.damping(tau) - 1.0).abs() < 1e-15);
        }
        let x0 = v(&[1.0, -1.0]);
        let traj = integrate_rescaled(&p, &r, BetaMode::AlphaSquared, &x0, &x0, 20.0, 1e-10).unwrap();
        assert_eq!((traj.y[0].clone(), traj.beta[0]), (x0.clone(), 0.25));
        let verdict = rescaled_lyapunov_check(&traj, &p, &reference_of(&p).unwrap(), 1e-6);
        assert!(verdict.pass(), "{:?}", verdict.checks);
        let ratio = verdict.lyapunov.last().unwrap() / verdict.lyapunov[0];
        assert!(ratio <= (-0.5f64 * 20.0).exp() * (1.0 + 1e-6));
    }

    #[test]
    fn rescaled_convex_model() {
        // mu = 0, gamma0 = 4, b = 2: alpha = 2/(tau + 1), damping 3/(tau + 1)
        let p = diag(&[0.0, 1.0, 4.0]);
        let r = rescale_factor(RescaleKind::Rational { gamma0: 4.0, b: 2.0 }, 0.0).unwrap();
        for i in 0..=100 {
            let tau = i as f64 * 0.5;
            assert!((r.damping(tau) - 3.0 / (tau + 1.0)).abs() <= 1e-10);
        }
        let x0 = v(&[0.3, 1.0, -1.0]);
        let reference = reference_of(&p).unwrap();
        for mode in [BetaMode::AlphaSquared, BetaMode::Equality] {
            let traj = integrate_rescaled(&p, &r, mode, &x0, &x0, 50.0, 1e-10).unwrap();
            let verdict = rescaled_lyapunov_check(&traj, &p, &reference, 1e-6);
            assert!(verdict.pass(), "{mode:?}: {:?}", verdict.checks);
            // L~(tau) <= L~(0)/(tau + 1)^2
            for (&tau, &l) in traj.tau.iter().zip(&verdict.lyapunov) {
                assert!(l <= verdict.lyapunov[0] / (tau + 1.0).powi(2) * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn rescaled_matches_second_order_model() {
        // with beta = alpha^2, y solves y'' + damping(tau) y' + grad f(y) = 0
        let p = diag(&[0.0, 1.0, 4.0]);
        let r = rescale_factor(RescaleKind::Rational { gamma0: 4.0, b: 2.0 }, 0.0).unwrap();
        let (x0, w0) = (v(&[0.3, 1.0, -1.0]), v(&[0.0, 0.5, 0.5]));
        let tol = 1e-11;
        let traj = integrate_rescaled(&p, &r, BetaMode::AlphaSquared, &x0, &w0, 10.0, tol).unwrap();
        let z0 = stack(&[&x0, &((&w0 - &x0) * r.evaluate(0.0))], &[]);
        let rhs = |tau: f64, z: &Vector| {
            let (y, dy) = split(z, 3);
            let ddy = -&dy * r.damping(tau) - p.gradient(&y);
            stack(&[&dy, &ddy], &[])
        };
        let sol = dopri5(rhs, 0.0, &z0, 10.0, StepControl::Adaptive { tol }).unwrap();
        assert!((traj.y.last().unwrap() - split(sol.last().1, 3).0).amax() < 1e-8);
    }

    #[test]
    fn gradient_flow_scalar_closed_form() {
        let p = diag(&[1.0]);
        let tol = 1e-9;
        let traj = integrate_gradient_flow(&p, &v(&[2.0]), 8.0, tol).unwrap();
        for (t, x) in traj.t.iter().zip(&traj.x) {
            assert!((x[0] - 2.0 * (-t).exp()).abs() <= 10.0 * tol);
        }
    }

    #[test]
    fn gradient_flow_sublinear_rate() {
        let p = diag(&[0.0, 1.0]);
        let reference = reference_of(&p).unwrap();
        let x0 = v(&[1.0, 1.0]);
        let traj = integrate_gradient_flow(&p, &x0, 100.0, 1e-10).unwrap();
        assert!(sublinear_check(&traj, &p, &reference, 1e-8).pass);
        // constant fitted at t = 1: t f(x(t)) bounded by it on [1, 100]
        let at1 = integrate_gradient_flow(&p, &x0, 1.0, 1e-10).unwrap();
        let c1 = p.value(at1.x.last().unwrap()) - reference.value;
        let fitted = weighted_gap_check("fitted", &traj, &p, &reference, 1.0, |t| t, c1, 1e-8);
        assert!(fitted.pass, "{fitted}");

        // rescaled time: y(s) = x(e^s), f(y(s)) <= C e^-s
        let y0 = at1.x.last().unwrap();
        let s_end = 100f64.ln();
        let re = integrate_rescaled_gradient_flow(&p, y0, s_end, 1e-10).unwrap();
        assert!((re.x.last().unwrap() - traj.x.last().unwrap()).amax() < 1e-8);
        let c = 0.5 * (&x0 - &reference.minimizer).norm_squared();
        assert!(weighted_gap_check("exp", &re, &p, &reference, 0.0, f64::exp, c, 1e-8).pass);
        // started anywhere, with the constant valid for any start
        let p = diag(&[0.0, 0.01, 1.0]);
        let re = integrate_rescaled_gradient_flow(&p, &v(&[1.0, 1.0, 1.0]), 8.0, 1e-10).unwrap();
        assert!(rescaled_gradient_check(&re, &p, &reference_of(&p).unwrap(), 1e-8).pass);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = diag(&[1.0]);
        let x = v(&[1.0]);
        assert!(integrate_nag_flow(&p, &x, &x, 1.0, 1.0, 1e-3).is_err());
        assert!(integrate_nag_flow(&p, &x, &x, 0.0, 1.0, 1e-8).is_err());
        assert!(integrate_nag_flow(&p, &x, &x, 1.0, 0.0, 1e-8).is_err());
        assert!(integrate_nag_flow(&p, &v(&[1.0, 2.0]), &x, 1.0, 1.0, 1e-8).is_err());
    }
}
