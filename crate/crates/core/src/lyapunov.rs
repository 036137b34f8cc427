//! Lyapunov values `L_k = F(x_k) - F* + gamma_k/2 |v_k - x*|^2`, the proved
//! rate envelopes, and per-trace verification.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::problems::{CompositeProblem, Reference};
use crate::solvers::{RunTrace, SchemeKind, SolverState};

/// Relative tolerance for contraction and envelope checks.
pub const RTOL: f64 = 1e-10;
/// Absolute floor added to the relative tolerance (rounding in `|.|^2`).
pub const ATOL: f64 = 1e-14;

pub fn lyapunov_value(problem: &CompositeProblem, x: &Vector, v: &Vector, gamma: f64, reference: &Reference) -> f64 {
    problem.value(x) - reference.value + 0.5 * gamma * (v - &reference.minimizer).norm_squared()
}

pub fn discrete_lyapunov(problem: &CompositeProblem, state: &SolverState, reference: &Reference) -> Result<f64> {
    if reference.minimizer.len() != problem.dim() {
        return Err(Error::Dimension { expected: problem.dim(), got: reference.minimizer.len() });
    }
    Ok(lyapunov_value(problem, &state.x, &state.v, state.gamma, reference))
}

/// `(lhs - rhs) / (|rhs| + ATOL/RTOL)`; at most `RTOL` exactly when
/// `lhs <= rhs (1 + RTOL) + ATOL` (for `rhs >= 0`).
pub fn relative_violation(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs) / (rhs.abs() + ATOL / RTOL)
}

/// Proved bound on `L_k` for the four explicit accelerated schemes.
///
/// ```text
/// GS_CORRECTED, OAG1: L0 min{4L/(sqrt(g0) k + 2 sqrt L)^2, (1 + sqrt(min{g0, mu}/L))^-k}
/// NAG, OAG2:          L0 min{4L/(sqrt(g0) k + 2 sqrt L)^2, (1 - sqrt(min{g1, mu}/L))^k}
/// ```
///
/// When `g0 >= L` and `k >= 1` the sharper-constant forms are used instead:
/// `C0 min{4/k^2, (1 + sqrt(mu/L))^(1-k)}` and `C0 min{4/k^2, (1 - sqrt(mu/L))^(k-1)}`,
/// with `C0 = F(x0) - F* + L/2 |v0 - x*|^2`.
#[allow(clippy::too_many_arguments)]
pub fn rate_envelope(
    scheme: SchemeKind,
    k: usize,
    gamma0: f64,
    gamma1: f64,
    mu: f64,
    lip: f64,
    l0: f64,
    c0: f64,
) -> Result<f64> {
    let implicit_family = match scheme {
        SchemeKind::GsCorrected | SchemeKind::Oag1 => true,
        SchemeKind::Nag | SchemeKind::Oag2 => false,
        other => return Err(Error::NoEnvelope { scheme: other.name().into() }),
    };
    if k == 0 {
        return Ok(l0);
    }
    let kf = k as f64;
    if gamma0 >= lip {
        let r = (mu / lip).sqrt();
        let lin = if implicit_family { (1.0 + r).powf(1.0 - kf) } else { (1.0 - r).powf(kf - 1.0) };
        return Ok(c0 * (4.0 / (kf * kf)).min(lin));
    }
    let sub = 4.0 * lip / (gamma0.sqrt() * kf + 2.0 * lip.sqrt()).powi(2);
    let lin = if implicit_family {
        (1.0 + (gamma0.min(mu) / lip).sqrt()).powf(-kf)
    } else {
        (1.0 - (gamma1.min(mu) / lip).sqrt()).powf(kf)
    };
    Ok(l0 * sub.min(lin))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Worst relative violation; `<= tol` passes.
    pub worst: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    pub(crate) fn new(name: &'static str) -> Self {
        Self::with_tol(name, RTOL)
    }
    pub(crate) fn with_tol(name: &'static str, tol: f64) -> Self {
        Self { name, worst: f64::NEG_INFINITY, worst_index: None, checked: 0, tol, pass: true }
    }
    pub(crate) fn observe(&mut self, k: usize, violation: f64) {
        self.checked += 1;
        if violation > self.worst || violation.is_nan() {
            self.worst = violation;
            self.worst_index = Some(k);
        }
        if !(violation <= self.tol) {
            self.pass = false;
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: worst violation {:.3e}{} over {} checks",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.worst_index.map(|k| format!(" at k={k}")).unwrap_or_default(),
            self.checked
        )
    }
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub scheme: SchemeKind,
    pub checks: Vec<Check>,
    /// Steps with `L_{k+1} > L_k` (reported; asserted against nothing).
    pub lyapunov_increases: Vec<usize>,
}

impl Verdict {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
    pub fn worst(&self, name: &str) -> f64 {
        self.check(name).map(|c| c.worst).unwrap_or(f64::NAN)
    }
}

/// Checks a trace against the guarantees of its scheme:
///
/// - `contraction`: `L_{k+1}(1 + a_k) <= L_k` (IMPLICIT, GS_CORRECTED, OAG1)
///   or `L_{k+1} <= (1 - a_k) L_k` (NAG, OAG2);
/// - `defect` (naive GS): `L_{k+1} - L_k <= -a_k L_{k+1} + a_k^2/(2 g_k) |grad f(x_{k+1})|^2`;
/// - `envelope`: `L_k <=` the recorded envelope;
/// - `lyapunov_dominates_gap`: `L_k >= F(x_k) - F* >= 0`.
///
/// Steps ending in a restart are compared using the pre-reset value.
pub fn verify_trace(trace: &RunTrace) -> Verdict {
    let scheme = trace.scheme;
    let mut checks = Vec::new();
    let mut increases = Vec::new();
    let recs = &trace.records;
    let fscale = trace.reference.as_ref().map(|r| r.value.abs().max(1.0)).unwrap_or(1.0);

    if trace.reference.is_some() {
        let mut dom = Check::new("lyapunov_dominates_gap");
        for r in recs {
            let Some(gap) = r.gap else { continue };
            // reference error budget: gaps may dip a few ulp of F* below zero
            let floor = -1e-12 * fscale;
            let mut viol = (floor - gap) / (ATOL / RTOL);
            if let Some(l) = r.lyapunov {
                viol = viol.max(relative_violation(gap, l + 1e-12 * fscale));
            }
            dom.observe(r.k, viol);
        }
        checks.push(dom);
    }

    let contraction_kind = match scheme {
        SchemeKind::Implicit | SchemeKind::GsCorrected | SchemeKind::Oag1 => Some(true),
        SchemeKind::Nag | SchemeKind::Oag2 => Some(false),
        _ => None,
    };
    let pairs = recs.windows(2).filter_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        let lk = a.lyapunov?;
        let lk1 = b.pre_restart_lyapunov.or(b.lyapunov)?;
        Some((a, b, lk, lk1))
    });

    if let Some(implicit_family) = contraction_kind {
        let mut c = Check::new("contraction");
        for (_, b, lk, lk1) in pairs.clone() {
            let a = b.alpha;
            let (lhs, rhs) = if implicit_family { (lk1 * (1.0 + a), lk) } else { (lk1, (1.0 - a) * lk) };
            c.observe(b.k, relative_violation(lhs, rhs));
        }
        checks.push(c);
    }

    if scheme == SchemeKind::Gs {
        let mut c = Check::new("defect");
        for (a, b, lk, lk1) in pairs.clone() {
            let Some(g2) = b.grad_norm_sq else { continue };
            let al = b.alpha;
            let lhs = lk1 - lk + al * lk1;
            let rhs = al * al / (2.0 * a.gamma) * g2;
            let scale = lk.abs().max(lk1.abs() * (1.0 + al)).max(rhs.abs());
            c.observe(b.k, (lhs - rhs) / (scale + ATOL / RTOL));
        }
        checks.push(c);
    }
    for (_, b, lk, lk1) in pairs {
        if lk1 > lk {
            increases.push(b.k);
        }
    }

    if matches!(
        scheme,
        SchemeKind::Implicit | SchemeKind::GsCorrected | SchemeKind::Nag | SchemeKind::Oag1 | SchemeKind::Oag2
    ) {
        let mut c = Check::new("envelope");
        for r in recs {
            if let (Some(l), Some(e)) = (r.pre_restart_lyapunov.or(r.lyapunov), r.envelope) {
                // at restart records the envelope is the fresh segment's L0
                if r.restart {
                    continue;
                }
                c.observe(r.k, relative_violation(l, e));
            }
        }
        if c.checked > 0 {
            checks.push(c);
        }
    }

    Verdict { scheme, checks, lyapunov_increases: increases }
}
