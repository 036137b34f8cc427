//! Block transforms `G` of a quadratic's Hessian, Gauss-Seidel amplifiers
//! `E(alpha, G) = (I - alpha M)^{-1}(I + alpha N)`, and their spectral radii.
//!
//! Every block of `G_HB`, `G_NAG` and `G(gamma)` is of the form
//! `s I + t A`, so `diag(U, U)` (with `A = U diag(theta) U'`) reduces `G`
//! and `E` to one 2x2 matrix per eigenvalue `theta` of `A`. Radii are taken
//! from those 2x2 matrices: several of the eigenvalues checked below sit on
//! Jordan blocks (e.g. `theta = mu` for `G_NAG`, `theta = 0` for the scaled
//! `mu = 0` amplifier), where a dense eigensolver only resolves moduli to
//! about `sqrt(eps)`. The dense route is kept as a cross-check.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{dense_eigenvalues, eig2x2, norm2, rho2x2, spectral_radius, Matrix};
use crate::problems::QuadraticProblem;
use crate::schedules::{generate, StepRule};

/// Tolerance on spectral-radius identities and bounds.
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Largest `2d` for which the dense cross-check is computed.
pub const DENSE_LIMIT: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransformKind {
    /// `[[0, I], [-A/mu, -2I]]`
    Hb,
    /// `[[-I, I], [I - A/mu, -I]]`
    Nag,
    /// `[[-I, I], [(mu I - A)/gamma, -(mu/gamma) I]]`
    Dyn { gamma: f64 },
}

/// `(ident * I + a_coef * A) / div`. Kept as a quotient so that
/// `(mu - theta)/mu` is exactly zero at `theta = mu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub ident: f64,
    pub a_coef: f64,
    pub div: f64,
}

impl Affine {
    const fn new(ident: f64, a_coef: f64, div: f64) -> Self {
        Self { ident, a_coef, div }
    }
    pub fn at(&self, theta: f64) -> f64 {
        self.a_coef.mul_add(theta, self.ident) / self.div
    }
    fn assemble(&self, a: &Matrix) -> Matrix {
        let n = a.nrows();
        (a * self.a_coef + Matrix::identity(n, n) * self.ident) / self.div
    }
}

pub type Mat2 = [[f64; 2]; 2];

#[derive(Clone, Debug)]
pub struct Transform {
    pub kind: TransformKind,
    pub mu: f64,
    pub blocks: [[Affine; 2]; 2],
    /// Eigenvalues of `A`, ascending.
    pub a_eigenvalues: Vec<f64>,
    /// Assembled `2d x 2d` matrix.
    pub matrix: Matrix,
}

pub fn build_transform(kind: TransformKind, problem: &QuadraticProblem, mu_override: Option<f64>) -> Result<Transform> {
    let mu = mu_override.unwrap_or(problem.mu());
    let blocks = match kind {
        TransformKind::Hb | TransformKind::Nag => {
            if !(mu > 0.0) {
                return Err(Error::invalid(format!(
                    "{kind:?} transform divides by mu; mu = {mu} (use the Dyn(gamma) transform for mu = 0)"
                )));
            }
            if kind == TransformKind::Hb {
                [
                    [Affine::new(0.0, 0.0, 1.0), Affine::new(1.0, 0.0, 1.0)],
                    [Affine::new(0.0, -1.0, mu), Affine::new(-2.0, 0.0, 1.0)],
                ]
            } else {
                [
                    [Affine::new(-1.0, 0.0, 1.0), Affine::new(1.0, 0.0, 1.0)],
                    [Affine::new(mu, -1.0, mu), Affine::new(-1.0, 0.0, 1.0)],
                ]
            }
        }
        TransformKind::Dyn { gamma } => {
            if !(gamma > 0.0) || !(mu >= 0.0) {
                return Err(Error::invalid(format!("Dyn transform needs gamma > 0, mu >= 0 (gamma={gamma}, mu={mu})")));
            }
            [
                [Affine::new(-1.0, 0.0, 1.0), Affine::new(1.0, 0.0, 1.0)],
                [Affine::new(mu, -1.0, gamma), Affine::new(-mu, 0.0, gamma)],
            ]
        }
    };
    let a = &problem.matrix;
    let d = a.nrows();
    let mut matrix = Matrix::zeros(2 * d, 2 * d);
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            matrix.view_mut((bi * d, bj * d), (d, d)).copy_from(&blk.assemble(a));
        }
    }
    Ok(Transform { kind, mu, blocks, a_eigenvalues: problem.eigenvalues.clone(), matrix })
}

impl Transform {
    pub fn dim(&self) -> usize {
        self.a_eigenvalues.len()
    }

    /// The 2x2 matrix acting on the eigendirection of `A` with eigenvalue `theta`.
    pub fn reduced(&self, theta: f64) -> Mat2 {
        let b = &self.blocks;
        [[b[0][0].at(theta), b[0][1].at(theta)], [b[1][0].at(theta), b[1][1].at(theta)]]
    }

    /// Spectrum of `G` via the 2x2 reduction.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.a_eigenvalues
            .iter()
            .flat_map(|&t| {
                let r = self.reduced(t);
                eig2x2(r[0][0], r[0][1], r[1][0], r[1][1])
            })
            .collect()
    }

    /// `max |lambda| / min |lambda|` over the spectrum of `G`.
    pub fn condition(&self) -> f64 {
        condition_of(&self.eigenvalues())
    }
}

fn condition_of(eigs: &[Complex64]) -> f64 {
    let (lo, hi) = eigs.iter().map(|z| z.norm()).fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m), hi.max(m)));
    hi / lo
}

/// `(I - alpha M)^{-1}(I + alpha N)` for a 2x2 `R = M + N`, `M` lower triangular.
pub fn gs_amplifier_2x2(r: Mat2, alpha: f64) -> Mat2 {
    let d1 = 1.0 - alpha * r[0][0];
    let d2 = 1.0 - alpha * r[1][1];
    let e11 = 1.0 / d1;
    let e12 = alpha * r[0][1] / d1;
    let e21 = alpha * r[1][0] * e11 / d2;
    let e22 = (1.0 + alpha * r[1][0] * e12) / d2;
    [[e11, e12], [e21, e22]]
}

/// Dense `E(alpha, G)` by forward substitution with the lower-triangular
/// part of `G` (diagonal included); `A` is never inverted.
pub fn gs_amplifier(transform: &Transform, alpha: f64) -> Result<Matrix> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let g = &transform.matrix;
    let n = g.nrows();
    // right-hand side I + alpha N, N strictly upper
    let mut e = Matrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            e[(i, j)] += alpha * g[(i, j)];
        }
    }
    // solve (I - alpha M) E = rhs row by row
    for i in 0..n {
        for k in 0..i {
            let m = alpha * g[(i, k)];
            if m != 0.0 {
                for j in 0..n {
                    let v = e[(k, j)];
                    e[(i, j)] += m * v;
                }
            }
        }
        let diag = 1.0 - alpha * g[(i, i)];
        e.row_mut(i).unscale_mut(diag);
    }
    Ok(e)
}

fn eig_mat2(m: &Mat2) -> [Complex64; 2] {
    eig2x2(m[0][0], m[0][1], m[1][0], m[1][1])
}

fn rho_mat2(m: &Mat2) -> f64 {
    rho2x2(m[0][0], m[0][1], m[1][0], m[1][1])
}

/// Spectrum of `E(alpha, G)` via the 2x2 reduction.
pub fn amplifier_eigenvalues(transform: &Transform, alpha: f64) -> Vec<Complex64> {
    transform.a_eigenvalues.iter().flat_map(|&t| eig_mat2(&gs_amplifier_2x2(transform.reduced(t), alpha))).collect()
}

fn amplifier_rho(transform: &Transform, alpha: f64) -> f64 {
    transform
        .a_eigenvalues
        .iter()
        .map(|&t| rho_mat2(&gs_amplifier_2x2(transform.reduced(t), alpha)))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct SpectralReport {
    pub label: String,
    pub alpha: f64,
    pub eigenvalues: Vec<Complex64>,
    /// `max |lambda|` over `eigenvalues`.
    pub rho: f64,
    pub bound: f64,
    /// Condition number of the underlying `G` (or `NaN` when not applicable).
    pub condition: f64,
    /// `|E|_2`; observational only, a spectral radius below one does not
    /// bound the norm of a non-normal matrix.
    pub norm2: Option<f64>,
    /// Radius from the dense eigensolver on the assembled matrix.
    pub dense_rho: Option<f64>,
    /// Preconditions of the claim are met (the claim is asserted).
    pub admissible: bool,
    /// The claim holds numerically.
    pub holds: bool,
}

impl SpectralReport {
    pub fn pass(&self) -> bool {
        !self.admissible || self.holds
    }
}

fn dense_metrics(e: &Matrix) -> (Option<f64>, Option<f64>) {
    if e.nrows() > DENSE_LIMIT {
        return (None, None);
    }
    (Some(spectral_radius(&dense_eigenvalues(e))), Some(norm2(e)))
}

/// Checks `rho(E(alpha, G)) <= 1/sqrt(1 + 2 alpha)` for `G_HB` and `G_NAG`,
/// and additionally `rho <= 1/(1 + 1/sqrt(kappa))` when `alpha = 2/sqrt(kappa)`.
/// Admissible for `0 < alpha <= 2/sqrt(kappa)`.
pub fn gs_radius_bounds(problem: &QuadraticProblem, alpha: f64) -> Result<Vec<SpectralReport>> {
    if !(problem.mu() > 0.0) {
        return Err(Error::invalid("Gauss-Seidel spectral bound needs mu > 0"));
    }
    let kappa = problem.condition();
    let amax = 2.0 / kappa.sqrt();
    let admissible = alpha > 0.0 && alpha <= amax * (1.0 + 1e-15);
    let at_edge = (alpha - amax).abs() <= 1e-15 * amax;
    let mut out = Vec::new();
    for kind in [TransformKind::Hb, TransformKind::Nag] {
        let t = build_transform(kind, problem, None)?;
        let eigs = amplifier_eigenvalues(&t, alpha);
        let rho = amplifier_rho(&t, alpha);
        let mut bound = 1.0 / (1.0 + 2.0 * alpha).sqrt();
        if at_edge {
            bound = bound.min(1.0 / (1.0 + 1.0 / kappa.sqrt()));
        }
        let (dense_rho, n2) = dense_metrics(&gs_amplifier(&t, alpha)?);
        out.push(SpectralReport {
            label: format!("{kind:?}"),
            alpha,
            eigenvalues: eigs,
            rho,
            bound,
            condition: t.condition(),
            norm2: n2,
            dense_rho,
            admissible,
            holds: rho <= bound + SPECTRAL_TOL,
        });
    }
    Ok(out)
}

/// Radius bound for `R = [[-a, c], [-b, -d]]`: inside the window
/// `|tr R| - 2 sqrt(det R) <= bc alpha <= |tr R| + 2 sqrt(det R)` the
/// amplifier's eigenvalues lie on the circle of radius
/// `1/sqrt(1 + |tr R| alpha + ad alpha^2)`. Outside, the report is
/// inadmissible and `holds` tells whether the circle formula still matched.
pub fn two_by_two_radius_check(a: f64, b: f64, c: f64, d: f64, alpha: f64) -> Result<SpectralReport> {
    if [a, b, c, d].iter().any(|&t| !(t >= 0.0)) || !(alpha > 0.0) {
        return Err(Error::invalid("radius check needs a, b, c, d >= 0 and alpha > 0"));
    }
    let tr = -(a + d);
    let det = a * d + b * c;
    if !(tr < 0.0 && det > 0.0) {
        return Err(Error::invalid(format!("radius check needs tr R < 0 < det R (tr={tr}, det={det})")));
    }
    let (lo, hi) = (tr.abs() - 2.0 * det.sqrt(), tr.abs() + 2.0 * det.sqrt());
    let bca = b * c * alpha;
    let admissible = lo <= bca && bca <= hi;
    let e = gs_amplifier_2x2([[-a, c], [-b, -d]], alpha);
    let eigs = eig_mat2(&e).to_vec();
    let rho = rho_mat2(&e);
    let circle = 1.0 / (1.0 + tr.abs() * alpha + a * d * alpha * alpha).sqrt();
    let dense = Matrix::from_row_slice(2, 2, &[e[0][0], e[0][1], e[1][0], e[1][1]]);
    Ok(SpectralReport {
        label: format!("R(a={a}, b={b}, c={c}, d={d})"),
        alpha,
        eigenvalues: eigs,
        rho,
        bound: circle,
        condition: f64::NAN,
        norm2: Some(norm2(&dense)),
        dense_rho: Some(spectral_radius(&dense_eigenvalues(&dense))),
        admissible,
        holds: (rho - circle).abs() <= SPECTRAL_TOL,
    })
}

#[derive(Clone, Debug)]
pub struct Mu0Analysis {
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// One report per k; `bound` holds `gamma_{k+1}/gamma_k`.
    pub reports: Vec<SpectralReport>,
    /// `prod_{i<k} rho_i`, `k = 0..=K`.
    pub rho_products: Vec<f64>,
    /// `4 (sqrt L + sqrt g0)^2 / (sqrt(g0) k + 2 sqrt L + 2 sqrt g0)^2`.
    pub decay_bounds: Vec<f64>,
    pub worst_equality_error: f64,
    pub worst_product_error: f64,
    pub bound_holds: bool,
}

impl Mu0Analysis {
    pub fn pass(&self) -> bool {
        self.worst_equality_error <= SPECTRAL_TOL && self.worst_product_error <= SPECTRAL_TOL && self.bound_holds
    }
}

/// Scaled amplifiers `E~_k = diag(I, g_{k+1} I) E(a_k, G(g_{k+1})) diag(I, g_k I)^{-1}`
/// for `mu = 0` with `L a_k^2 = g_{k+1}`, `g_{k+1} = g_k/(1 + a_k)`; checks
/// `rho(E~_k) = g_{k+1}/g_k`, `prod rho = g_k/g_0` and the `O(1/k^2)` decay.
/// `dense` additionally assembles each `E~_k` for the norm and dense radius.
pub fn scaled_mu0_analysis(problem: &QuadraticProblem, gamma0: f64, k: usize, dense: bool) -> Result<Mu0Analysis> {
    if problem.mu() != 0.0 {
        return Err(Error::invalid(format!("scaled analysis is for mu = 0, got mu = {}", problem.mu())));
    }
    let lip = problem.lip();
    let sched = generate(StepRule::Mu0, gamma0, 0.0, lip, k)?;
    let (sl, sg) = (lip.sqrt(), gamma0.sqrt());
    let mut reports = Vec::with_capacity(k);
    let mut products = vec![1.0];
    let mut log_prod = 0.0;
    let mut worst_eq: f64 = 0.0;
    let mut worst_prod: f64 = 0.0;
    let mut bound_holds = true;
    let decay = |i: usize| 4.0 * (sl + sg).powi(2) / (sg * i as f64 + 2.0 * sl + 2.0 * sg).powi(2);
    let mut decay_bounds = vec![decay(0)];
    for i in 0..k {
        let (a, g, g1) = (sched.alphas[i], sched.gammas[i], sched.gammas[i + 1]);
        let t = build_transform(TransformKind::Dyn { gamma: g1 }, problem, Some(0.0))?;
        let scale = |e: Mat2| [[e[0][0], e[0][1] / g], [g1 * e[1][0], g1 * e[1][1] / g]];
        let mut eigs = Vec::with_capacity(2 * t.dim());
        let mut rho: f64 = 0.0;
        for &theta in &t.a_eigenvalues {
            let e = scale(gs_amplifier_2x2(t.reduced(theta), a));
            eigs.extend(eig_mat2(&e));
            rho = rho.max(rho_mat2(&e));
        }
        let target = g1 / g;
        worst_eq = worst_eq.max((rho - target).abs());
        log_prod += rho.ln();
        let prod = log_prod.exp();
        products.push(prod);
        let ratio = sched.gammas[i + 1] / gamma0;
        worst_prod = worst_prod.max((prod - ratio).abs());
        let db = decay(i + 1);
        decay_bounds.push(db);
        if ratio > db * (1.0 + 1e-12) {
            bound_holds = false;
        }
        let (dense_rho, n2) = if dense {
            let mut e = gs_amplifier(&t, a)?;
            let d = t.dim();
            e.view_mut((d, 0), (d, 2 * d)).scale_mut(g1);
            e.view_mut((0, d), (2 * d, d)).unscale_mut(g);
            dense_metrics(&e)
        } else {
            (None, None)
        };
        reports.push(SpectralReport {
            label: format!("k={i}"),
            alpha: a,
            eigenvalues: eigs,
            rho,
            bound: target,
            condition: f64::NAN,
            norm2: n2,
            dense_rho,
            admissible: true,
            holds: (rho - target).abs() <= SPECTRAL_TOL,
        });
    }
    Ok(Mu0Analysis {
        alphas: sched.alphas,
        gammas: sched.gammas,
        reports,
        rho_products: products,
        decay_bounds,
        worst_equality_error: worst_eq,
        worst_product_error: worst_prod,
        bound_holds,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdRates {
    pub alpha_opt: f64,
    pub rate_opt: f64,
    pub alpha_simple: f64,
    pub rate_simple: f64,
    /// `rho(I - alpha A)` from the eigenvalues of `A`, for both step sizes.
    pub rho_opt: f64,
    pub rho_simple: f64,
}

impl GdRates {
    pub fn pass(&self) -> bool {
        (self.rate_opt - self.rho_opt).abs() <= 1e-12 && (self.rate_simple - self.rho_simple).abs() <= 1e-12
    }
}

/// Gradient-descent contraction rates: `alpha* = 2/(mu + L)` with
/// `(kappa - 1)/(kappa + 1)`, and `alpha = 1/L` with `1 - 1/kappa`.
pub fn gd_rates(problem: &QuadraticProblem) -> Result<GdRates> {
    let (mu, lip) = (problem.mu(), problem.lip());
    if !(mu > 0.0) {
        return Err(Error::invalid("gradient descent has rate 1 when mu = 0"));
    }
    let kappa = lip / mu;
    let rho = |alpha: f64| problem.eigenvalues.iter().map(|&t| (1.0 - alpha * t).abs()).fold(0.0, f64::max);
    let alpha_opt = 2.0 / (mu + lip);
    let alpha_simple = 1.0 / lip;
    Ok(GdRates {
        alpha_opt,
        rate_opt: (kappa - 1.0) / (kappa + 1.0),
        alpha_simple,
        rate_simple: 1.0 - 1.0 / kappa,
        rho_opt: rho(alpha_opt),
        rho_simple: rho(alpha_simple),
    })
}

#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub sqrt_kappa_a: f64,
    pub kappa_hb: f64,
    pub kappa_nag: f64,
    /// Largest real part over both spectra (must be negative).
    pub max_real_part: f64,
    /// Dense-solver condition numbers, when computed.
    pub dense_kappa_hb: Option<f64>,
    pub dense_kappa_nag: Option<f64>,
}

impl ConditionReport {
    pub fn pass(&self, tol: f64) -> bool {
        (self.kappa_hb - self.sqrt_kappa_a).abs() <= tol
            && (self.kappa_nag - self.sqrt_kappa_a).abs() <= tol
            && self.max_real_part < 0.0
    }
}

/// `kappa(G_HB) = kappa(G_NAG) = sqrt(kappa(A))`, with all real parts negative.
pub fn condition_check(problem: &QuadraticProblem, dense: bool) -> Result<ConditionReport> {
    let hb = build_transform(TransformKind::Hb, problem, None)?;
    let nag = build_transform(TransformKind::Nag, problem, None)?;
    let (eh, en) = (hb.eigenvalues(), nag.eigenvalues());
    let max_re = eh.iter().chain(&en).map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let dk = |t: &Transform| (dense && t.matrix.nrows() <= DENSE_LIMIT).then(|| condition_of(&dense_eigenvalues(&t.matrix)));
    Ok(ConditionReport {
        sqrt_kappa_a: problem.condition().sqrt(),
        kappa_hb: condition_of(&eh),
        kappa_nag: condition_of(&en),
        max_real_part: max_re,
        dense_kappa_hb: dk(&hb),
        dense_kappa_nag: dk(&nag),
    })
}
