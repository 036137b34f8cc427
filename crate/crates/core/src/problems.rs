//! Objectives, proximal terms and the composite gradient mapping.
//!
//! A smooth problem is `f` in `S_{mu,L}`: convex with `mu`-strong convexity
//! and `L`-Lipschitz gradient. A composite problem adds a proximable, possibly
//! extended-valued `g` and minimizes `F = f + g`.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, symmetric_eigenvalues, Matrix, Vector};

pub mod catalog;

/// Smooth convex function with gradient.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn hessian(&self, _x: &Vector) -> Option<Matrix> {
        None
    }
    /// `(A, b)` when `f(x) = x'Ax/2 - b'x + c`.
    fn quadratic(&self) -> Option<(Matrix, Vector)> {
        None
    }
}

/// `f(x) = x'Ax/2 - b'x + c`.
#[derive(Clone, Debug)]
pub struct QuadraticObjective {
    pub a: Matrix,
    pub b: Vector,
    pub c: f64,
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.a * x)) - self.b.dot(x) + self.c
    }
    fn gradient(&self, x: &Vector) -> Vector {
        &self.a * x - &self.b
    }
    fn hessian(&self, _x: &Vector) -> Option<Matrix> {
        Some(self.a.clone())
    }
    fn quadratic(&self) -> Option<(Matrix, Vector)> {
        Some((self.a.clone(), self.b.clone()))
    }
}

/// `f(x) = sum_i softplus(a_i'x) - c'x + ridge/2 |x|^2`, rows `a_i` of `features`.
#[derive(Clone, Debug)]
pub struct LogisticObjective {
    pub features: Matrix,
    pub shift: Vector,
    pub ridge: f64,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticObjective {
    /// Upper bound on the Hessian: `lambda_max(A'A)/4 + ridge`.
    pub fn lipschitz_bound(&self) -> f64 {
        let ata = self.features.transpose() * &self.features;
        symmetric_eigenvalues(&ata).last().copied().unwrap_or(0.0) / 4.0 + self.ridge
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.features.ncols()
    }
    fn value(&self, x: &Vector) -> f64 {
        let z = &self.features * x;
        z.iter().map(|&t| softplus(t)).sum::<f64>() - self.shift.dot(x)
            + 0.5 * self.ridge * x.norm_squared()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        let s = (&self.features * x).map(sigmoid);
        self.features.tr_mul(&s) - &self.shift + x * self.ridge
    }
    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        let z = &self.features * x;
        let w = z.map(|t| {
            let s = sigmoid(t);
            s * (1.0 - s)
        });
        let mut aw = self.features.clone();
        for (i, mut row) in aw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let d = self.dim();
        Some(self.features.tr_mul(&aw) + Matrix::identity(d, d) * self.ridge)
    }
}

/// `f(x) + mu/2 |x|^2`.
#[derive(Clone, Debug)]
pub struct ShiftedObjective {
    pub inner: Arc<dyn Objective>,
    pub mu: f64,
}

impl Objective for ShiftedObjective {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.inner.value(x) + 0.5 * self.mu * x.norm_squared()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.inner.gradient(x) + x * self.mu
    }
    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        let d = self.dim();
        self.inner.hessian(x).map(|h| h + Matrix::identity(d, d) * self.mu)
    }
    fn quadratic(&self) -> Option<(Matrix, Vector)> {
        let d = self.dim();
        self.inner.quadratic().map(|(a, b)| (a + Matrix::identity(d, d) * self.mu, b))
    }
}

/// Objective given by closures; no Hessian.
pub struct FnObjective {
    pub dim: usize,
    pub value: Box<dyn Fn(&Vector) -> f64 + Send + Sync>,
    pub gradient: Box<dyn Fn(&Vector) -> Vector + Send + Sync>,
}

impl fmt::Debug for FnObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnObjective(dim={})", self.dim)
    }
}

impl Objective for FnObjective {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }
}

/// Wraps an objective and counts value/gradient calls.
#[derive(Debug)]
pub struct CountingObjective {
    pub inner: Arc<dyn Objective>,
    pub values: AtomicUsize,
    pub gradients: AtomicUsize,
}

impl CountingObjective {
    pub fn new(inner: Arc<dyn Objective>) -> Self {
        Self { inner, values: AtomicUsize::new(0), gradients: AtomicUsize::new(0) }
    }
    pub fn gradient_calls(&self) -> usize {
        self.gradients.load(Ordering::Relaxed)
    }
}

impl Objective for CountingObjective {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.value(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(x)
    }
    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        self.inner.hessian(x)
    }
    fn quadratic(&self) -> Option<(Matrix, Vector)> {
        self.inner.quadratic()
    }
}

#[derive(Clone, Debug)]
pub struct SmoothProblem {
    pub objective: Arc<dyn Objective>,
    pub mu: f64,
    pub lip: f64,
    pub minimizer: Option<Vector>,
}

impl SmoothProblem {
    pub fn new(objective: Arc<dyn Objective>, mu: f64, lip: f64, minimizer: Option<Vector>) -> Result<Self> {
        if !(lip > 0.0 && lip.is_finite()) {
            return Err(Error::invalid(format!("lip must be positive, got {lip}")));
        }
        if !(mu >= 0.0 && mu <= lip) {
            return Err(Error::invalid(format!("need 0 <= mu <= lip, got mu={mu}, lip={lip}")));
        }
        if let Some(xs) = &minimizer {
            if xs.len() != objective.dim() {
                return Err(Error::Dimension { expected: objective.dim(), got: xs.len() });
            }
            let g = objective.gradient(xs).norm();
            if g > 1e-8 * (1.0 + lip * xs.norm()) {
                return Err(Error::invalid(format!("minimizer has gradient norm {g:e}")));
            }
        }
        Ok(Self { objective, mu, lip, minimizer })
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }
    pub fn value(&self, x: &Vector) -> f64 {
        self.objective.value(x)
    }
    pub fn gradient(&self, x: &Vector) -> Vector {
        self.objective.gradient(x)
    }
    pub fn condition(&self) -> f64 {
        self.lip / self.mu
    }

    /// Worst slacks of the `mu`-convexity lower bound and the descent-lemma
    /// upper bound over the given pairs: `(min lower slack, min upper slack)`.
    pub fn bound_slacks(&self, pairs: &[(Vector, Vector)]) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::INFINITY;
        for (x, y) in pairs {
            let d = x - y;
            let bregman = self.value(x) - self.value(y) - self.gradient(y).dot(&d);
            let n2 = d.norm_squared();
            lo = lo.min(bregman - 0.5 * self.mu * n2);
            hi = hi.min(0.5 * self.lip * n2 - bregman);
        }
        (lo, hi)
    }
}

/// `f(x) = x'Ax/2` with `mu`, `L` the extreme eigenvalues of `A`.
#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    pub matrix: Matrix,
    /// Ascending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    pub smooth: SmoothProblem,
}

impl QuadraticProblem {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    pub fn mu(&self) -> f64 {
        self.smooth.mu
    }
    pub fn lip(&self) -> f64 {
        self.smooth.lip
    }
    pub fn condition(&self) -> f64 {
        self.smooth.condition()
    }
    pub fn composite(&self) -> CompositeProblem {
        CompositeProblem::from_smooth(self.smooth.clone())
    }
}

pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn make_quadratic(a: Matrix) -> Result<QuadraticProblem> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension { expected: a.nrows(), got: a.ncols() });
    }
    if a.nrows() == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    let asym = asymmetry(&a);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let mut ev = symmetric_eigenvalues(&a);
    if ev[0] < -SYMMETRY_TOL {
        return Err(Error::Indefinite { min_eigenvalue: ev[0] });
    }
    for e in ev.iter_mut() {
        *e = e.max(0.0);
    }
    let lip = *ev.last().unwrap();
    if lip <= 0.0 {
        return Err(Error::invalid("zero matrix has no positive Lipschitz constant"));
    }
    let d = a.nrows();
    let objective = Arc::new(QuadraticObjective { a: a.clone(), b: Vector::zeros(d), c: 0.0 });
    let smooth = SmoothProblem::new(objective, ev[0], lip, Some(Vector::zeros(d)))?;
    Ok(QuadraticProblem { matrix: a, eigenvalues: ev, smooth })
}

/// Proximable convex term `g`, possibly `+inf`.
pub trait ProxTerm: Send + Sync + fmt::Debug {
    fn value(&self, x: &Vector) -> f64;
    /// `argmin_y g(y) + |x - y|^2 / (2 lambda)`.
    fn prox(&self, lambda: f64, x: &Vector) -> Vector;
    fn is_zero(&self) -> bool {
        false
    }
    /// `Some((mu, h))` when `g = h + mu/2 |.|^2`.
    fn strong_part(&self) -> Option<(f64, Arc<dyn ProxTerm>)> {
        None
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroProx;

impl ProxTerm for ZeroProx {
    fn value(&self, _x: &Vector) -> f64 {
        0.0
    }
    fn prox(&self, _lambda: f64, x: &Vector) -> Vector {
        x.clone()
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// `weight * |x|_1`.
#[derive(Clone, Copy, Debug)]
pub struct L1Prox {
    pub weight: f64,
}

impl ProxTerm for L1Prox {
    fn value(&self, x: &Vector) -> f64 {
        self.weight * x.lp_norm(1)
    }
    fn prox(&self, lambda: f64, x: &Vector) -> Vector {
        let t = lambda * self.weight;
        x.map(|xi| xi.signum() * (xi.abs() - t).max(0.0))
    }
}

/// Indicator of `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct BoxProx {
    pub lo: Vector,
    pub hi: Vector,
}

impl ProxTerm for BoxProx {
    fn value(&self, x: &Vector) -> f64 {
        let inside = x.iter().zip(self.lo.iter().zip(self.hi.iter())).all(|(&xi, (&l, &h))| l <= xi && xi <= h);
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }
    fn prox(&self, _lambda: f64, x: &Vector) -> Vector {
        Vector::from_iterator(
            x.len(),
            x.iter().zip(self.lo.iter().zip(self.hi.iter())).map(|(&xi, (&l, &h))| xi.clamp(l, h)),
        )
    }
}

/// `inner(x) + mu/2 |x|^2`; prox via `prox_{s h}(x / (1 + lambda mu))`, `s = lambda/(1 + lambda mu)`.
#[derive(Clone, Debug)]
pub struct RidgeProx {
    pub mu: f64,
    pub inner: Arc<dyn ProxTerm>,
}

impl ProxTerm for RidgeProx {
    fn value(&self, x: &Vector) -> f64 {
        self.inner.value(x) + 0.5 * self.mu * x.norm_squared()
    }
    fn prox(&self, lambda: f64, x: &Vector) -> Vector {
        let s = 1.0 + lambda * self.mu;
        self.inner.prox(lambda / s, &(x / s))
    }
    fn strong_part(&self) -> Option<(f64, Arc<dyn ProxTerm>)> {
        Some((self.mu, self.inner.clone()))
    }
}

/// Counts prox calls.
#[derive(Debug)]
pub struct CountingProx {
    pub inner: Arc<dyn ProxTerm>,
    pub calls: AtomicUsize,
}

impl CountingProx {
    pub fn new(inner: Arc<dyn ProxTerm>) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }
    pub fn prox_calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ProxTerm for CountingProx {
    fn value(&self, x: &Vector) -> f64 {
        self.inner.value(x)
    }
    fn prox(&self, lambda: f64, x: &Vector) -> Vector {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.prox(lambda, x)
    }
    // deliberately not forwarding is_zero: the counter must see every call
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProxKind {
    Zero,
    L1 { weight: f64 },
    Box { lo: Vector, hi: Vector },
}

pub fn prox_catalog(kind: ProxKind) -> Result<Arc<dyn ProxTerm>> {
    match kind {
        ProxKind::Zero => Ok(Arc::new(ZeroProx)),
        ProxKind::L1 { weight } => {
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(Error::invalid(format!("l1 weight must be positive, got {weight}")));
            }
            Ok(Arc::new(L1Prox { weight }))
        }
        ProxKind::Box { lo, hi } => {
            if lo.len() != hi.len() {
                return Err(Error::Dimension { expected: lo.len(), got: hi.len() });
            }
            if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
                return Err(Error::invalid(format!("box bound lo[{i}] = {} > hi[{i}] = {}", lo[i], hi[i])));
            }
            Ok(Arc::new(BoxProx { lo, hi }))
        }
    }
}

/// Minimizer and optimal value of `F`.
#[derive(Clone, Debug)]
pub struct Reference {
    pub minimizer: Vector,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct CompositeProblem {
    pub smooth: SmoothProblem,
    pub nonsmooth: Arc<dyn ProxTerm>,
    pub minimizer: Option<Vector>,
    pub optimal_value: Option<f64>,
}

impl CompositeProblem {
    /// `g = 0`; the reference is inherited from the smooth problem.
    pub fn from_smooth(smooth: SmoothProblem) -> Self {
        let optimal_value = smooth.minimizer.as_ref().map(|x| smooth.value(x));
        let minimizer = smooth.minimizer.clone();
        Self { smooth, nonsmooth: Arc::new(ZeroProx), minimizer, optimal_value }
    }

    pub fn new(
        smooth: SmoothProblem,
        nonsmooth: Arc<dyn ProxTerm>,
        minimizer: Option<Vector>,
        optimal_value: Option<f64>,
    ) -> Result<Self> {
        let p = Self { smooth, nonsmooth, minimizer, optimal_value };
        if let Some(x) = &p.minimizer {
            if x.len() != p.dim() {
                return Err(Error::Dimension { expected: p.dim(), got: x.len() });
            }
            if let Some(fs) = p.optimal_value {
                let fx = p.value(x);
                if !((fx - fs).abs() <= 1e-10 * fs.abs().max(1.0)) {
                    return Err(Error::invalid(format!("F(minimizer) = {fx} disagrees with optimal value {fs}")));
                }
            }
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }
    pub fn mu(&self) -> f64 {
        self.smooth.mu
    }
    pub fn lip(&self) -> f64 {
        self.smooth.lip
    }
    pub fn value(&self, x: &Vector) -> f64 {
        self.smooth.value(x) + self.nonsmooth.value(x)
    }

    pub fn reference(&self) -> Result<Reference> {
        let minimizer = self.minimizer.clone().ok_or(Error::MissingReference)?;
        let value = self.optimal_value.unwrap_or_else(|| self.value(&minimizer));
        Ok(Reference { minimizer, value })
    }

    /// Returns `(G_F(x, lambda), prox point x - lambda G_F)`.
    ///
    /// Calls the gradient and the prox exactly once each (the prox is skipped
    /// entirely when `g = 0`, in which case `G_F = grad f` bit-for-bit).
    pub fn gradient_mapping_point(&self, x: &Vector, lambda: f64) -> (Vector, Vector) {
        let g = self.smooth.gradient(x);
        if self.nonsmooth.is_zero() {
            let p = x - &g * lambda;
            return (g, p);
        }
        let p = self.nonsmooth.prox(lambda, &(x - g * lambda));
        ((x - &p) / lambda, p)
    }
}

/// `G_F(x, lambda) = (x - prox_{lambda g}(x - lambda grad f(x))) / lambda`.
pub fn gradient_mapping(problem: &CompositeProblem, x: &Vector, lambda: f64) -> Result<Vector> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    Ok(problem.gradient_mapping_point(x, lambda).0)
}

/// `F(y) - [F(x - lambda G) + <G, y - x> + mu/2 |y - x|^2 + lambda/2 (2 - lambda L) |G|^2]`;
/// nonnegative for `lambda` in `(0, 1/L]`.
pub fn key_inequality_residual(problem: &CompositeProblem, x: &Vector, y: &Vector, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let fy = problem.value(y);
    if !fy.is_finite() {
        return Err(Error::InfiniteValue);
    }
    let (g, p) = problem.gradient_mapping_point(x, lambda);
    let d = y - x;
    let rhs = problem.value(&p)
        + g.dot(&d)
        + 0.5 * problem.mu() * d.norm_squared()
        + 0.5 * lambda * (2.0 - lambda * problem.lip()) * g.norm_squared();
    Ok(fy - rhs)
}

/// Moves the strongly convex part `mu_g/2 |x|^2` of `g` into `f`: the result
/// has smooth part `f + mu_g/2 |x|^2` with constants `(mu + mu_g, L + mu_g)`
/// and nonsmooth part `h`. `F` and its minimizer are unchanged.
pub fn shift_strong_convexity(problem: &CompositeProblem) -> Result<CompositeProblem> {
    let (mu_g, inner) = problem
        .nonsmooth
        .strong_part()
        .ok_or_else(|| Error::invalid("nonsmooth term has no strongly convex part to shift"))?;
    let objective = Arc::new(ShiftedObjective { inner: problem.smooth.objective.clone(), mu: mu_g });
    let smooth = SmoothProblem {
        objective,
        mu: problem.smooth.mu + mu_g,
        lip: problem.smooth.lip + mu_g,
        minimizer: None,
    };
    Ok(CompositeProblem {
        smooth,
        nonsmooth: inner,
        minimizer: problem.minimizer.clone(),
        optimal_value: problem.optimal_value,
    })
}
