//! Test problems with trustworthy references.
//!
//! Quadratics have the exact minimizer 0, the logistic problems are built so
//! that a chosen point is the exact minimizer, and the lasso references come
//! from solving the KKT system on every sign pattern.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    make_quadratic, CompositeProblem, L1Prox, LogisticObjective, QuadraticObjective, QuadraticProblem, SmoothProblem,
};
use crate::error::{Error, Result};
use crate::linalg::{logspace, symmetric_eigenvalues, Matrix, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector(dim: usize, rng: &mut impl Rng) -> Vector {
    Vector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `diag(logspace(mu, lip, dim))`.
pub fn quadratic_diag(dim: usize, mu: f64, lip: f64) -> Result<QuadraticProblem> {
    if dim == 0 || !(mu > 0.0 && mu <= lip) {
        return Err(Error::invalid(format!("quadratic_diag needs dim >= 1 and 0 < mu <= lip (dim={dim}, mu={mu}, lip={lip})")));
    }
    make_quadratic(Matrix::from_diagonal(&Vector::from_vec(logspace(mu, lip, dim))))
}

/// `diag(0, logspace(lip/kappa, lip, dim - 1))`: convex, not strongly convex.
pub fn quadratic_mu0(dim: usize, lip: f64, kappa: f64) -> Result<QuadraticProblem> {
    if dim < 2 || !(kappa >= 1.0 && lip > 0.0) {
        return Err(Error::invalid("quadratic_mu0 needs dim >= 2, kappa >= 1, lip > 0"));
    }
    let mut d = vec![0.0];
    d.extend(logspace(lip / kappa, lip, dim - 1));
    make_quadratic(Matrix::from_diagonal(&Vector::from_vec(d)))
}

/// `Q diag(logspace(mu, lip, dim)) Q'` with `Q` from the QR factorization of
/// a Gaussian matrix.
pub fn quadratic_random(dim: usize, mu: f64, lip: f64, rng: &mut impl Rng) -> Result<QuadraticProblem> {
    if dim == 0 || !(mu >= 0.0 && mu <= lip && lip > 0.0) {
        return Err(Error::invalid("quadratic_random needs dim >= 1 and 0 <= mu <= lip"));
    }
    let q = gaussian_matrix(dim, dim, rng).qr().q();
    let diag = if mu > 0.0 {
        logspace(mu, lip, dim)
    } else {
        let mut d = vec![0.0];
        d.extend(logspace(lip / 100.0, lip, dim - 1));
        d.truncate(dim);
        d
    };
    let a = &q * Matrix::from_diagonal(&Vector::from_vec(diag)) * q.transpose();
    make_quadratic((&a + a.transpose()) * 0.5)
}

/// Logistic-type objective whose exact minimizer is `z`.
fn logistic(features: Matrix, z: Vector, ridge: f64) -> Result<CompositeProblem> {
    let s = (&features * &z).map(|t| 1.0 / (1.0 + (-t).exp()));
    let shift = features.tr_mul(&s) + &z * ridge;
    let obj = LogisticObjective { features, shift, ridge };
    let lip = obj.lipschitz_bound();
    let smooth = SmoothProblem::new(Arc::new(obj), ridge, lip, Some(z))?;
    Ok(CompositeProblem::from_smooth(smooth))
}

/// 1D, `mu = 0.1`.
pub fn logistic_1d() -> Result<CompositeProblem> {
    logistic(Matrix::from_column_slice(4, 1, &[1.0, -1.5, 0.5, 2.0]), Vector::from_element(1, 0.3), 0.1)
}

/// 2D, `mu = 0`.
pub fn logistic_2d() -> Result<CompositeProblem> {
    let a = Matrix::from_row_slice(4, 2, &[1.0, 0.5, -0.7, 1.2, 0.3, -1.8, 1.5, 0.2]);
    logistic(a, Vector::from_row_slice(&[0.4, -0.6]), 0.0)
}

/// Exact lasso solution of `min x'Hx/2 - q'x + w|x|_1` by trying every sign
/// pattern; returns the feasible KKT point with the lowest objective.
pub fn lasso_exact(h: &Matrix, q: &Vector, weight: f64) -> Option<Vector> {
    let d = q.len();
    let obj = |x: &Vector| 0.5 * x.dot(&(h * x)) - q.dot(x) + weight * x.lp_norm(1);
    let mut best: Option<(f64, Vector)> = None;
    let total = 3usize.pow(d as u32);
    for code in 0..total {
        let mut c = code;
        let signs: Vec<i8> = (0..d)
            .map(|_| {
                let s = (c % 3) as i8 - 1;
                c /= 3;
                s
            })
            .collect();
        let active: Vec<usize> = (0..d).filter(|&i| signs[i] != 0).collect();
        let mut x = Vector::zeros(d);
        if !active.is_empty() {
            let n = active.len();
            let hs = Matrix::from_fn(n, n, |i, j| h[(active[i], active[j])]);
            let rhs = Vector::from_fn(n, |i, _| q[active[i]] - weight * signs[active[i]] as f64);
            let Some(chol) = hs.cholesky() else { continue };
            let xs = chol.solve(&rhs);
            if active.iter().enumerate().any(|(i, &j)| xs[i] * signs[j] as f64 <= 0.0) {
                continue;
            }
            for (i, &j) in active.iter().enumerate() {
                x[j] = xs[i];
            }
        }
        let r = q - h * &x;
        let feasible = (0..d).filter(|&j| signs[j] == 0).all(|j| r[j].abs() <= weight * (1.0 + 1e-9));
        if !feasible {
            continue;
        }
        let f = obj(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.map(|(_, x)| x)
}

/// `|Mx - b|^2/2 + w|x|_1` with Gaussian `M` (`rows x dim`, scaled by
/// `1/sqrt(rows)`) and `b`, `w = 0.2 |M'b|_inf`. Fewer rows than columns gives
/// `mu = 0`.
pub fn lasso(rows: usize, dim: usize, seed: u64) -> Result<CompositeProblem> {
    if dim == 0 || rows == 0 || dim > 12 {
        return Err(Error::invalid("lasso needs 1 <= dim <= 12 (exact reference enumerates 3^dim patterns)"));
    }
    let mut r = rng(seed);
    let m = gaussian_matrix(rows, dim, &mut r) / (rows as f64).sqrt();
    let b = gaussian_vector(rows, &mut r);
    let h = m.tr_mul(&m);
    let h = (&h + h.transpose()) * 0.5;
    let q = m.tr_mul(&b);
    let weight = 0.2 * q.amax();
    let ev = symmetric_eigenvalues(&h);
    let mu = if rows < dim { 0.0 } else { ev[0].max(0.0) };
    let lip = *ev.last().unwrap();
    let xs = lasso_exact(&h, &q, weight).ok_or_else(|| Error::invalid("lasso KKT enumeration found no solution"))?;
    let obj = Arc::new(QuadraticObjective { a: h, b: q, c: 0.5 * b.norm_squared() });
    let smooth = SmoothProblem::new(obj, mu, lip, None)?;
    let g = Arc::new(L1Prox { weight });
    let p = CompositeProblem { smooth, nonsmooth: g, minimizer: Some(xs.clone()), optimal_value: None };
    let fstar = p.value(&xs);
    CompositeProblem::new(p.smooth, p.nonsmooth, Some(xs), Some(fstar))
}

/// 8x5 lasso, strongly convex smooth part.
pub fn lasso_fixture() -> Result<CompositeProblem> {
    lasso(8, 5, 7)
}

/// 4x5 lasso, `mu = 0`.
pub fn lasso_mu0_fixture() -> Result<CompositeProblem> {
    lasso(4, 5, 11)
}

#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub problem: CompositeProblem,
}

/// The fixed problem set used by the trace checks.
pub fn standard() -> Result<Vec<CatalogEntry>> {
    let mut r = rng(2024);
    Ok(vec![
        CatalogEntry { name: "quadratic_diag_k100", problem: quadratic_diag(10, 0.01, 1.0)?.composite() },
        CatalogEntry { name: "quadratic_diag_k1e4", problem: quadratic_diag(16, 1e-2, 1e2)?.composite() },
        CatalogEntry { name: "quadratic_random_k1e3", problem: quadratic_random(12, 1e-3, 1.0, &mut r)?.composite() },
        CatalogEntry { name: "quadratic_mu0", problem: quadratic_mu0(10, 1.0, 100.0)?.composite() },
        CatalogEntry { name: "quadratic_random_mu0", problem: quadratic_random(8, 0.0, 4.0, &mut r)?.composite() },
        CatalogEntry { name: "logistic_1d", problem: logistic_1d()? },
        CatalogEntry { name: "logistic_2d", problem: logistic_2d()? },
        CatalogEntry { name: "lasso", problem: lasso_fixture()? },
        CatalogEntry { name: "lasso_mu0", problem: lasso_mu0_fixture()? },
    ])
}
