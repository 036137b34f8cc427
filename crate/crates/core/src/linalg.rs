//! Dense linear-algebra helpers shared by the other modules.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Eigenvalues of a general square real matrix (Schur form based).
pub fn dense_eigenvalues(m: &Matrix) -> Vec<Complex64> {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect()
}

pub fn spectral_radius(eigs: &[Complex64]) -> f64 {
    eigs.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest singular value.
pub fn norm2(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Eigenvalues of `[[p, q], [r, s]]`.
///
/// The discriminant is formed as `(p - s)^2 + 4qr` rather than `tr^2 - 4 det`
/// so that nearly-equal eigenvalues do not lose all their digits, and complex
/// pairs take their modulus from the determinant directly.
pub fn eig2x2(p: f64, q: f64, r: f64, s: f64) -> [Complex64; 2] {
    let half_tr = 0.5 * (p + s);
    let h = 0.5 * (p - s);
    let disc = h.mul_add(h, q * r);
    if disc >= 0.0 {
        let root = disc.sqrt();
        // larger-magnitude root first, the other from the determinant
        let big = if half_tr >= 0.0 { half_tr + root } else { half_tr - root };
        let det = p.mul_add(s, -(q * r));
        let small = if big != 0.0 { det / big } else { half_tr - root };
        [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex64::new(half_tr, im), Complex64::new(half_tr, -im)]
    }
}

/// Spectral radius of a real 2x2 matrix; for a complex pair this is
/// `sqrt(det)`, which avoids squaring the real part.
pub fn rho2x2(p: f64, q: f64, r: f64, s: f64) -> f64 {
    let h = 0.5 * (p - s);
    let disc = h.mul_add(h, q * r);
    if disc < 0.0 {
        p.mul_add(s, -(q * r)).max(0.0).sqrt()
    } else {
        let e = eig2x2(p, q, r, s);
        e[0].norm().max(e[1].norm())
    }
}

/// `max_ij |a_ij - a_ji|`.
pub fn asymmetry(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Parse a dense matrix: one row per line, whitespace-separated entries.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::ConfigSyntax {
                    line: i + 1,
                    message: format!("matrix entry {tok:?} is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::ConfigSyntax {
                    line: i + 1,
                    message: format!("row has {} entries, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::invalid("matrix file is empty"));
    }
    let (n, m) = (rows.len(), rows[0].len());
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

/// `n` points geometrically spaced from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_re(mut v: Vec<Complex64>) -> Vec<(f64, f64)> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v.into_iter().map(|z| (z.re, z.im)).collect()
    }

    #[test]
    fn eig2x2_matches_dense() {
        let cases = [
            (1.0, 2.0, 3.0, 4.0),
            (0.0, 1.0, -1.0, 0.0),
            (-1.0, 1.0, 0.0, -1.0),
            (2.0, -5.0, 1.0, -2.0),
            (1e-8, 1.0, 1e-8, 1e-8),
        ];
        for &(p, q, r, s) in &cases {
            let dense = sorted_re(dense_eigenvalues(&Matrix::from_row_slice(2, 2, &[p, q, r, s])));
            let ours = sorted_re(eig2x2(p, q, r, s).to_vec());
            for (a, b) in dense.iter().zip(&ours) {
                assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn eig2x2_jordan_block_is_exact() {
        let e = eig2x2(-1.0, 1.0, 0.0, -1.0);
        assert_eq!(e[0], Complex64::new(-1.0, 0.0));
        assert_eq!(e[1], Complex64::new(-1.0, 0.0));
        assert_eq!(rho2x2(0.5, 1.0, -0.25, 0.5), (0.25f64 + 0.25).sqrt());
    }

    #[test]
    fn parse_matrix_rows() {
        let m = parse_matrix("# comment\n1 2\n\n3 4\n").unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert!(matches!(parse_matrix("1 2\n3\n"), Err(Error::ConfigSyntax { line: 2, .. })));
        assert!(parse_matrix("1 x\n").is_err());
    }

    #[test]
    fn logspace_endpoints_exact() {
        let v = logspace(1e-4, 1.0, 5);
        assert_eq!(v[0], 1e-4);
        assert_eq!(v[4], 1.0);
        assert!((v[2] - 1e-2).abs() < 1e-15);
    }
}
