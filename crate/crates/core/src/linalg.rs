//! Dense helpers on top of nalgebra: SVD-based pseudo-inverse, rank, stacking.

use nalgebra::{DMatrix, DVector};

/// Relative cutoff for pseudo-inverses.
pub const PINV_RTOL: f64 = 1e-10;
/// Relative cutoff for rank certificates on Hankel data.
pub const RANK_RTOL: f64 = 1e-8;

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rtol * sigma_max`.
pub fn rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    rank_of_spectrum(&singular_values(m), rtol)
}

pub fn rank_of_spectrum(s: &[f64], rtol: f64) -> usize {
    let Some(&top) = s.first() else { return 0 };
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rtol * top).count()
}

/// Moore-Penrose pseudo-inverse with relative singular value cutoff.
pub fn pinv(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    pinv_filtered(m, rtol, 0.0)
}

/// Pseudo-inverse with optional Tikhonov filtering `s / (s^2 + ridge)`.
pub fn pinv_filtered(m: &DMatrix<f64>, rtol: f64, ridge: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut out = DMatrix::zeros(c, r);
    if smax == 0.0 {
        return out;
    }
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= rtol * smax {
            continue;
        }
        let f = if ridge > 0.0 { s / (s * s + ridge) } else { 1.0 / s };
        // out += f * v_i u_i^T
        let vi = vt.row(i).transpose();
        let ui = u.column(i);
        out.ger(f, &vi, &ui, 1.0);
    }
    out
}

/// Ratio of the largest to the smallest singular value (infinite if singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&a), Some(&b)) if b > 0.0 => a / b,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    assert!(blocks.iter().all(|b| b.ncols() == cols), "vstack column mismatch");
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), b.shape()).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    assert!(blocks.iter().all(|b| b.nrows() == rows), "hstack row mismatch");
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), b.shape()).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Concatenate vectors into one column.
pub fn concat(vs: &[DVector<f64>]) -> DVector<f64> {
    let n = vs.iter().map(|v| v.len()).sum();
    let mut out = DVector::zeros(n);
    let mut i = 0;
    for v in vs {
        out.rows_mut(i, v.len()).copy_from(v);
        i += v.len();
    }
    out
}

/// Split a stacked vector into consecutive chunks of length `dim`.
pub fn split(v: &DVector<f64>, dim: usize) -> Vec<DVector<f64>> {
    if dim == 0 {
        return Vec::new();
    }
    assert_eq!(v.len() % dim, 0);
    (0..v.len() / dim).map(|i| v.rows(i * dim, dim).into_owned()).collect()
}

pub fn matrix_power(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        out = &out * a;
    }
    out
}

/// Largest modulus among the eigenvalues of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// `‖a - b‖_max / max(1, ‖b‖_max)`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b)) / max_abs(b).max(1.0)
}
