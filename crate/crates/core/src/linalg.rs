//! Dense complex linear algebra helpers on top of nalgebra.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn from_real(n: usize, entries: &[f64]) -> CMat {
    CMat::from_row_iterator(n, n, entries.iter().map(|&x| c(x, 0.0)))
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// `(M − M†)/(2i)`, so that `M = herm(M) + i·antiherm(M)`.
pub fn antihermitian_part(m: &CMat) -> CMat {
    (m - m.adjoint()) * c(0.0, -0.5)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_error(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    // The iteration has been seen to return NaN when entries span hundreds of
    // decades, so scale to unit size and flush negligible entries.
    let scale = max_abs(m);
    if scale == 0.0 || !scale.is_finite() {
        return (vec![if scale == 0.0 { 0.0 } else { f64::NAN }; n], eye(n));
    }
    let mut unit = hermitian_part(&m.unscale(scale));
    for z in unit.iter_mut() {
        if z.norm() < 1e-100 {
            *z = C64::new(0.0, 0.0);
        }
    }
    let eig = unit.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k] * scale).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    eigh(m).0
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    eigvalsh(m).first().copied().unwrap_or(0.0)
}

/// `S f(Λ) S†` for Hermitian `m = S Λ S†`.
pub fn herm_apply(m: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let (vals, s) = eigh(m);
    let mut scaled = s.clone();
    for (j, &l) in vals.iter().enumerate() {
        let fj = f(l);
        for x in scaled.column_mut(j).iter_mut() {
            *x *= fj;
        }
    }
    scaled * s.adjoint()
}

/// Projection onto the PSD cone, zeroing eigenvalues below `floor`.
pub fn psd_clip(m: &CMat, floor: f64) -> CMat {
    herm_apply(m, |l| c(if l < floor { 0.0 } else { l }, 0.0))
}

pub fn herm_sqrt(m: &CMat) -> CMat {
    herm_apply(m, |l| c(l.max(0.0).sqrt(), 0.0))
}

/// `e^{−iHt}` for Hermitian `H`.
pub fn expm_herm(h: &CMat, t: f64) -> CMat {
    herm_apply(h, |l| C64::from_polar(1.0, -l * t))
}

/// General matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(m: &CMat) -> CMat {
    let n = m.nrows();
    let norm1 = (0..n).map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm1 * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = m.scale(scale);
    let mut term = eye(n);
    let mut sum = eye(n);
    for k in 1..=18 {
        term = (&term * &a).unscale(k as f64);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Inverse with a residual check. Near-singular matrices are reported as
/// errors instead of returning garbage.
pub fn inverse(m: &CMat) -> Result<CMat> {
    let n = m.nrows();
    let inv = m.clone().try_inverse().ok_or_else(|| Error::Singular(format!("{n}x{n} matrix has no LU inverse")))?;
    let scale = max_abs(m) * max_abs(&inv);
    if !scale.is_finite() || scale > 1e13 {
        return Err(Error::Singular(format!("condition estimate {scale:e}")));
    }
    let residual = max_abs(&(m * &inv - eye(n)));
    if residual > 1e-10_f64.max(1e-15 * scale) {
        return Err(Error::Singular(format!("inverse residual {residual:e}")));
    }
    Ok(inv)
}

/// Solve `X M = B` for `X`.
pub fn right_solve(b: &CMat, m: &CMat) -> Result<CMat> {
    let lu = m.adjoint().lu();
    lu.solve(&b.adjoint()).map(|x| x.adjoint()).ok_or_else(|| Error::Singular(format!("{}x{} right solve", m.nrows(), m.ncols())))
}

pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().fold(0.0, |a: f64, &b| a.max(b))
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm_herm(m: &CMat) -> f64 {
    eigvalsh(m).iter().map(|l| l.abs()).sum()
}

pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    0.5 * trace_norm_herm(&(a - b))
}

/// Determinant by LU with partial pivoting; the empty matrix has determinant one.
pub fn det(m: &CMat) -> C64 {
    if m.nrows() == 0 {
        return c(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

pub fn vec_from(entries: &[C64]) -> CVec {
    CVec::from_column_slice(entries)
}
