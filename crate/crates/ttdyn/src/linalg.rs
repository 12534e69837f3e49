//! Thin bridge between `ndarray` storage and `faer` factorizations.
//!
//! All factorizations run sequentially so that results are bitwise stable
//! for a fixed build, independent of how many worker threads exist.

use faer::{Mat, MatRef, Par, Side};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };

fn faer_view<'a, T: Copy>(a: &'a ArrayView2<'_, T>) -> Option<MatRef<'a, T>> {
    let slice = a.as_slice()?;
    Some(MatRef::from_row_major_slice(slice, a.nrows(), a.ncols()))
}

fn to_faer<T: Copy>(a: ArrayView2<'_, T>) -> Mat<T>
where
    T: faer::traits::ComplexField,
{
    sequential();
    match faer_view(&a) {
        Some(m) => m.to_owned(),
        None => Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]]),
    }
}

fn from_faer<T: Copy>(m: MatRef<'_, T>) -> Array2<T> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Thin SVD `a = u * diag(s) * vh` with `s` descending.
pub struct Svd {
    pub u: Array2<C64>,
    pub s: Vec<f64>,
    pub vh: Array2<C64>,
}

pub fn svd(a: ArrayView2<'_, C64>) -> Result<Svd> {
    let (m, n) = a.dim();
    let k = m.min(n);
    if k == 0 {
        return Ok(Svd { u: Array2::zeros((m, 0)), s: vec![], vh: Array2::zeros((0, n)) });
    }
    let mat = to_faer(a);
    let dec = mat.thin_svd().map_err(|e| Error::Linalg(format!("svd: {e:?}")))?;
    let s = (0..k).map(|i| dec.S()[i].re).collect();
    let vh = Array2::from_shape_fn((k, n), |(i, j)| dec.V()[(j, i)].conj());
    Ok(Svd { u: from_faer(dec.U()), s, vh })
}

/// Thin QR `a = q * r`, `q` with orthonormal columns.
pub fn qr(a: ArrayView2<'_, C64>) -> (Array2<C64>, Array2<C64>) {
    let mat = to_faer(a);
    let dec = mat.qr();
    let q = dec.compute_thin_Q();
    let k = q.ncols();
    let r = dec.thin_R();
    let r = Array2::from_shape_fn((k, a.ncols()), |(i, j)| if i <= j { r[(i, j)] } else { ZERO });
    (from_faer(q.as_ref()), r)
}

/// Thin LQ `a = l * q`, `q` with orthonormal rows.
pub fn lq(a: ArrayView2<'_, C64>) -> (Array2<C64>, Array2<C64>) {
    let ah = a.t().mapv(|z| z.conj());
    let (q, r) = qr(ah.view());
    let standard = |m: Array2<C64>| m.t().mapv(|z| z.conj()).as_standard_layout().into_owned();
    (standard(r), standard(q))
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending,
/// eigenvectors as columns.
pub fn eigh_real(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let mat = to_faer(a);
    let dec = mat
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("eigh: {e:?}")))?;
    let n = a.nrows();
    let vals = Array1::from_shape_fn(n, |i| dec.S()[i]);
    Ok((vals, from_faer(dec.U())))
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(a: ArrayView2<'_, C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let mat = to_faer(a);
    let dec = mat
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("eigh: {e:?}")))?;
    let n = a.nrows();
    let vals = Array1::from_shape_fn(n, |i| dec.S()[i].re);
    Ok((vals, from_faer(dec.U())))
}

/// Spectral data of a Hermitian generator, cached so that `exp(-i tau h)`
/// can be formed for many `tau` at the cost of one decomposition.
#[derive(Clone, Debug)]
pub struct Spectral {
    pub values: Array1<f64>,
    pub vectors: Array2<C64>,
}

impl Spectral {
    pub fn of_real(h: ArrayView2<'_, f64>) -> Result<Self> {
        let (values, v) = eigh_real(h)?;
        Ok(Spectral { values, vectors: v.mapv(|x| C64::new(x, 0.0)) })
    }

    pub fn of_hermitian(h: ArrayView2<'_, C64>) -> Result<Self> {
        let (values, vectors) = eigh(h)?;
        Ok(Spectral { values, vectors })
    }

    /// `exp(-i tau h)` as a dense matrix.
    pub fn propagator(&self, tau: f64) -> Array2<C64> {
        let v = &self.vectors;
        let mut scaled = v.clone();
        for (mut col, &l) in scaled.columns_mut().into_iter().zip(self.values.iter()) {
            let ph = C64::from_polar(1.0, -tau * l);
            col.mapv_inplace(|z| z * ph);
        }
        scaled.dot(&v.t().mapv(|z| z.conj()))
    }

    /// `exp(-i tau h) x` without forming the propagator.
    pub fn apply(&self, tau: f64, x: ArrayView1<'_, C64>) -> Array1<C64> {
        let v = &self.vectors;
        let mut c = v.t().mapv(|z| z.conj()).dot(&x);
        for (ci, &l) in c.iter_mut().zip(self.values.iter()) {
            *ci *= C64::from_polar(1.0, -tau * l);
        }
        v.dot(&c)
    }
}

/// `exp(-i tau h)` for a real symmetric tridiagonal `h` given by its
/// diagonal and off-diagonal, applied to the first unit vector.
pub fn expm_tridiagonal_e1(diag: &[f64], off: &[f64], tau: f64) -> Result<Vec<C64>> {
    let m = diag.len();
    let h = Array2::from_shape_fn((m, m), |(i, j)| {
        if i == j {
            diag[i]
        } else if i + 1 == j {
            off[i]
        } else if j + 1 == i {
            off[j]
        } else {
            0.0
        }
    });
    let (vals, vecs) = eigh_real(h.view())?;
    Ok((0..m)
        .map(|i| {
            (0..m)
                .map(|k| C64::from_polar(vecs[[i, k]] * vecs[[0, k]], -tau * vals[k]))
                .sum()
        })
        .collect())
}

/// Frobenius-type maximum absolute entry difference.
pub fn max_abs_diff<T>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> f64
where
    T: Copy + std::ops::Sub<Output = T> + Into<C64>,
{
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).into().norm())
        .fold(0.0, f64::max)
}

fn sequential() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(Par::Seq));
}
