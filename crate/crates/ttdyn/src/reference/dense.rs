use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::slim::{effective_frequencies, ChainParameters};

/// Largest Hilbert space the dense oracle accepts.
pub const DENSE_CAP: usize = 4096;

/// Dense state vector, first site most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    pub amplitudes: Array1<C64>,
}

impl DenseState {
    pub fn new(amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.len() > DENSE_CAP {
            return Err(Error::SystemTooLarge { dim: amplitudes.len(), cap: DENSE_CAP });
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::param("state", "non-finite amplitude"));
        }
        Ok(DenseState { amplitudes })
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Array1<C64>) -> f64 {
        self.amplitudes.iter().zip(other).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }
}

/// A product of single-site factors `(site, matrix)` times a coefficient.
struct Term {
    coef: f64,
    factors: Vec<(usize, Array2<f64>)>,
}

/// Per-column nonzeros of a small matrix.
fn column_nonzeros(m: &Array2<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).filter(|&i| m[[i, j]] != 0.0).map(|i| (i, m[[i, j]])).collect())
        .collect()
}

fn accumulate(h: &mut Array2<f64>, dims: &[usize], term: &Term) {
    let n = dims.len();
    let mut strides = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let cols: Vec<(usize, usize, Vec<Vec<(usize, f64)>>)> = term
        .factors
        .iter()
        .map(|(site, m)| (*site, strides[*site], column_nonzeros(m)))
        .collect();
    let dim = h.nrows();
    for col in 0..dim {
        // Expand the product one factor at a time: (row, value) pairs.
        let mut partial: Vec<(usize, f64)> = vec![(col, term.coef)];
        for (site, stride, nz) in &cols {
            let digit = (col / stride) % dims[*site];
            let mut next = Vec::with_capacity(partial.len() * 2);
            for &(row, v) in &partial {
                for &(k, x) in &nz[digit] {
                    next.push((row - digit * stride + k * stride, v * x));
                }
            }
            partial = next;
        }
        for (row, v) in partial {
            h[[row, col]] += v;
        }
    }
}

fn lowering(d: usize) -> Array2<f64> {
    Array2::from_shape_fn((d, d), |(i, j)| if j == i + 1 { (j as f64).sqrt() } else { 0.0 })
}

/// Dense Hamiltonian assembled term by term from the model definition,
/// with displacements `R_i = (c_i† + c_i) / sqrt(2 m ν̃_i)`.
pub fn dense_hamiltonian(params: &ChainParameters) -> Result<Array2<f64>> {
    params.validate()?;
    let dim = params.hilbert_dim().unwrap_or(usize::MAX);
    if dim > DENSE_CAP {
        return Err(Error::SystemTooLarge { dim, cap: DENSE_CAP });
    }
    let n = params.n_sites;
    let kind = params.kind;
    let (dex, dph) = (
        if kind.has_excitons() { params.d_ex } else { 1 },
        if kind.has_phonons() { params.d_ph } else { 1 },
    );
    let dims = vec![dex * dph; n];
    let ex = |a: Array2<f64>| -> Array2<f64> {
        Array2::from_shape_fn((dex * dph, dex * dph), |(i, j)| {
            if i % dph == j % dph {
                a[[i / dph, j / dph]]
            } else {
                0.0
            }
        })
    };
    let ph = |a: Array2<f64>| -> Array2<f64> {
        Array2::from_shape_fn((dex * dph, dex * dph), |(i, j)| {
            if i / dph == j / dph {
                a[[i % dph, j % dph]]
            } else {
                0.0
            }
        })
    };
    let mut terms: Vec<Term> = Vec::new();
    if kind.has_excitons() {
        let b = lowering(dex);
        let bd = b.t().to_owned();
        let num = bd.dot(&b);
        for i in 0..n {
            terms.push(Term { coef: params.alpha, factors: vec![(i, ex(num.clone()))] });
        }
        for i in 0..n - 1 {
            terms.push(Term {
                coef: params.beta,
                factors: vec![(i, ex(bd.clone())), (i + 1, ex(b.clone()))],
            });
            terms.push(Term {
                coef: params.beta,
                factors: vec![(i, ex(b.clone())), (i + 1, ex(bd.clone()))],
            });
        }
    }
    if kind.has_phonons() {
        let freq = effective_frequencies(params)?;
        let c = lowering(dph);
        let cd = c.t().to_owned();
        let r = |i: usize| ph((&cd + &c) / (2.0 * params.mass * freq.nu_tilde[i]).sqrt());
        for i in 0..n {
            let shifted = cd.dot(&c) + 0.5 * Array2::<f64>::eye(dph);
            terms.push(Term { coef: freq.nu_tilde[i], factors: vec![(i, ph(shifted))] });
        }
        for i in 0..n - 1 {
            let mu = params.mass * params.mass / (2.0 * params.mass);
            terms.push(Term {
                coef: -mu * params.omega * params.omega,
                factors: vec![(i, r(i)), (i + 1, r(i + 1))],
            });
        }
        if kind.has_excitons() {
            let b = lowering(dex);
            let num = ex(b.t().dot(&b));
            for i in 0..n {
                if i + 1 < n {
                    terms.push(Term { coef: params.sigma, factors: vec![(i, num.clone()), (i + 1, r(i + 1))] });
                }
                if i > 0 {
                    terms.push(Term { coef: -params.sigma, factors: vec![(i, num.clone()), (i - 1, r(i - 1))] });
                }
            }
        }
    }
    let mut h = Array2::zeros((dim, dim));
    for t in &terms {
        accumulate(&mut h, &dims, t);
    }
    Ok(h)
}

/// Conserved label per basis state, used to block-diagonalize the dense
/// Hamiltonian: exciton number when excitons are present, otherwise the
/// parity of the total phonon number.
pub fn conserved_labels(params: &ChainParameters) -> Vec<i64> {
    let d = params.local_dim();
    let n = params.n_sites;
    let dim = params.hilbert_dim().unwrap_or(0);
    (0..dim)
        .map(|idx| {
            let mut rest = idx;
            let mut ex = 0i64;
            let mut ph = 0i64;
            for _ in 0..n {
                let digit = rest % d;
                rest /= d;
                match params.kind {
                    crate::slim::SystemKind::Exciton => ex += digit as i64,
                    crate::slim::SystemKind::Phonon => ph += digit as i64,
                    crate::slim::SystemKind::Coupled => ex += (digit / params.d_ph) as i64,
                }
            }
            if params.kind.has_excitons() {
                ex
            } else {
                ph % 2
            }
        })
        .collect()
}

struct Sector {
    indices: Vec<usize>,
    values: Array1<f64>,
    vectors: Array2<f64>,
}

/// `exp(-i t H)` through a cached eigendecomposition, block by block over
/// conserved sectors.
pub struct DensePropagator {
    dim: usize,
    sectors: Vec<Sector>,
}

impl DensePropagator {
    /// `labels` must be conserved by `h`; this is verified.
    pub fn new(h: &Array2<f64>, labels: Option<&[i64]>) -> Result<Self> {
        let dim = h.nrows();
        if h.ncols() != dim {
            return Err(Error::DimensionMismatch("Hamiltonian is not square".into()));
        }
        if dim > DENSE_CAP {
            return Err(Error::SystemTooLarge { dim, cap: DENSE_CAP });
        }
        let owned;
        let labels = match labels {
            Some(l) => {
                if l.len() != dim {
                    return Err(Error::DimensionMismatch("one label per basis state".into()));
                }
                l
            }
            None => {
                owned = vec![0i64; dim];
                &owned[..]
            }
        };
        for ((i, j), &x) in h.indexed_iter() {
            if x != 0.0 && labels[i] != labels[j] {
                return Err(Error::param("labels", format!("H couples sectors at ({i}, {j})")));
            }
        }
        let mut distinct: Vec<i64> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let mut sectors = Vec::with_capacity(distinct.len());
        for lab in distinct {
            let indices: Vec<usize> = (0..dim).filter(|&i| labels[i] == lab).collect();
            let k = indices.len();
            let block = Array2::from_shape_fn((k, k), |(a, b)| h[[indices[a], indices[b]]]);
            let (values, vectors) = linalg::eigh_real(block.view())?;
            sectors.push(Sector { indices, values, vectors });
        }
        Ok(DensePropagator { dim, sectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// States at each of `times`, sharing one projection onto the eigenbasis.
    pub fn trajectory(&self, psi0: &DenseState, times: &[f64]) -> Result<Vec<DenseState>> {
        if psi0.amplitudes.len() != self.dim {
            return Err(Error::DimensionMismatch("state and Hamiltonian differ in size".into()));
        }
        let coeffs: Vec<(Array1<f64>, Array1<f64>)> = self
            .sectors
            .iter()
            .map(|s| {
                let re = Array1::from_iter(s.indices.iter().map(|&i| psi0.amplitudes[i].re));
                let im = Array1::from_iter(s.indices.iter().map(|&i| psi0.amplitudes[i].im));
                (s.vectors.t().dot(&re), s.vectors.t().dot(&im))
            })
            .collect();
        Ok(times
            .iter()
            .map(|&t| {
                let mut out = Array1::<C64>::zeros(self.dim);
                for (s, (cr, ci)) in self.sectors.iter().zip(&coeffs) {
                    let mut pr = Array1::zeros(cr.len());
                    let mut pi = Array1::zeros(cr.len());
                    for k in 0..cr.len() {
                        let z = C64::new(cr[k], ci[k]) * C64::from_polar(1.0, -t * s.values[k]);
                        pr[k] = z.re;
                        pi[k] = z.im;
                    }
                    let yr = s.vectors.dot(&pr);
                    let yi = s.vectors.dot(&pi);
                    for (a, &i) in s.indices.iter().enumerate() {
                        out[i] = C64::new(yr[a], yi[a]);
                    }
                }
                DenseState { amplitudes: out }
            })
            .collect())
    }

    pub fn propagate(&self, psi0: &DenseState, t: f64) -> Result<DenseState> {
        Ok(self.trajectory(psi0, &[t])?.pop().expect("one time"))
    }

    /// Eigenvalues of all sectors, ascending.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.sectors.iter().flat_map(|s| s.values.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        all
    }
}

/// One-shot `exp(-i t H) psi0`.
pub fn dense_propagate(psi0: &DenseState, h: &Array2<f64>, t: f64) -> Result<DenseState> {
    DensePropagator::new(h, None)?.propagate(psi0, t)
}
