#![allow(dead_code)]

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ttdyn::TensorTrain;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_state(dims: &[usize], rank: usize, seed: u64) -> TensorTrain {
    TensorTrain::random(dims, rank, &mut rng(seed))
}

pub fn dist(a: &Array1<C64>, b: &Array1<C64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm(a: &Array1<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn matvec(h: &Array2<f64>, v: &Array1<C64>) -> Array1<C64> {
    Array1::from_shape_fn(h.nrows(), |i| {
        h.row(i).iter().zip(v).map(|(&a, &x)| x * a).sum::<C64>()
    })
}

pub fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (p, q) = a.dim();
    let (r, s) = b.dim();
    Array2::from_shape_fn((p * r, q * s), |(i, j)| a[[i / r, j / s]] * b[[i % r, j % s]])
}

/// `op` acting on `site` of a chain with local dimensions `dims`.
pub fn embed(dims: &[usize], site: usize, op: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::from_elem((1, 1), 1.0);
    for (i, &d) in dims.iter().enumerate() {
        let f = if i == site { op.clone() } else { Array2::eye(d) };
        out = kron(&out, &f);
    }
    out
}

pub fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Real embedding `[[Re, -Im], [Im, Re]]`; every singular value of `a`
/// appears twice in it.
fn embedding(a: &Array2<C64>) -> Array2<f64> {
    let (m, n) = a.dim();
    Array2::from_shape_fn((2 * m, 2 * n), |(i, j)| {
        let z = a[[i % m, j % n]];
        match (i < m, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Cyclic Jacobi eigensolver for a real symmetric matrix; eigenpairs sorted
/// by descending eigenvalue.
fn jacobi_eigh(mut g: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let k = g.nrows();
    let mut v = Array2::<f64>::eye(k);
    for _ in 0..100 {
        let mut off = 0.0;
        let mut scale = 0.0;
        for p in 0..k {
            scale += g[[p, p]] * g[[p, p]];
            for q in p + 1..k {
                off += g[[p, q]] * g[[p, q]];
            }
        }
        if off <= 1e-32 * scale.max(1e-300) {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                if g[[p, q]] == 0.0 {
                    continue;
                }
                let theta = (g[[q, q]] - g[[p, p]]) / (2.0 * g[[p, q]]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let (grp, grq) = (g[[r, p]], g[[r, q]]);
                    g[[r, p]] = c * grp - s * grq;
                    g[[r, q]] = s * grp + c * grq;
                }
                for r in 0..k {
                    let (gpr, gqr) = (g[[p, r]], g[[q, r]]);
                    g[[p, r]] = c * gpr - s * gqr;
                    g[[q, r]] = s * gpr + c * gqr;
                }
                for r in 0..k {
                    let (vrp, vrq) = (v[[r, p]], v[[r, q]]);
                    v[[r, p]] = c * vrp - s * vrq;
                    v[[r, q]] = s * vrp + c * vrq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| g[[b, b]].total_cmp(&g[[a, a]]));
    let vals = order.iter().map(|&i| g[[i, i]]).collect();
    let vecs = Array2::from_shape_fn((k, k), |(r, c)| v[[r, order[c]]]);
    (vals, vecs)
}

/// Singular values of a complex matrix, descending. Independent of the
/// crate's SVD backend.
pub fn singular_values(a: &Array2<C64>) -> Vec<f64> {
    let b = embedding(a);
    let (vals, _) = jacobi_eigh(b.t().dot(&b));
    vals.into_iter().step_by(2).map(|x| x.max(0.0).sqrt()).collect()
}

/// Best rank-`r` approximation of a complex matrix (Eckart-Young), assuming
/// no tie between singular values `r` and `r + 1`.
pub fn best_rank(a: &Array2<C64>, r: usize) -> Array2<C64> {
    let (m, n) = a.dim();
    let b = embedding(a);
    let (_, vecs) = jacobi_eigh(b.t().dot(&b));
    let keep = (2 * r).min(2 * n);
    let vr = vecs.slice(ndarray::s![.., ..keep]).to_owned();
    let proj = b.dot(&vr).dot(&vr.t());
    Array2::from_shape_fn((m, n), |(i, j)| C64::new(proj[[i, j]], proj[[i + m, j]]))
}

/// `v` reshaped to `(rows, len / rows)`, row-major.
pub fn unfold(v: &Array1<C64>, rows: usize) -> Array2<C64> {
    let cols = v.len() / rows;
    Array2::from_shape_fn((rows, cols), |(i, j)| v[i * cols + j])
}
