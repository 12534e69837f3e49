//! Single-site TDVP by projector splitting: a left-to-right and a
//! right-to-left half-step sweep at fixed ranks.

use ndarray::{s, Array1, Array2, Array3, ArrayView2};
use num_complex::Complex64 as C64;

use super::{check_finite, Integrator, PropagatorConfig, Scheme};
use crate::error::Result;
use crate::linalg::{self, expm_tridiagonal_e1, Spectral, ONE};
use crate::tt::{TensorTrain, TruncationPolicy, TtOperator};

/// Local problems up to this size are exponentiated densely.
const DENSE_LIMIT: usize = 32;
const LANCZOS_TOL: f64 = 1e-12;
const MAX_SUBSTEP_DEPTH: u32 = 24;

/// Environment: one `(bra, ket)` matrix per operator bond index.
type Env = Vec<Array2<C64>>;

fn matrix<'a>(core: &'a Array3<C64>, rows: usize, cols: usize) -> ArrayView2<'a, C64> {
    core.view().into_shape_with_order((rows, cols)).expect("standard layout")
}

fn to_core(m: Array2<C64>, rl: usize, d: usize, rr: usize) -> Array3<C64> {
    let m = if m.is_standard_layout() { m } else { m.as_standard_layout().into_owned() };
    m.into_shape_with_order((rl, d, rr)).expect("reshape")
}

/// Left environment of site `i + 1` from that of site `i`.
fn extend_left(h: &TtOperator, i: usize, env: &Env, core: &Array3<C64>) -> Env {
    let (rl, d, rr) = core.dim();
    let rb = h.core(i).dim().3;
    let ah = matrix(core, rl * d, rr).t().mapv(|z| z.conj());
    let mut out = vec![Array2::<C64>::zeros((rr, rr)); rb];
    let mut cache: Vec<Option<Array3<C64>>> = vec![None; env.len()];
    for blk in h.blocks(i) {
        let t1 = cache[blk.a].get_or_insert_with(|| {
            to_core(env[blk.a].dot(&matrix(core, rl, d * rr)), rl, d, rr)
        });
        let t2 = blk.act_physical(t1);
        out[blk.b] += &ah.dot(&matrix(&t2, rl * d, rr));
    }
    out
}

/// Right environment of site `i - 1` from that of site `i`.
fn extend_right(h: &TtOperator, i: usize, env: &Env, core: &Array3<C64>) -> Env {
    let (rl, d, rr) = core.dim();
    let ra = h.core(i).dim().0;
    let ac = matrix(core, rl, d * rr).mapv(|z| z.conj());
    let mut out = vec![Array2::<C64>::zeros((rl, rl)); ra];
    let mut cache: Vec<Option<Array3<C64>>> = vec![None; env.len()];
    for blk in h.blocks(i) {
        let u = cache[blk.b].get_or_insert_with(|| {
            to_core(matrix(core, rl * d, rr).dot(&env[blk.b].t()), rl, d, rr)
        });
        let v = blk.act_physical(u);
        out[blk.a] += &ac.dot(&matrix(&v, rl, d * rr).t());
    }
    out
}

/// `H_eff x` for the core of site `i`.
fn site_matvec(h: &TtOperator, i: usize, l: &Env, r: &Env, x: &Array3<C64>) -> Array3<C64> {
    let (rl, d, rr) = x.dim();
    let mut t1: Vec<Option<Array3<C64>>> = vec![None; l.len()];
    let mut t2: Vec<Option<Array3<C64>>> = vec![None; r.len()];
    for blk in h.blocks(i) {
        let a = t1[blk.a]
            .get_or_insert_with(|| to_core(l[blk.a].dot(&matrix(x, rl, d * rr)), rl, d, rr));
        let w = blk.act_physical(a);
        match &mut t2[blk.b] {
            Some(acc) => *acc += &w,
            slot => *slot = Some(w),
        }
    }
    let mut y = Array2::<C64>::zeros((rl * d, rr));
    for (b, t) in t2.iter().enumerate() {
        if let Some(t) = t {
            ndarray::linalg::general_mat_mul(ONE, &matrix(t, rl * d, rr), &r[b].t(), ONE, &mut y);
        }
    }
    to_core(y, rl, d, rr)
}

/// `K c = Σ_b L_b c R_bᵀ` for the bond matrix between two sites.
fn bond_matvec(l: &Env, r: &Env, c: &Array2<C64>) -> Array2<C64> {
    let mut y = Array2::<C64>::zeros(c.dim());
    for (lb, rb) in l.iter().zip(r) {
        y += &lb.dot(c).dot(&rb.t());
    }
    y
}

/// `exp(-i tau A) x` for Hermitian `A` given by its action, with a Lanczos
/// space of at most `m` vectors. Steps that would not converge are split in
/// halves; problems of size at most 32 are exponentiated densely.
pub fn lanczos_expm<F>(apply: F, x: &Array1<C64>, tau: f64, m: usize) -> Result<Array1<C64>>
where
    F: Fn(&Array1<C64>) -> Array1<C64>,
{
    let n = x.len();
    if n <= DENSE_LIMIT {
        let mut a = Array2::<C64>::zeros((n, n));
        let mut e = Array1::<C64>::zeros(n);
        for j in 0..n {
            e[j] = ONE;
            a.column_mut(j).assign(&apply(&e));
            e[j] = C64::new(0.0, 0.0);
        }
        let herm = (&a + &a.t().mapv(|z| z.conj())).mapv(|z| 0.5 * z);
        return Ok(Spectral::of_hermitian(herm.view())?.apply(tau, x.view()));
    }
    lanczos_recursive(&apply, x, tau, m.max(2), 0)
}

fn dot(a: &Array1<C64>, b: &Array1<C64>) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &Array1<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn lanczos_recursive<F>(apply: &F, x: &Array1<C64>, tau: f64, m: usize, depth: u32) -> Result<Array1<C64>>
where
    F: Fn(&Array1<C64>) -> Array1<C64>,
{
    let nx = norm(x);
    if nx == 0.0 || tau == 0.0 {
        return Ok(x.clone());
    }
    let m = m.min(x.len());
    let mut basis = vec![x.mapv(|z| z / nx)];
    let mut alphas: Vec<f64> = Vec::with_capacity(m);
    let mut betas: Vec<f64> = Vec::with_capacity(m);
    loop {
        let j = basis.len() - 1;
        let mut w = apply(&basis[j]);
        alphas.push(dot(&basis[j], &w).re);
        // Full reorthogonalization, twice for stability.
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                w.scaled_add(-c, v);
            }
        }
        let beta = norm(&w);
        let c = expm_tridiagonal_e1(&alphas, &betas, tau)?;
        let invariant = beta < 1e-14 * nx.max(1.0);
        let estimate = beta * c[j].norm();
        if invariant || estimate < LANCZOS_TOL {
            let mut y = Array1::<C64>::zeros(x.len());
            for (ck, v) in c.iter().zip(&basis) {
                y.scaled_add(*ck * nx, v);
            }
            return Ok(y);
        }
        if basis.len() == m {
            if depth >= MAX_SUBSTEP_DEPTH {
                let mut y = Array1::<C64>::zeros(x.len());
                for (ck, v) in c.iter().zip(&basis) {
                    y.scaled_add(*ck * nx, v);
                }
                return Ok(y);
            }
            let half = lanczos_recursive(apply, x, 0.5 * tau, m, depth + 1)?;
            return lanczos_recursive(apply, &half, 0.5 * tau, m, depth + 1);
        }
        betas.push(beta);
        basis.push(w.mapv(|z| z / beta));
    }
}

fn flatten3(a: &Array3<C64>) -> Array1<C64> {
    Array1::from_iter(a.iter().copied())
}

fn evolve_site(
    h: &TtOperator,
    i: usize,
    l: &Env,
    r: &Env,
    core: &Array3<C64>,
    tau: f64,
    m: usize,
) -> Result<Array3<C64>> {
    let dim = core.dim();
    let apply = |v: &Array1<C64>| {
        let x = v.clone().into_shape_with_order(dim).expect("reshape");
        flatten3(&site_matvec(h, i, l, r, &x))
    };
    let y = lanczos_expm(apply, &flatten3(core), tau, m)?;
    Ok(y.into_shape_with_order(dim).expect("reshape"))
}

fn evolve_bond(l: &Env, r: &Env, c: &Array2<C64>, tau: f64, m: usize) -> Result<Array2<C64>> {
    let dim = c.dim();
    let apply = |v: &Array1<C64>| {
        let x = v.clone().into_shape_with_order(dim).expect("reshape");
        Array1::from_iter(bond_matvec(l, r, &x).iter().copied())
    };
    let y = lanczos_expm(apply, &Array1::from_iter(c.iter().copied()), tau, m)?;
    Ok(y.into_shape_with_order(dim).expect("reshape"))
}

/// Right-canonical state with center 0 whose bonds are enlarged to
/// `min(max_rank, feasible)` by zero blocks. The orthonormalization fills
/// the new directions with arbitrary orthonormal vectors, so the state is
/// unchanged but the projected dynamics can populate them.
fn padded(psi: &TensorTrain, max_rank: usize) -> TensorTrain {
    let n = psi.n_sites();
    let full = TensorTrain::feasible_ranks(&psi.dims(), usize::MAX);
    if (0..=n).any(|k| psi.ranks()[k] > full[k]) {
        // Redundant bonds would break the thin factorizations below.
        let exact = psi.truncate(&TruncationPolicy::exact()).map(|(t, _)| t);
        if let Ok(t) = exact {
            return padded(&t, max_rank);
        }
    }
    let feasible = TensorTrain::feasible_ranks(&psi.dims(), max_rank);
    let current = psi.ranks();
    if (0..=n).all(|k| current[k] >= feasible[k]) {
        return psi.right_orthonormalize(0);
    }
    let target: Vec<usize> = (0..=n).map(|k| current[k].max(feasible[k])).collect();
    let cores = (0..n)
        .map(|i| {
            let c = psi.core(i);
            let (rl, d, rr) = c.dim();
            let mut out = Array3::<C64>::zeros((target[i], d, target[i + 1]));
            out.slice_mut(s![..rl, .., ..rr]).assign(c);
            out
        })
        .collect();
    let mut out = TensorTrain::from_cores_unchecked(cores);
    out.right_orthonormalize_in_place(0);
    out
}

/// Right environments for a right-canonical state: `r[i]` covers sites `> i`.
fn right_envs(h: &TtOperator, psi: &TensorTrain) -> Vec<Env> {
    let n = psi.n_sites();
    let mut r: Vec<Env> = vec![Vec::new(); n];
    r[n - 1] = vec![Array2::from_elem((1, 1), ONE)];
    for i in (1..n).rev() {
        r[i - 1] = extend_right(h, i, &r[i], psi.core(i));
    }
    r
}

/// One symmetric TDVP step on a state that is right-canonical with
/// center 0; the result has the same form.
fn sweep_pair(
    h: &TtOperator,
    psi: &mut TensorTrain,
    r: &mut [Env],
    dt: f64,
    m: usize,
) -> Result<()> {
    let n = psi.n_sites();
    let tau = 0.5 * dt;
    let mut l: Vec<Env> = vec![Vec::new(); n];
    l[0] = vec![Array2::from_elem((1, 1), ONE)];
    for i in 0..n {
        let a = evolve_site(h, i, &l[i], &r[i], psi.core(i), tau, m)?;
        if i + 1 == n {
            psi.set_core(i, a);
            break;
        }
        let (rl, d, rr) = a.dim();
        let (q, c) = linalg::qr(matrix(&a, rl * d, rr));
        let q = to_core(q, rl, d, rr);
        l[i + 1] = extend_left(h, i, &l[i], &q);
        let c = evolve_bond(&l[i + 1], &r[i], &c, -tau, m)?;
        let next = psi.core(i + 1);
        let (_, d1, rr1) = next.dim();
        let merged = c.dot(&matrix(next, rr, d1 * rr1));
        psi.set_core(i, q);
        psi.set_core(i + 1, to_core(merged, rr, d1, rr1));
    }
    for i in (0..n).rev() {
        let a = evolve_site(h, i, &l[i], &r[i], psi.core(i), tau, m)?;
        if i == 0 {
            psi.set_core(0, a);
            break;
        }
        let (rl, d, rr) = a.dim();
        let (c, q) = linalg::lq(matrix(&a, rl, d * rr));
        let q = to_core(q, rl, d, rr);
        r[i - 1] = extend_right(h, i, &r[i], &q);
        let c = evolve_bond(&l[i], &r[i - 1], &c, -tau, m)?;
        let prev = psi.core(i - 1);
        let (rl0, d0, _) = prev.dim();
        let merged = matrix(prev, rl0 * d0, rl).dot(&c);
        psi.set_core(i, q);
        psi.set_core(i - 1, to_core(merged, rl0, d0, rl));
    }
    psi.set_gauge(0, 0);
    Ok(())
}

/// One TDVP step; bonds are first enlarged to `max_rank` where feasible.
pub fn step_tdvp(
    psi: &TensorTrain,
    h: &TtOperator,
    dt: f64,
    max_rank: usize,
    local_exp_dim: usize,
) -> Result<TensorTrain> {
    let mut out = padded(psi, max_rank);
    let mut r = right_envs(h, &out);
    sweep_pair(h, &mut out, &mut r, dt, local_exp_dim)?;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Tdvp {
    config: PropagatorConfig,
    hamiltonian: TtOperator,
    steps: usize,
}

impl Tdvp {
    pub fn new(config: PropagatorConfig, hamiltonian: TtOperator) -> Self {
        Tdvp { config, hamiltonian, steps: 0 }
    }
}

impl Integrator for Tdvp {
    fn scheme(&self) -> Scheme {
        Scheme::Tdvp
    }

    fn advance(&mut self, psi: &TensorTrain, n: usize) -> Result<TensorTrain> {
        let mut out = padded(psi, self.config.max_rank);
        let mut r = right_envs(&self.hamiltonian, &out);
        for _ in 0..n {
            sweep_pair(&self.hamiltonian, &mut out, &mut r, self.config.dt, self.config.local_exp_dim)?;
            self.steps += 1;
            check_finite(&out, self.steps as f64 * self.config.dt)?;
        }
        Ok(out)
    }
}
