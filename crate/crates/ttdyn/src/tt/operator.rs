use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayViewMut2, Axis};
use num_complex::Complex64 as C64;

use super::state::TensorTrain;
use super::TruncationPolicy;
use crate::error::{Error, Result};
use crate::linalg::{self, ONE};

/// Nonzero `(a, b)` slice of an operator core.
#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub(crate) a: usize,
    pub(crate) b: usize,
    /// `d_out x d_in`
    pub(crate) m: Array2<C64>,
    /// True when `m` is the identity, which lets application skip a product.
    pub(crate) identity: bool,
    /// `(row, col, value)` of the nonzeros; ladder-operator blocks are sparse.
    nz: Vec<(usize, usize, f64)>,
}

impl Block {
    /// `dst += m src`, with `src` of shape `d_in x k`.
    pub(crate) fn add_to(&self, src: ArrayView2<'_, C64>, mut dst: ArrayViewMut2<'_, C64>) {
        if self.identity {
            dst += &src;
        } else if 4 * self.nz.len() > self.m.len() {
            ndarray::linalg::general_mat_mul(ONE, &self.m, &src, ONE, &mut dst);
        } else {
            for &(r, c, v) in &self.nz {
                dst.row_mut(r).scaled_add(C64::new(v, 0.0), &src.row(c));
            }
        }
    }

    /// `m` applied to every slice `t[x, :, :]`.
    pub(crate) fn act_physical(&self, t: &Array3<C64>) -> Array3<C64> {
        if self.identity {
            return t.clone();
        }
        let (n0, _, k) = t.dim();
        let mut out = Array3::zeros((n0, self.m.nrows(), k));
        for x in 0..n0 {
            self.add_to(t.index_axis(Axis(0), x), out.index_axis_mut(Axis(0), x));
        }
        out
    }
}

/// Order-N operator as a chain of real cores of shape
/// `(R_{i-1}, d_out, d_in, R_i)`.
#[derive(Clone, Debug)]
pub struct TtOperator {
    cores: Vec<Array4<f64>>,
    blocks: Vec<Vec<Block>>,
}

fn blocks_of(core: &Array4<f64>) -> Vec<Block> {
    let (ra, d_out, d_in, rb) = core.dim();
    let mut out = Vec::new();
    for a in 0..ra {
        for b in 0..rb {
            let m = core.slice(s![a, .., .., b]);
            if m.iter().all(|&x| x == 0.0) {
                continue;
            }
            let identity = d_out == d_in
                && m.indexed_iter().all(|((i, j), &x)| x == if i == j { 1.0 } else { 0.0 });
            let nz = m.indexed_iter().filter(|(_, &x)| x != 0.0).map(|((i, j), &x)| (i, j, x)).collect();
            out.push(Block { a, b, m: m.mapv(|x| C64::new(x, 0.0)), identity, nz });
        }
    }
    out
}

impl TtOperator {
    pub fn new(cores: Vec<Array4<f64>>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::DimensionMismatch("an operator needs at least one core".into()));
        }
        let n = cores.len();
        if cores[0].dim().0 != 1 || cores[n - 1].dim().3 != 1 {
            return Err(Error::DimensionMismatch("boundary operator ranks must be 1".into()));
        }
        for i in 1..n {
            if cores[i - 1].dim().3 != cores[i].dim().0 {
                return Err(Error::DimensionMismatch(format!("operator bond {i} inconsistent")));
            }
        }
        for (i, c) in cores.iter().enumerate() {
            if c.dim().1 != c.dim().2 {
                return Err(Error::DimensionMismatch(format!("operator core {i} is not square")));
            }
        }
        let cores: Vec<Array4<f64>> =
            cores.into_iter().map(|c| c.as_standard_layout().into_owned()).collect();
        let blocks = cores.iter().map(blocks_of).collect();
        Ok(TtOperator { cores, blocks })
    }

    pub fn identity(dims: &[usize]) -> Self {
        let cores = dims
            .iter()
            .map(|&d| Array2::<f64>::eye(d).into_shape_with_order((1, d, d, 1)).expect("reshape"))
            .collect();
        Self::new(cores).expect("identity is well formed")
    }

    /// `O` acting on `site`, identity elsewhere.
    pub fn local(dims: &[usize], site: usize, op: &Array2<f64>) -> Result<Self> {
        if site >= dims.len() || op.dim() != (dims[site], dims[site]) {
            return Err(Error::DimensionMismatch(format!("local operator on site {site}")));
        }
        let mut cores: Vec<Array4<f64>> = dims
            .iter()
            .map(|&d| Array2::<f64>::eye(d).into_shape_with_order((1, d, d, 1)).expect("reshape"))
            .collect();
        let d = dims[site];
        cores[site] = op.clone().into_shape_with_order((1, d, d, 1)).expect("reshape");
        Self::new(cores)
    }

    /// `sum_i O_i` with one operator per site; operator rank 2.
    pub fn sum_of_local(ops: &[Array2<f64>]) -> Result<Self> {
        let n = ops.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("no local operators".into()));
        }
        if n == 1 {
            let d = ops[0].nrows();
            return Self::new(vec![ops[0].clone().into_shape_with_order((1, d, d, 1)).expect("reshape")]);
        }
        let cores = ops
            .iter()
            .enumerate()
            .map(|(i, op)| {
                let d = op.nrows();
                let eye = Array2::<f64>::eye(d);
                let (ra, rb) = (if i == 0 { 1 } else { 2 }, if i == n - 1 { 1 } else { 2 });
                let mut c = Array4::zeros((ra, d, d, rb));
                // Bond state 0: nothing placed yet; 1: operator placed.
                let from = |a: usize| if i == 0 { 0 } else { a };
                let to = |b: usize| if i == n - 1 { 0 } else { b };
                if i < n - 1 {
                    c.slice_mut(s![from(0), .., .., to(0)]).assign(&eye);
                }
                c.slice_mut(s![from(0), .., .., to(1)]).assign(op);
                if i > 0 {
                    c.slice_mut(s![from(1), .., .., to(1)]).assign(&eye);
                }
                c
            })
            .collect();
        Self::new(cores)
    }

    pub fn n_sites(&self) -> usize {
        self.cores.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dim().1).collect()
    }

    /// Operator ranks `R_0 .. R_N`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.cores.iter().map(|c| c.dim().0).collect();
        r.push(1);
        r
    }

    pub fn core(&self, i: usize) -> &Array4<f64> {
        &self.cores[i]
    }

    pub(crate) fn blocks(&self, i: usize) -> &[Block] {
        &self.blocks[i]
    }

    pub fn cores(&self) -> &[Array4<f64>] {
        &self.cores
    }

    fn check(&self, psi: &TensorTrain) -> Result<()> {
        if self.dims() != psi.dims() {
            return Err(Error::DimensionMismatch(format!(
                "operator dims {:?} vs state dims {:?}",
                self.dims(),
                psi.dims()
            )));
        }
        Ok(())
    }

    /// Dense matrix, first site most significant.
    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n_sites();
        let h = n / 2;
        // Left half as (D_l, D_l, R_h), right half as (R_h, D_r, D_r).
        let mut left = Array3::<f64>::ones((1, 1, 1));
        for core in &self.cores[..h] {
            let (ra, d, _, rb) = core.dim();
            let (dl, _, _) = left.dim();
            let mut next = Array3::zeros((dl * d, dl * d, rb));
            for a in 0..ra {
                for b in 0..rb {
                    let w = core.slice(s![a, .., .., b]);
                    if w.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    let l = left.index_axis(Axis(2), a);
                    let mut out = next.index_axis_mut(Axis(2), b);
                    for ((s_, t), &wst) in w.indexed_iter() {
                        if wst == 0.0 {
                            continue;
                        }
                        for x in 0..dl {
                            for y in 0..dl {
                                out[[x * d + s_, y * d + t]] += wst * l[[x, y]];
                            }
                        }
                    }
                }
            }
            left = next;
        }
        let mut right = Array3::<f64>::ones((1, 1, 1));
        for core in self.cores[h..].iter().rev() {
            let (ra, d, _, rb) = core.dim();
            let (_, dr, _) = right.dim();
            let mut next = Array3::zeros((ra, d * dr, d * dr));
            for a in 0..ra {
                for b in 0..rb {
                    let w = core.slice(s![a, .., .., b]);
                    if w.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    let r = right.index_axis(Axis(0), b);
                    let mut out = next.index_axis_mut(Axis(0), a);
                    for ((s_, t), &wst) in w.indexed_iter() {
                        if wst == 0.0 {
                            continue;
                        }
                        for u in 0..dr {
                            for v in 0..dr {
                                out[[s_ * dr + u, t * dr + v]] += wst * r[[u, v]];
                            }
                        }
                    }
                }
            }
            right = next;
        }
        let (dl, _, rh) = left.dim();
        let dr = right.dim().1;
        let mut dense = Array2::zeros((dl * dr, dl * dr));
        for k in 0..rh {
            let l = left.index_axis(Axis(2), k);
            let r = right.index_axis(Axis(0), k);
            for ((x, y), &lxy) in l.indexed_iter() {
                if lxy == 0.0 {
                    continue;
                }
                dense
                    .slice_mut(s![x * dr..(x + 1) * dr, y * dr..(y + 1) * dr])
                    .scaled_add(lxy, &r);
            }
        }
        dense
    }

    /// Exact product; interior ranks multiply.
    pub fn apply(&self, psi: &TensorTrain) -> Result<TensorTrain> {
        self.check(psi)?;
        let cores = self
            .blocks
            .iter()
            .zip(&self.cores)
            .zip(psi.cores())
            .map(|((blocks, w), x)| {
                let (ra, d, _, rb) = w.dim();
                let (rl, _, rr) = x.dim();
                let mut out = Array3::<C64>::zeros((ra * rl, d, rb * rr));
                for blk in blocks {
                    for p in 0..rl {
                        blk.add_to(
                            x.index_axis(Axis(0), p),
                            out.slice_mut(s![blk.a * rl + p, .., blk.b * rr..(blk.b + 1) * rr]),
                        );
                    }
                }
                out
            })
            .collect();
        Ok(TensorTrain::from_cores_unchecked(cores))
    }

    /// Site `i` of `H psi` with the right bond contracted into `carry`
    /// (rows `b * r_i + q`); rows of the result are `a * r_{i-1} + p`.
    fn product_right(&self, i: usize, x: &Array3<C64>, carry: &Array2<C64>) -> Array3<C64> {
        let (rl, d, rr) = x.dim();
        let (ra, _, _, rb) = self.cores[i].dim();
        let k = carry.ncols();
        let xm = x.view().into_shape_with_order((rl * d, rr)).expect("standard layout");
        let mut xs: Vec<Option<Array3<C64>>> = vec![None; rb];
        let mut t = Array3::<C64>::zeros((ra * rl, d, k));
        for blk in &self.blocks[i] {
            let xb = xs[blk.b].get_or_insert_with(|| {
                let cb = carry.slice(s![blk.b * rr..(blk.b + 1) * rr, ..]);
                xm.dot(&cb).into_shape_with_order((rl, d, k)).expect("reshape")
            });
            for p in 0..rl {
                blk.add_to(xb.index_axis(Axis(0), p), t.index_axis_mut(Axis(0), blk.a * rl + p));
            }
        }
        t
    }

    /// Site `i` of `H psi` with the left bond contracted into `carry`
    /// (columns `a * r_{i-1} + p`); columns of the result are `b * r_i + q`.
    fn product_left(&self, i: usize, x: &Array3<C64>, carry: &Array2<C64>) -> Array3<C64> {
        let (rl, d, rr) = x.dim();
        let rb = self.cores[i].dim().3;
        let ra = self.cores[i].dim().0;
        let k = carry.nrows();
        let xm = x.view().into_shape_with_order((rl, d * rr)).expect("standard layout");
        let mut xs: Vec<Option<Array3<C64>>> = vec![None; ra];
        let mut t = Array3::<C64>::zeros((k, d, rb * rr));
        for blk in &self.blocks[i] {
            let xa = xs[blk.a].get_or_insert_with(|| {
                let ca = carry.slice(s![.., blk.a * rl..(blk.a + 1) * rl]);
                ca.dot(&xm).into_shape_with_order((k, d, rr)).expect("reshape")
            });
            for kk in 0..k {
                blk.add_to(xa.index_axis(Axis(0), kk), t.slice_mut(s![kk, .., blk.b * rr..(blk.b + 1) * rr]));
            }
        }
        t
    }

    /// `round(H psi)` without materializing the product ranks. Sites left of
    /// the middle are built with QR carries, sites right of it with LQ
    /// carries, so bonds near the chain ends collapse to their feasible size
    /// before any SVD. Equal to `apply` followed by `truncate` up to gauge
    /// and round-off; the result is left-canonical with center `N - 1`.
    pub fn apply_rounded(&self, psi: &TensorTrain, policy: &TruncationPolicy) -> Result<TensorTrain> {
        self.check(psi)?;
        if policy.max_rank < 1 {
            return Err(Error::InvalidPolicy("max_rank must be at least 1".into()));
        }
        let n = self.n_sites();
        let c = n / 2;
        let mut cores: Vec<Array3<C64>> = vec![Array3::zeros((0, 0, 0)); n];
        let mut lcarry = Array2::from_elem((1, 1), ONE);
        for i in 0..c {
            let t = self.product_left(i, &psi.cores()[i], &lcarry);
            let (k, d, cols) = t.dim();
            let tm = t.into_shape_with_order((k * d, cols)).expect("reshape");
            let (q, r) = linalg::qr(tm.view());
            let kk = q.ncols();
            cores[i] = q.into_shape_with_order((k, d, kk)).expect("reshape");
            lcarry = r;
        }
        let mut rcarry = Array2::from_elem((1, 1), ONE);
        for i in (c + 1..n).rev() {
            let t = self.product_right(i, &psi.cores()[i], &rcarry);
            let (rows, d, k) = t.dim();
            let tm = t.into_shape_with_order((rows, d * k)).expect("reshape");
            let (l, q) = linalg::lq(tm.view());
            let kk = q.nrows();
            cores[i] = q.into_shape_with_order((kk, d, k)).expect("reshape");
            rcarry = l;
        }
        let t = self.product_right(c, &psi.cores()[c], &rcarry);
        let (rows, d, k) = t.dim();
        let tm = t.into_shape_with_order((rows, d * k)).expect("reshape");
        let center = lcarry.dot(&tm);
        let kl = center.nrows();
        cores[c] = center.into_shape_with_order((kl, d, k)).expect("reshape");
        let mut out = TensorTrain::from_cores_unchecked(cores);
        out.set_gauge(c, c);
        out.truncate_from_center(policy)?;
        Ok(out)
    }

    /// `round(scale * H psi + phi)` in one pass. The bonds of the sum are
    /// direct sums `[H psi | phi]`, carried through the same QR and LQ sweeps
    /// as `apply_rounded`; the result is left-canonical with center `N - 1`.
    pub fn apply_add_rounded(
        &self,
        psi: &TensorTrain,
        scale: C64,
        phi: &TensorTrain,
        policy: &TruncationPolicy,
    ) -> Result<TensorTrain> {
        self.check(psi)?;
        self.check(phi)?;
        if policy.max_rank < 1 {
            return Err(Error::InvalidPolicy("max_rank must be at least 1".into()));
        }
        let n = self.n_sites();
        let c = n / 2;
        let mut cores: Vec<Array3<C64>> = vec![Array3::zeros((0, 0, 0)); n];
        let mut lcarry = ndarray::arr2(&[[scale, ONE]]);
        for i in 0..c {
            let t = self.sum_left(i, &psi.cores()[i], &phi.cores()[i], &lcarry);
            let (k, d, cols) = t.dim();
            let tm = t.into_shape_with_order((k * d, cols)).expect("reshape");
            let (q, r) = linalg::qr(tm.view());
            let kk = q.ncols();
            cores[i] = q.into_shape_with_order((k, d, kk)).expect("reshape");
            lcarry = r;
        }
        let mut rcarry = ndarray::arr2(&[[ONE], [ONE]]);
        for i in (c + 1..n).rev() {
            let t = self.sum_right(i, &psi.cores()[i], &phi.cores()[i], &rcarry);
            let (rows, d, k) = t.dim();
            let tm = t.into_shape_with_order((rows, d * k)).expect("reshape");
            let (l, q) = linalg::lq(tm.view());
            let kk = q.nrows();
            cores[i] = q.into_shape_with_order((kk, d, k)).expect("reshape");
            rcarry = l;
        }
        let t = self.sum_right(c, &psi.cores()[c], &phi.cores()[c], &rcarry);
        let (rows, d, k) = t.dim();
        let tm = t.into_shape_with_order((rows, d * k)).expect("reshape");
        let center = lcarry.dot(&tm);
        let kl = center.nrows();
        cores[c] = center.into_shape_with_order((kl, d, k)).expect("reshape");
        let mut out = TensorTrain::from_cores_unchecked(cores);
        out.set_gauge(c, c);
        out.truncate_from_center(policy)?;
        Ok(out)
    }

    /// `product_left` for the direct sum `[H x | y]`; the carry's columns
    /// split at `R_{i-1} * r_x`.
    fn sum_left(&self, i: usize, x: &Array3<C64>, y: &Array3<C64>, carry: &Array2<C64>) -> Array3<C64> {
        let (rlx, _, rrx) = x.dim();
        let (rly, d, rry) = y.dim();
        let (ra, _, _, rb) = self.cores[i].dim();
        let split = ra * rlx;
        let k = carry.nrows();
        let th = self.product_left(i, x, &carry.slice(s![.., ..split]).to_owned());
        let ym = y.view().into_shape_with_order((rly, d * rry)).expect("standard layout");
        let ty = carry.slice(s![.., split..]).dot(&ym);
        let mut t = Array3::<C64>::zeros((k, d, rb * rrx + rry));
        t.slice_mut(s![.., .., ..rb * rrx]).assign(&th);
        t.slice_mut(s![.., .., rb * rrx..])
            .assign(&ty.into_shape_with_order((k, d, rry)).expect("reshape"));
        t
    }

    /// `product_right` for the direct sum `[H x | y]`; the carry's rows
    /// split at `R_i * r_x`.
    fn sum_right(&self, i: usize, x: &Array3<C64>, y: &Array3<C64>, carry: &Array2<C64>) -> Array3<C64> {
        let (rlx, _, rrx) = x.dim();
        let (rly, d, rry) = y.dim();
        let (ra, _, _, rb) = self.cores[i].dim();
        let split = rb * rrx;
        let k = carry.ncols();
        let th = self.product_right(i, x, &carry.slice(s![..split, ..]).to_owned());
        let ym = y.view().into_shape_with_order((rly * d, rry)).expect("standard layout");
        let ty = ym.dot(&carry.slice(s![split.., ..]));
        let mut t = Array3::<C64>::zeros((ra * rlx + rly, d, k));
        t.slice_mut(s![..ra * rlx, .., ..]).assign(&th);
        t.slice_mut(s![ra * rlx.., .., ..])
            .assign(&ty.into_shape_with_order((rly, d, k)).expect("reshape"));
        t
    }

    /// `<a|O|b>`.
    pub fn sandwich(&self, a: &TensorTrain, b: &TensorTrain) -> Result<C64> {
        self.check(a)?;
        self.check(b)?;
        // env[(alpha, A)] as a stack of (ra x rb) matrices per operator bond.
        let mut env: Vec<Array2<C64>> = vec![Array2::from_elem((1, 1), ONE)];
        for i in 0..self.n_sites() {
            let (ca, cb) = (&a.cores()[i], &b.cores()[i]);
            let (ral, d, rar) = ca.dim();
            let (_, _, rbr) = cb.dim();
            let rop = self.cores[i].dim().3;
            let cam = ca.view().into_shape_with_order((ral * d, rar)).expect("layout");
            let cah = cam.t().mapv(|z| z.conj());
            let mut next = vec![Array2::<C64>::zeros((rar, rbr)); rop];
            for blk in &self.blocks[i] {
                let e = &env[blk.a];
                if e.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                    continue;
                }
                let t = absorb_left_view(e.view(), cb);
                let t2 = if blk.identity { t } else { blk.act_physical(&t) };
                let t2 = t2.into_shape_with_order((ral * d, rbr)).expect("reshape");
                next[blk.b] += &cah.dot(&t2);
            }
            env = next;
        }
        Ok(env[0][[0, 0]])
    }

    /// `<psi|O|psi>`, unnormalized.
    pub fn expectation(&self, psi: &TensorTrain) -> Result<C64> {
        self.sandwich(psi, psi)
    }
}

fn absorb_left_view(m: ArrayView2<'_, C64>, core: &Array3<C64>) -> Array3<C64> {
    let (rl, d, rr) = core.dim();
    let cm = core.view().into_shape_with_order((rl, d * rr)).expect("layout");
    m.dot(&cm).into_shape_with_order((m.nrows(), d, rr)).expect("reshape")
}
