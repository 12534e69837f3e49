use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView2, Axis};
use num_complex::Complex64 as C64;
use rand::Rng;

use super::TruncationPolicy;
use crate::error::{Error, Result};
use crate::linalg::{self, ONE, ZERO};

/// Which side of a split pair receives the singular values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Left core isometric, center moves to the right core.
    Right,
    /// Right core isometric, center stays on the left core.
    Left,
}

/// Result of splitting a two-site block.
#[derive(Clone, Debug)]
pub struct SplitPair {
    pub left: Array3<C64>,
    pub right: Array3<C64>,
    /// Sum of squared discarded singular values.
    pub discarded: f64,
}

/// Order-N state as a chain of cores of shape `(r_{i-1}, d_i, r_i)`.
///
/// Gauge bookkeeping: cores `j < left` are left-isometric and cores
/// `j > right` are right-isometric. The state has an orthogonality center
/// exactly when `left == right`.
#[derive(Clone, Debug)]
pub struct TensorTrain {
    cores: Vec<Array3<C64>>,
    left: usize,
    right: usize,
}

fn standard(core: Array3<C64>) -> Array3<C64> {
    if core.is_standard_layout() {
        core
    } else {
        core.as_standard_layout().into_owned()
    }
}

/// `(r_l * d, r_r)` view of a core.
fn left_matrix(core: &Array3<C64>) -> ArrayView2<'_, C64> {
    let (rl, d, rr) = core.dim();
    core.view().into_shape_with_order((rl * d, rr)).expect("standard layout")
}

/// `(r_l, d * r_r)` view of a core.
fn right_matrix(core: &Array3<C64>) -> ArrayView2<'_, C64> {
    let (rl, d, rr) = core.dim();
    core.view().into_shape_with_order((rl, d * rr)).expect("standard layout")
}

fn core_from(m: Array2<C64>, rl: usize, d: usize, rr: usize) -> Array3<C64> {
    let m = if m.is_standard_layout() { m } else { m.as_standard_layout().into_owned() };
    m.into_shape_with_order((rl, d, rr)).expect("reshape core")
}

/// `m * core` contracting the left bond.
pub(crate) fn absorb_left(m: ArrayView2<'_, C64>, core: &Array3<C64>) -> Array3<C64> {
    let (_, d, rr) = core.dim();
    core_from(m.dot(&right_matrix(core)), m.nrows(), d, rr)
}

/// `core * m` contracting the right bond.
pub(crate) fn absorb_right(core: &Array3<C64>, m: ArrayView2<'_, C64>) -> Array3<C64> {
    let (rl, d, _) = core.dim();
    core_from(left_matrix(core).dot(&m), rl, d, m.ncols())
}

impl TensorTrain {
    /// Builds a state from cores, checking bond consistency.
    pub fn new(cores: Vec<Array3<C64>>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::DimensionMismatch("a tensor train needs at least one core".into()));
        }
        let n = cores.len();
        if cores[0].dim().0 != 1 || cores[n - 1].dim().2 != 1 {
            return Err(Error::DimensionMismatch("boundary ranks must be 1".into()));
        }
        for i in 1..n {
            if cores[i - 1].dim().2 != cores[i].dim().0 {
                return Err(Error::DimensionMismatch(format!(
                    "bond {i}: right rank {} of core {} differs from left rank {} of core {i}",
                    cores[i - 1].dim().2,
                    i - 1,
                    cores[i].dim().0
                )));
            }
        }
        if cores.iter().any(|c| c.dim().1 == 0) {
            return Err(Error::DimensionMismatch("zero physical dimension".into()));
        }
        Ok(Self::from_cores_unchecked(cores))
    }

    pub(crate) fn from_cores_unchecked(cores: Vec<Array3<C64>>) -> Self {
        let n = cores.len();
        TensorTrain { cores: cores.into_iter().map(standard).collect(), left: 0, right: n - 1 }
    }

    /// Rank-1 state from normalized local vectors.
    pub fn product_state(local: &[Array1<C64>]) -> Result<Self> {
        if local.is_empty() {
            return Err(Error::DimensionMismatch("no local vectors".into()));
        }
        let mut cores = Vec::with_capacity(local.len());
        for (site, v) in local.iter().enumerate() {
            let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nrm == 0.0 || !nrm.is_finite() {
                return Err(Error::DegenerateLocalState { site });
            }
            let d = v.len();
            cores.push(v.mapv(|z| z / nrm).into_shape_with_order((1, d, 1)).expect("reshape"));
        }
        let n = cores.len();
        let mut tt = Self::from_cores_unchecked(cores);
        // Every rank-1 core of unit norm is both left- and right-isometric.
        tt.left = n - 1;
        tt.right = n - 1;
        Ok(tt)
    }

    /// Computational basis product state.
    pub fn basis_state(dims: &[usize], index: &[usize]) -> Result<Self> {
        if dims.len() != index.len() {
            return Err(Error::DimensionMismatch("dims and index differ in length".into()));
        }
        let local: Vec<Array1<C64>> = dims
            .iter()
            .zip(index)
            .map(|(&d, &k)| {
                let mut v = Array1::zeros(d);
                if k < d {
                    v[k] = ONE;
                }
                v
            })
            .collect();
        Self::product_state(&local)
    }

    /// Random normalized state with every bond at `min(max_rank, feasible)`.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], max_rank: usize, rng: &mut R) -> Self {
        let ranks = Self::feasible_ranks(dims, max_rank);
        let cores: Vec<Array3<C64>> = (0..dims.len())
            .map(|i| {
                Array3::from_shape_fn((ranks[i], dims[i], ranks[i + 1]), |_| {
                    C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                })
            })
            .collect();
        let tt = Self::from_cores_unchecked(cores);
        let nrm = tt.norm();
        tt.scale(C64::new(1.0 / nrm, 0.0))
    }

    /// Largest bond ranks a state on `dims` can need, capped at `cap`.
    pub fn feasible_ranks(dims: &[usize], cap: usize) -> Vec<usize> {
        let n = dims.len();
        let mut ranks = vec![1usize; n + 1];
        for i in 1..n {
            let left: usize = dims[..i].iter().fold(1usize, |a, &d| a.saturating_mul(d));
            let right: usize = dims[i..].iter().fold(1usize, |a, &d| a.saturating_mul(d));
            ranks[i] = left.min(right).min(cap.max(1));
        }
        ranks
    }

    pub fn n_sites(&self) -> usize {
        self.cores.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dim().1).collect()
    }

    /// Bond ranks `r_0 .. r_N`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.cores.iter().map(|c| c.dim().0).collect();
        r.push(1);
        r
    }

    pub fn max_bond(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    pub fn core(&self, i: usize) -> &Array3<C64> {
        &self.cores[i]
    }

    pub fn cores(&self) -> &[Array3<C64>] {
        &self.cores
    }

    pub fn into_cores(self) -> Vec<Array3<C64>> {
        self.cores
    }

    /// Orthogonality center, if the state is in mixed-canonical form.
    pub fn ortho_center(&self) -> Option<usize> {
        (self.left == self.right).then_some(self.left)
    }

    /// Number of leading cores known to be left-isometric.
    pub fn left_isometric_prefix(&self) -> usize {
        self.left
    }

    pub(crate) fn set_core(&mut self, i: usize, core: Array3<C64>) {
        self.cores[i] = standard(core);
        self.left = self.left.min(i);
        self.right = self.right.max(i);
    }

    /// Replaces core `i` by one that differs by a unitary acting on its
    /// physical leg, which leaves every isometry intact.
    pub(crate) fn set_core_physical_unitary(&mut self, i: usize, core: Array3<C64>) {
        debug_assert_eq!(core.dim(), self.cores[i].dim());
        self.cores[i] = standard(core);
    }

    /// Marks the gauge after an operation that established it.
    pub(crate) fn set_gauge(&mut self, left: usize, right: usize) {
        self.left = left;
        self.right = right;
    }

    /// Dense vector, first site most significant.
    pub fn to_dense(&self) -> Array1<C64> {
        let mut acc = Array2::from_elem((1, 1), ONE);
        for core in &self.cores {
            let (_, d, rr) = core.dim();
            let m = acc.dot(&right_matrix(core));
            let rows = m.nrows() * d;
            acc = m.into_shape_with_order((rows, rr)).expect("reshape");
        }
        acc.index_axis_move(Axis(1), 0)
    }

    /// TT-SVD of a dense vector.
    pub fn from_dense(v: &Array1<C64>, dims: &[usize], policy: &TruncationPolicy) -> Result<Self> {
        let total: usize = dims.iter().product();
        if total != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} does not match dims {:?}",
                v.len(),
                dims
            )));
        }
        let n = dims.len();
        let mut cores = Vec::with_capacity(n);
        let mut rest = v.clone().into_shape_with_order((1, total)).expect("reshape");
        let mut rl = 1;
        for (i, &d) in dims.iter().enumerate() {
            if i == n - 1 {
                cores.push(core_from(rest, rl, d, 1));
                break;
            }
            let cols = rest.len() / (rl * d);
            let m = rest.into_shape_with_order((rl * d, cols)).expect("reshape");
            let svd = linalg::svd(m.view())?;
            let k = policy.keep(&svd.s);
            cores.push(core_from(svd.u.slice(s![.., ..k]).to_owned(), rl, d, k));
            let mut sv = svd.vh.slice(s![..k, ..]).to_owned();
            for (mut row, &sk) in sv.rows_mut().into_iter().zip(&svd.s) {
                row.mapv_inplace(|z| z * sk);
            }
            rest = sv;
            rl = k;
        }
        let mut tt = Self::from_cores_unchecked(cores);
        tt.set_gauge(n - 1, n - 1);
        Ok(tt)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &TensorTrain) -> Result<C64> {
        self.check_dims(other)?;
        let mut env = Array2::from_elem((1, 1), ONE);
        for (a, b) in self.cores.iter().zip(&other.cores) {
            let (ra, d, ra2) = a.dim();
            let rb2 = b.dim().2;
            let t = env.dot(&right_matrix(b));
            let t = t.into_shape_with_order((ra * d, rb2)).expect("reshape");
            env = left_matrix(a).t().mapv(|z| z.conj()).dot(&t);
            debug_assert_eq!(env.dim(), (ra2, rb2));
        }
        Ok(env[[0, 0]])
    }

    pub fn norm(&self) -> f64 {
        if let Some(c) = self.ortho_center() {
            return self.cores[c].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        }
        self.inner(self).map(|z| z.re.max(0.0).sqrt()).unwrap_or(f64::NAN)
    }

    /// Norm from a full contraction, ignoring gauge information.
    pub fn norm_by_contraction(&self) -> f64 {
        self.inner(self).map(|z| z.re.max(0.0).sqrt()).unwrap_or(f64::NAN)
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.scale_in_place(c);
        out
    }

    pub(crate) fn scale_in_place(&mut self, c: C64) {
        // Scaling the center keeps the gauge; otherwise any core will do.
        match self.ortho_center() {
            Some(k) => self.cores[k].mapv_inplace(|z| z * c),
            None => {
                self.cores[0].mapv_inplace(|z| z * c);
                self.left = 0;
            }
        }
    }

    fn check_dims(&self, other: &TensorTrain) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "dims {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    /// Exact sum; interior ranks add.
    pub fn add(&self, other: &TensorTrain) -> Result<Self> {
        self.check_dims(other)?;
        let n = self.n_sites();
        if n == 1 {
            return Ok(Self::from_cores_unchecked(vec![&self.cores[0] + &other.cores[0]]));
        }
        let cores = (0..n)
            .map(|i| {
                let (a, b) = (&self.cores[i], &other.cores[i]);
                let (ral, d, rar) = a.dim();
                let (rbl, _, rbr) = b.dim();
                if i == 0 {
                    let mut c = Array3::zeros((1, d, rar + rbr));
                    c.slice_mut(s![.., .., ..rar]).assign(a);
                    c.slice_mut(s![.., .., rar..]).assign(b);
                    c
                } else if i == n - 1 {
                    let mut c = Array3::zeros((ral + rbl, d, 1));
                    c.slice_mut(s![..ral, .., ..]).assign(a);
                    c.slice_mut(s![ral.., .., ..]).assign(b);
                    c
                } else {
                    let mut c = Array3::zeros((ral + rbl, d, rar + rbr));
                    c.slice_mut(s![..ral, .., ..rar]).assign(a);
                    c.slice_mut(s![ral.., .., rar..]).assign(b);
                    c
                }
            })
            .collect();
        Ok(Self::from_cores_unchecked(cores))
    }

    /// Exact linear combination `sum_k c_k psi_k`.
    pub fn combination(terms: &[(C64, &TensorTrain)]) -> Result<Self> {
        let Some(((c0, first), rest)) = terms.split_first() else {
            return Err(Error::DimensionMismatch("empty linear combination".into()));
        };
        let mut acc = first.scale(*c0);
        for (c, t) in rest {
            acc = acc.add(&t.scale(*c))?;
        }
        Ok(acc)
    }

    /// Linear combination rounded to `policy`.
    pub fn combination_rounded(
        terms: &[(C64, &TensorTrain)],
        policy: &TruncationPolicy,
    ) -> Result<Self> {
        let mut acc = Self::combination(terms)?;
        acc.round_in_place(policy)?;
        Ok(acc)
    }

    fn qr_step(&mut self, i: usize) {
        let (rl, d, _) = self.cores[i].dim();
        let (q, r) = linalg::qr(left_matrix(&self.cores[i]));
        let k = q.ncols();
        self.cores[i] = core_from(q, rl, d, k);
        self.cores[i + 1] = absorb_left(r.view(), &self.cores[i + 1]);
    }

    fn lq_step(&mut self, i: usize) {
        let (_, d, rr) = self.cores[i].dim();
        let (l, q) = linalg::lq(right_matrix(&self.cores[i]));
        let k = q.nrows();
        self.cores[i] = core_from(q, k, d, rr);
        self.cores[i - 1] = absorb_right(&self.cores[i - 1], l.view());
    }

    /// SVD step moving the center from `i` to `i + 1`; returns discarded weight.
    fn svd_step_right(&mut self, i: usize, policy: &TruncationPolicy) -> Result<f64> {
        let (rl, d, _) = self.cores[i].dim();
        let svd = linalg::svd(left_matrix(&self.cores[i]))?;
        let k = policy.keep(&svd.s);
        let discarded = svd.s[k..].iter().map(|x| x * x).sum();
        self.cores[i] = core_from(svd.u.slice(s![.., ..k]).to_owned(), rl, d, k);
        let mut sv = svd.vh.slice(s![..k, ..]).to_owned();
        for (mut row, &sk) in sv.rows_mut().into_iter().zip(&svd.s) {
            row.mapv_inplace(|z| z * sk);
        }
        self.cores[i + 1] = absorb_left(sv.view(), &self.cores[i + 1]);
        Ok(discarded)
    }

    /// SVD step moving the center from `i` to `i - 1`; returns discarded weight.
    fn svd_step_left(&mut self, i: usize, policy: &TruncationPolicy) -> Result<f64> {
        let (_, d, rr) = self.cores[i].dim();
        let svd = linalg::svd(right_matrix(&self.cores[i]))?;
        let k = policy.keep(&svd.s);
        let discarded = svd.s[k..].iter().map(|x| x * x).sum();
        self.cores[i] = core_from(svd.vh.slice(s![..k, ..]).to_owned(), k, d, rr);
        let mut us = svd.u.slice(s![.., ..k]).to_owned();
        for (mut col, &sk) in us.columns_mut().into_iter().zip(&svd.s) {
            col.mapv_inplace(|z| z * sk);
        }
        self.cores[i - 1] = absorb_right(&self.cores[i - 1], us.view());
        Ok(discarded)
    }

    /// Left-isometric cores `0..up_to`; the center lands on `up_to` when the
    /// cores to its right were already right-isometric.
    pub fn left_orthonormalize(&self, up_to: usize) -> Self {
        let mut out = self.clone();
        out.left_orthonormalize_in_place(up_to);
        out
    }

    /// Mirror of [`left_orthonormalize`](Self::left_orthonormalize).
    pub fn right_orthonormalize(&self, down_to: usize) -> Self {
        let mut out = self.clone();
        out.right_orthonormalize_in_place(down_to);
        out
    }

    /// Mixed-canonical form with center `k`.
    pub fn canonicalize(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.canonicalize_in_place(k);
        out
    }

    pub(crate) fn left_orthonormalize_in_place(&mut self, up_to: usize) {
        let up_to = up_to.min(self.n_sites() - 1);
        for i in self.left.min(up_to)..up_to {
            self.qr_step(i);
        }
        self.left = up_to;
        self.right = self.right.max(up_to);
    }

    pub(crate) fn right_orthonormalize_in_place(&mut self, down_to: usize) {
        let down_to = down_to.min(self.n_sites() - 1);
        for i in ((down_to + 1)..=self.right.max(down_to)).rev() {
            self.lq_step(i);
        }
        self.right = down_to;
        self.left = self.left.min(down_to);
    }

    pub(crate) fn canonicalize_in_place(&mut self, k: usize) {
        self.left_orthonormalize_in_place(k);
        self.right_orthonormalize_in_place(k);
    }

    /// Right-canonical form with center 0, reducing oversized bonds cheaply
    /// from the left first.
    fn right_canonicalize_reducing(&mut self) {
        let n = self.n_sites();
        if self.right == 0 {
            self.left = 0;
            return;
        }
        let mid = n / 2;
        let mut i = self.left;
        while i < mid {
            let (rl, d, rr) = self.cores[i].dim();
            if rr <= rl * d {
                break;
            }
            self.qr_step(i);
            i += 1;
        }
        self.right = self.right.max(i);
        self.right_orthonormalize_in_place(0);
    }

    /// SVD truncation; returns the result (left-canonical, center at the last
    /// site) and the discarded weight at each cut.
    pub fn truncate(&self, policy: &TruncationPolicy) -> Result<(Self, Vec<f64>)> {
        let mut out = self.clone();
        let discarded = out.round_in_place(policy)?;
        Ok((out, discarded))
    }

    pub(crate) fn round_in_place(&mut self, policy: &TruncationPolicy) -> Result<Vec<f64>> {
        if policy.max_rank < 1 {
            return Err(Error::InvalidPolicy("max_rank must be at least 1".into()));
        }
        self.right_canonicalize_reducing();
        self.sweep_truncate_right(policy)
    }

    /// From mixed-canonical form with center `c`: a truncating sweep to the
    /// first site, then one to the last. Bonds left of `c` are cut on the way
    /// down, the rest on the way up.
    pub(crate) fn truncate_from_center(&mut self, policy: &TruncationPolicy) -> Result<Vec<f64>> {
        let c = self.ortho_center().ok_or_else(|| {
            Error::ContractOrder("truncation from the center needs a center".into())
        })?;
        let mut down = vec![0.0; c];
        for i in (1..=c).rev() {
            down[i - 1] = self.svd_step_left(i, policy)?;
        }
        self.left = 0;
        self.right = 0;
        let mut up = self.sweep_truncate_right(policy)?;
        for (u, d) in up.iter_mut().zip(down) {
            *u += d;
        }
        Ok(up)
    }

    /// From a right-canonical state with center 0, truncating SVD sweep
    /// to the last site.
    pub(crate) fn sweep_truncate_right(&mut self, policy: &TruncationPolicy) -> Result<Vec<f64>> {
        debug_assert_eq!(self.right, 0);
        let n = self.n_sites();
        let mut discarded = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n - 1 {
            discarded.push(self.svd_step_right(i, policy)?);
        }
        if !self.cores[n - 1].iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Linalg("non-finite entries after truncation".into()));
        }
        self.left = n - 1;
        self.right = n - 1;
        Ok(discarded)
    }

    /// Two-site block `(r_{i-1}, d_i, d_{i+1}, r_{i+1})`; the center must sit
    /// on `i` or `i + 1`.
    pub fn merge_pair(&self, i: usize) -> Result<Array4<C64>> {
        let n = self.n_sites();
        if i + 1 >= n {
            return Err(Error::ContractOrder(format!("no pair starting at site {i} in {n} sites")));
        }
        match self.ortho_center() {
            Some(c) if c == i || c == i + 1 => {}
            other => {
                return Err(Error::ContractOrder(format!(
                    "center {other:?} is not adjacent to pair ({i}, {})",
                    i + 1
                )))
            }
        }
        Ok(self.merge_pair_unchecked(i))
    }

    pub(crate) fn merge_pair_unchecked(&self, i: usize) -> Array4<C64> {
        let (rl, d1, _) = self.cores[i].dim();
        let (_, d2, rr) = self.cores[i + 1].dim();
        let m = left_matrix(&self.cores[i]).dot(&right_matrix(&self.cores[i + 1]));
        m.into_shape_with_order((rl, d1, d2, rr)).expect("reshape")
    }

    /// SVD split of a two-site block into two cores.
    pub fn split_pair(
        block: &Array4<C64>,
        policy: &TruncationPolicy,
        direction: Direction,
    ) -> Result<SplitPair> {
        let (rl, d1, d2, rr) = block.dim();
        let m = block
            .view()
            .into_shape_with_order((rl * d1, d2 * rr))
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        let svd = linalg::svd(m)?;
        let k = policy.keep(&svd.s);
        let discarded = svd.s[k..].iter().map(|x| x * x).sum();
        let mut u = svd.u.slice(s![.., ..k]).to_owned();
        let mut vh = svd.vh.slice(s![..k, ..]).to_owned();
        match direction {
            Direction::Right => {
                for (mut row, &sk) in vh.rows_mut().into_iter().zip(&svd.s) {
                    row.mapv_inplace(|z| z * sk);
                }
            }
            Direction::Left => {
                for (mut col, &sk) in u.columns_mut().into_iter().zip(&svd.s) {
                    col.mapv_inplace(|z| z * sk);
                }
            }
        }
        Ok(SplitPair {
            left: core_from(u, rl, d1, k),
            right: core_from(vh, k, d2, rr),
            discarded,
        })
    }

    /// Replaces cores `i, i+1` by a split of `block`, placing the center
    /// according to `direction`.
    pub(crate) fn set_pair(
        &mut self,
        i: usize,
        block: &Array4<C64>,
        policy: &TruncationPolicy,
        direction: Direction,
    ) -> Result<f64> {
        let split = Self::split_pair(block, policy, direction)?;
        self.cores[i] = split.left;
        self.cores[i + 1] = split.right;
        let c = match direction {
            Direction::Right => i + 1,
            Direction::Left => i,
        };
        self.left = c;
        self.right = c;
        Ok(split.discarded)
    }

    /// Expectation values `<psi|O_i|psi>` of one single-site operator per
    /// site, unnormalized.
    pub fn site_expectations<F>(&self, op_at: F) -> Vec<C64>
    where
        F: Fn(usize) -> Array2<f64>,
    {
        let n = self.n_sites();
        // Left environments E_i over sites < i, right environments over sites > i.
        let mut lenv: Vec<Array2<C64>> = Vec::with_capacity(n);
        let mut env = Array2::from_elem((1, 1), ONE);
        for core in &self.cores {
            lenv.push(env.clone());
            env = transfer_left(&env, core, None);
        }
        let mut renv: Vec<Array2<C64>> = vec![Array2::zeros((0, 0)); n];
        let mut env = Array2::from_elem((1, 1), ONE);
        for i in (0..n).rev() {
            renv[i] = env.clone();
            env = transfer_right(&env, &self.cores[i]);
        }
        (0..n)
            .map(|i| {
                let op = op_at(i);
                let e = transfer_left(&lenv[i], &self.cores[i], Some(&op));
                (&e * &renv[i]).sum()
            })
            .collect()
    }
}

/// `E'[a', b'] = sum conj(A[a, s, a']) O[s, t] E[a, b] A[b, t, b']`.
fn transfer_left(env: &Array2<C64>, core: &Array3<C64>, op: Option<&Array2<f64>>) -> Array2<C64> {
    let (rl, d, rr) = core.dim();
    let t = env.dot(&right_matrix(core)).into_shape_with_order((rl, d, rr)).expect("reshape");
    let t = match op {
        None => t,
        Some(op) => {
            let opc = op.mapv(|x| C64::new(x, 0.0));
            let mut out = Array3::zeros((rl, d, rr));
            for a in 0..rl {
                out.index_axis_mut(Axis(0), a).assign(&opc.dot(&t.index_axis(Axis(0), a)));
            }
            out
        }
    };
    let t = t.into_shape_with_order((rl * d, rr)).expect("reshape");
    left_matrix(core).t().mapv(|z| z.conj()).dot(&t)
}

/// `E'[x, y] = sum conj(A[x, s, x']) E[x', y'] A[y, s, y']`, indexed
/// `[bra, ket]` like the left environments.
fn transfer_right(env: &Array2<C64>, core: &Array3<C64>) -> Array2<C64> {
    let (rl, d, rr) = core.dim();
    let u = left_matrix(core).dot(&env.t());
    let u = u.into_shape_with_order((rl, d * rr)).expect("reshape");
    right_matrix(core).mapv(|z| z.conj()).dot(&u.t())
}

#[allow(dead_code)]
pub(crate) fn identity_matrix(n: usize) -> Array2<C64> {
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { ONE } else { ZERO })
}
