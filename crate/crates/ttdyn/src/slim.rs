//! Exciton, phonon and coupled chain Hamiltonians in SLIM form.
//!
//! A SLIM operator is built from single-site terms `S_i` and nearest-neighbour
//! products `L_{i,λ} ⊗ M_{i+1,λ}`. Its interior cores have rank `2 + ξ`, with
//! the bond states "start", one "pending" state per channel, and "done".

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Array4};

use crate::error::{Error, Result};
use crate::tt::TtOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SystemKind {
    Exciton,
    Phonon,
    Coupled,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Exciton => "exciton",
            SystemKind::Phonon => "phonon",
            SystemKind::Coupled => "coupled",
        }
    }

    pub fn has_excitons(self) -> bool {
        matches!(self, SystemKind::Exciton | SystemKind::Coupled)
    }

    pub fn has_phonons(self) -> bool {
        matches!(self, SystemKind::Phonon | SystemKind::Coupled)
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exciton" => Ok(SystemKind::Exciton),
            "phonon" => Ok(SystemKind::Phonon),
            "coupled" => Ok(SystemKind::Coupled),
            other => Err(Error::param("system.kind", format!("unknown kind `{other}`"))),
        }
    }
}

/// Homogeneous chain in atomic units.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainParameters {
    pub kind: SystemKind,
    pub n_sites: usize,
    /// On-site excitation energy.
    pub alpha: f64,
    /// Nearest-neighbour hopping.
    pub beta: f64,
    pub mass: f64,
    /// Restraining frequency.
    pub nu: f64,
    /// Nearest-neighbour oscillator frequency.
    pub omega: f64,
    /// Exciton-phonon coupling constant.
    pub sigma: f64,
    pub d_ex: usize,
    pub d_ph: usize,
    pub cyclic: bool,
}

impl ChainParameters {
    pub fn new(kind: SystemKind, n_sites: usize) -> Self {
        ChainParameters {
            kind,
            n_sites,
            alpha: 0.1,
            beta: -0.01,
            mass: 1.0,
            nu: 1e-3,
            omega: std::f64::consts::SQRT_2 * 1e-3,
            sigma: 2e-4,
            d_ex: 2,
            d_ph: 8,
            cyclic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cyclic {
            return Err(Error::Unsupported("cyclic chains are not supported".into()));
        }
        let min_sites = if self.kind == SystemKind::Exciton { 1 } else { 2 };
        if self.n_sites < min_sites {
            return Err(Error::param("system.n_sites", format!("need at least {min_sites} sites")));
        }
        if self.kind.has_excitons() && self.d_ex != 2 {
            return Err(Error::param("system.d_ex", "the two-state exciton model needs d_ex = 2"));
        }
        if self.kind.has_phonons() {
            if self.d_ph < 2 {
                return Err(Error::param("system.d_ph", "need at least 2 vibrational levels"));
            }
            if !(self.mass > 0.0) {
                return Err(Error::param("system.mass", "must be positive"));
            }
            if !(self.nu > 0.0) {
                return Err(Error::param("system.nu", "must be positive"));
            }
            if !(self.omega >= 0.0) {
                return Err(Error::param("system.omega", "must be nonnegative"));
            }
        }
        for (name, v) in [
            ("system.alpha", self.alpha),
            ("system.beta", self.beta),
            ("system.sigma", self.sigma),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn local_dim(&self) -> usize {
        local_site_dimension(self)
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.local_dim(); self.n_sites]
    }

    /// Full Hilbert space dimension, `None` on overflow.
    pub fn hilbert_dim(&self) -> Option<usize> {
        (0..self.n_sites).try_fold(1usize, |acc, _| acc.checked_mul(self.local_dim()))
    }
}

/// 2, `d_ph` or `2 d_ph` by kind.
pub fn local_site_dimension(params: &ChainParameters) -> usize {
    match params.kind {
        SystemKind::Exciton => params.d_ex,
        SystemKind::Phonon => params.d_ph,
        SystemKind::Coupled => params.d_ex * params.d_ph,
    }
}

/// Raising and lowering matrices of a truncated bosonic mode.
pub fn ladder_matrices(d: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    if d < 2 {
        return Err(Error::param("d", "ladder operators need d >= 2"));
    }
    let mut lower = Array2::zeros((d, d));
    for n in 1..d {
        lower[[n - 1, n]] = (n as f64).sqrt();
    }
    Ok((lower.t().to_owned(), lower))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveFrequencies {
    /// Per site.
    pub nu_tilde: Vec<f64>,
    /// Per bond `(i, i+1)`.
    pub omega_tilde: Vec<f64>,
    /// Per site, coupling to the right neighbour; 0 on the last site.
    pub sigma_bar: Vec<f64>,
    /// Per site, coupling to the left neighbour; 0 on the first site.
    pub sigma_barbar: Vec<f64>,
}

pub fn effective_frequencies(params: &ChainParameters) -> Result<EffectiveFrequencies> {
    if !(params.mass > 0.0) || !(params.nu > 0.0) {
        return Err(Error::param("system.mass/nu", "masses and frequencies must be positive"));
    }
    let n = params.n_sites;
    let m = |_: usize| params.mass;
    let w2 = params.omega * params.omega;
    let nu_tilde: Vec<f64> = (0..n)
        .map(|i| {
            let mut x = params.nu * params.nu;
            if i > 0 {
                x += m(i - 1) / (m(i) + m(i - 1)) * w2;
            }
            if i + 1 < n {
                x += m(i + 1) / (m(i) + m(i + 1)) * w2;
            }
            x.sqrt()
        })
        .collect();
    let omega_tilde = (0..n.saturating_sub(1))
        .map(|i| {
            let mu = m(i) * m(i + 1) / (m(i) + m(i + 1));
            mu * w2 / (2.0 * (m(i) * nu_tilde[i] * m(i + 1) * nu_tilde[i + 1]).sqrt())
        })
        .collect();
    let sigma_bar = (0..n)
        .map(|i| {
            if i + 1 < n {
                params.sigma / (2.0 * m(i + 1) * nu_tilde[i + 1]).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let sigma_barbar = (0..n)
        .map(|i| if i > 0 { params.sigma / (2.0 * m(i - 1) * nu_tilde[i - 1]).sqrt() } else { 0.0 })
        .collect();
    Ok(EffectiveFrequencies { nu_tilde, omega_tilde, sigma_bar, sigma_barbar })
}

/// Single-site operators on the local (exciton ⊗ phonon) space of a kind.
#[derive(Clone, Debug)]
pub struct LocalOperators {
    pub identity: Array2<f64>,
    /// Exciton raising, lowering and number; `None` without excitons.
    pub b_dag: Option<Array2<f64>>,
    pub b: Option<Array2<f64>>,
    pub n_ex: Option<Array2<f64>>,
    /// Phonon number and `c† + c`; `None` without phonons.
    pub n_ph: Option<Array2<f64>>,
    pub q: Option<Array2<f64>>,
}

pub(crate) fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

pub fn local_operators(params: &ChainParameters) -> Result<LocalOperators> {
    let ex = if params.kind.has_excitons() { Some(ladder_matrices(params.d_ex)?) } else { None };
    let ph = if params.kind.has_phonons() { Some(ladder_matrices(params.d_ph)?) } else { None };
    let eye_ex = Array2::eye(params.d_ex);
    let eye_ph = Array2::eye(params.d_ph);
    // Exciton index is the slow one.
    let embed_ex = |a: &Array2<f64>| match params.kind {
        SystemKind::Coupled => kron(a, &eye_ph),
        _ => a.clone(),
    };
    let embed_ph = |a: &Array2<f64>| match params.kind {
        SystemKind::Coupled => kron(&eye_ex, a),
        _ => a.clone(),
    };
    let d = local_site_dimension(params);
    Ok(LocalOperators {
        identity: Array2::eye(d),
        b_dag: ex.as_ref().map(|(r, _)| embed_ex(r)),
        b: ex.as_ref().map(|(_, l)| embed_ex(l)),
        n_ex: ex.as_ref().map(|(r, l)| embed_ex(&r.dot(l))),
        n_ph: ph.as_ref().map(|(r, l)| embed_ph(&r.dot(l))),
        q: ph.as_ref().map(|(r, l)| embed_ph(&(r + l))),
    })
}

/// SLIM components: one `S` per site, `ξ_i` channel pairs per bond.
#[derive(Clone, Debug)]
pub struct SlimComponents {
    pub s: Vec<Array2<f64>>,
    /// `l[i][λ]` acts on site `i` of bond `(i, i+1)`.
    pub l: Vec<Vec<Array2<f64>>>,
    /// `m[i][λ]` acts on site `i + 1` of bond `(i, i+1)`.
    pub m: Vec<Vec<Array2<f64>>>,
}

impl SlimComponents {
    pub fn n_sites(&self) -> usize {
        self.s.len()
    }

    /// Channel count of bond `(i, i+1)`.
    pub fn xi(&self, bond: usize) -> usize {
        self.l[bond].len()
    }
}

pub fn build_slim(params: &ChainParameters) -> Result<SlimComponents> {
    params.validate()?;
    let freq = effective_frequencies(params)?;
    let ops = local_operators(params)?;
    let n = params.n_sites;
    let s = (0..n)
        .map(|i| {
            let mut si = Array2::zeros(ops.identity.dim());
            if let Some(nex) = &ops.n_ex {
                si.scaled_add(params.alpha, nex);
            }
            if let Some(nph) = &ops.n_ph {
                si.scaled_add(freq.nu_tilde[i], &(nph + &(0.5 * &ops.identity)));
            }
            si
        })
        .collect();
    let mut l = Vec::with_capacity(n.saturating_sub(1));
    let mut m = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n.saturating_sub(1) {
        let mut li = Vec::new();
        let mut mi = Vec::new();
        let mut push = |coef: f64, a: &Array2<f64>, b: &Array2<f64>, coef_on_left: bool| {
            // Exact-zero elision keeps ranks reproducible.
            if coef == 0.0 {
                return;
            }
            if coef_on_left {
                li.push(coef * a);
                mi.push(b.clone());
            } else {
                li.push(a.clone());
                mi.push(coef * b);
            }
        };
        if let (Some(bd), Some(b)) = (&ops.b_dag, &ops.b) {
            push(params.beta, bd, b, true);
            push(params.beta, b, bd, true);
        }
        if let Some(q) = &ops.q {
            push(-freq.omega_tilde[i], q, q, true);
        }
        if let (Some(nex), Some(q)) = (&ops.n_ex, &ops.q) {
            push(freq.sigma_bar[i], nex, q, true);
            let neg_q = -q;
            push(freq.sigma_barbar[i + 1], &neg_q, nex, false);
        }
        l.push(li);
        m.push(mi);
    }
    Ok(SlimComponents { s, l, m })
}

/// Operator with interior ranks `2 + ξ_i`.
pub fn assemble_operator(slim: &SlimComponents) -> Result<TtOperator> {
    let n = slim.n_sites();
    if n == 0 {
        return Err(Error::DimensionMismatch("no sites".into()));
    }
    for i in 0..n.saturating_sub(1) {
        if slim.l[i].len() != slim.m[i].len() {
            return Err(Error::DimensionMismatch(format!("bond {i}: |L| != |M|")));
        }
    }
    let mut cores = Vec::with_capacity(n);
    for i in 0..n {
        let d = slim.s[i].nrows();
        let eye = Array2::<f64>::eye(d);
        let xi_left = if i > 0 { slim.xi(i - 1) } else { 0 };
        let xi_right = if i + 1 < n { slim.xi(i) } else { 0 };
        let ra = if i > 0 { 2 + xi_left } else { 1 };
        let rb = if i + 1 < n { 2 + xi_right } else { 1 };
        // Bond labels: 0 start, 1..=ξ pending, ξ+1 done.
        let start_l = 0;
        let done_l = if i > 0 { xi_left + 1 } else { 0 };
        let start_r = 0;
        let done_r = if i + 1 < n { xi_right + 1 } else { 0 };
        let mut w = Array4::<f64>::zeros((ra, d, d, rb));
        if i + 1 < n {
            w.slice_mut(s![start_l, .., .., start_r]).assign(&eye);
            for (lam, op) in slim.l[i].iter().enumerate() {
                w.slice_mut(s![start_l, .., .., 1 + lam]).assign(op);
            }
        }
        w.slice_mut(s![start_l, .., .., done_r]).scaled_add(1.0, &slim.s[i]);
        if i > 0 {
            for (lam, op) in slim.m[i - 1].iter().enumerate() {
                w.slice_mut(s![1 + lam, .., .., done_r]).assign(op);
            }
            w.slice_mut(s![done_l, .., .., done_r]).scaled_add(1.0, &eye);
        }
        cores.push(w);
    }
    TtOperator::new(cores)
}

/// Convenience: SLIM operator of a chain.
pub fn hamiltonian(params: &ChainParameters) -> Result<TtOperator> {
    assemble_operator(&build_slim(params)?)
}
