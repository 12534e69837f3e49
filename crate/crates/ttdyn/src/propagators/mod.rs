//! Time integrators acting on tensor-train states.
//!
//! Each integrator advances by sub-steps of a fixed `dt`. `advance` may fuse
//! consecutive stages across sub-steps, so the state is only guaranteed to be
//! in its nominal form at the end of an `advance` call.

mod differencing;
mod krylov;
mod splitting;
mod tdvp;

use std::fmt;
use std::str::FromStr;

pub use differencing::{bootstrap_previous, step_differencing, Bootstrap, Differencing};
pub use krylov::{step_global_krylov, GlobalKrylov};
pub use splitting::{
    apply_gate_layer, build_pair_generators, kahan_li, step_splitting, two_site_gate, yoshida_neri,
    CompositionCoefficients, GateCache, PairGenerator, Parity, Splitting,
};
pub use tdvp::{lanczos_expm, step_tdvp, Tdvp};

use crate::error::{Error, Result};
use crate::slim::SlimComponents;
use crate::tt::{TensorTrain, TruncationPolicy, TtOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    S2,
    S4,
    S6,
    S8,
    Lt,
    Sm,
    Yn,
    Kl,
    Tdvp,
    K2,
    K4,
    K6,
    K8,
}

impl Scheme {
    pub const ALL: [Scheme; 13] = [
        Scheme::S2,
        Scheme::S4,
        Scheme::S6,
        Scheme::S8,
        Scheme::Lt,
        Scheme::Sm,
        Scheme::Yn,
        Scheme::Kl,
        Scheme::Tdvp,
        Scheme::K2,
        Scheme::K4,
        Scheme::K6,
        Scheme::K8,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::S2 => "s2",
            Scheme::S4 => "s4",
            Scheme::S6 => "s6",
            Scheme::S8 => "s8",
            Scheme::Lt => "lt",
            Scheme::Sm => "sm",
            Scheme::Yn => "yn",
            Scheme::Kl => "kl",
            Scheme::Tdvp => "tdvp",
            Scheme::K2 => "k2",
            Scheme::K4 => "k4",
            Scheme::K6 => "k6",
            Scheme::K8 => "k8",
        }
    }

    /// `K` of the differencing family.
    pub fn differencing_order(self) -> Option<usize> {
        match self {
            Scheme::S2 => Some(1),
            Scheme::S4 => Some(2),
            Scheme::S6 => Some(3),
            Scheme::S8 => Some(4),
            _ => None,
        }
    }

    /// Krylov dimension `m` of the global Krylov family.
    pub fn krylov_dim(self) -> Option<usize> {
        match self {
            Scheme::K2 => Some(2),
            Scheme::K4 => Some(4),
            Scheme::K6 => Some(6),
            Scheme::K8 => Some(8),
            _ => None,
        }
    }

    pub fn is_splitting(self) -> bool {
        matches!(self, Scheme::Lt | Scheme::Sm | Scheme::Yn | Scheme::Kl)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == key)
            .ok_or_else(|| Error::param("schemes", format!("unknown scheme `{}`", s.trim())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagatorConfig {
    pub scheme: Scheme,
    /// Sub-step size.
    pub dt: f64,
    pub max_rank: usize,
    /// Splitting only; defaults to `2 * max_rank`.
    pub inter_stage_rank: Option<usize>,
    pub svd_threshold: f64,
    /// Global Krylov dimension; defaults to the scheme's `m`.
    pub krylov_dim: Option<usize>,
    /// TDVP local Lanczos dimension.
    pub local_exp_dim: usize,
    pub bootstrap: Bootstrap,
}

impl PropagatorConfig {
    pub fn new(scheme: Scheme, dt: f64, max_rank: usize) -> Self {
        PropagatorConfig {
            scheme,
            dt,
            max_rank,
            inter_stage_rank: None,
            svd_threshold: 0.0,
            krylov_dim: None,
            local_exp_dim: 8,
            bootstrap: Bootstrap::Taylor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.max_rank < 1 {
            return Err(Error::param("tt.max_rank", "must be at least 1"));
        }
        if self.stage_rank() < self.max_rank {
            return Err(Error::param("tt.inter_stage_rank", "must be at least max_rank"));
        }
        let m = self.krylov_dimension();
        if self.scheme.krylov_dim().is_some() && (m < 2 || m % 2 != 0) {
            return Err(Error::param("krylov_dim", "must be even and at least 2"));
        }
        if self.local_exp_dim < 2 {
            return Err(Error::param("local_exp_dim", "must be at least 2"));
        }
        TruncationPolicy::new(self.max_rank, self.svd_threshold)?;
        Ok(())
    }

    pub fn policy(&self) -> TruncationPolicy {
        TruncationPolicy { max_rank: self.max_rank, svd_threshold: self.svd_threshold }
    }

    pub fn stage_rank(&self) -> usize {
        self.inter_stage_rank.unwrap_or(self.max_rank.saturating_mul(2))
    }

    pub fn stage_policy(&self) -> TruncationPolicy {
        self.policy().with_max_rank(self.stage_rank())
    }

    pub fn krylov_dimension(&self) -> usize {
        self.krylov_dim.or(self.scheme.krylov_dim()).unwrap_or(2)
    }
}

/// A time integrator with any internal history it needs.
pub trait Integrator: Send {
    fn scheme(&self) -> Scheme;

    /// Advances `psi` by `n` sub-steps. Multistep integrators assume that
    /// successive calls continue the same trajectory.
    fn advance(&mut self, psi: &TensorTrain, n: usize) -> Result<TensorTrain>;

    fn step(&mut self, psi: &TensorTrain) -> Result<TensorTrain> {
        self.advance(psi, 1)
    }
}

/// Integrator for `config`, built from the SLIM components of the chain and
/// its assembled operator.
pub fn integrator(
    config: &PropagatorConfig,
    slim: &SlimComponents,
    hamiltonian: &TtOperator,
) -> Result<Box<dyn Integrator>> {
    config.validate()?;
    let s = config.scheme;
    Ok(if s.differencing_order().is_some() {
        Box::new(Differencing::new(config.clone(), hamiltonian.clone())?)
    } else if s.is_splitting() {
        Box::new(Splitting::new(config.clone(), slim)?)
    } else if s == Scheme::Tdvp {
        Box::new(Tdvp::new(config.clone(), hamiltonian.clone()))
    } else {
        Box::new(GlobalKrylov::new(config.clone(), hamiltonian.clone()))
    })
}

pub(crate) fn check_finite(psi: &TensorTrain, time: f64) -> Result<()> {
    let ok = psi.cores().iter().all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    if ok {
        Ok(())
    } else {
        Err(Error::UnstableStep { time })
    }
}
