//! Symmetric differencing `S2..S8`: a two-step recurrence driven by odd
//! powers of `H`.

use num_complex::Complex64 as C64;

use super::{check_finite, Integrator, PropagatorConfig, Scheme};
use crate::error::{Error, Result};
use crate::tt::{TensorTrain, TruncationPolicy, TtOperator};

/// How the state one step before the start is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Bootstrap {
    /// Backward Taylor series of order `2K - 1`.
    #[default]
    Taylor,
    /// Backward Euler half step followed by a backward S2 half step.
    EulerHalfStep,
}

/// `[psi, H psi, .., H^p psi]`, each application rounded to `policy`.
fn powers(
    h: &TtOperator,
    psi: &TensorTrain,
    p: usize,
    policy: &TruncationPolicy,
) -> Result<Vec<TensorTrain>> {
    let mut out = Vec::with_capacity(p + 1);
    out.push(psi.clone());
    for k in 0..p {
        let next = h.apply_rounded(&out[k], policy)?;
        out.push(next);
    }
    Ok(out)
}

/// `(i dt)^l / l!`, the Taylor weight for a backward step.
fn taylor_weight(dt: f64, l: usize) -> C64 {
    let mut w = C64::new(1.0, 0.0);
    for j in 1..=l {
        w *= C64::new(0.0, dt / j as f64);
    }
    w
}

/// Approximation of `psi(-dt)` for a trajectory starting at `psi0`.
pub fn bootstrap_previous(
    psi0: &TensorTrain,
    h: &TtOperator,
    dt: f64,
    order: usize,
    policy: &TruncationPolicy,
    method: Bootstrap,
) -> Result<TensorTrain> {
    if !(1..=4).contains(&order) {
        return Err(Error::param("order", format!("must be in 1..=4, got {order}")));
    }
    if dt == 0.0 {
        return Ok(psi0.clone());
    }
    let i = C64::new(0.0, 1.0);
    match method {
        Bootstrap::Taylor => {
            let p = 2 * order - 1;
            let pw = powers(h, psi0, p, policy)?;
            let terms: Vec<(C64, &TensorTrain)> =
                pw.iter().enumerate().map(|(l, v)| (taylor_weight(dt, l), v)).collect();
            TensorTrain::combination_rounded(&terms, policy)
        }
        Bootstrap::EulerHalfStep => {
            let h0 = h.apply_rounded(psi0, policy)?;
            let half = TensorTrain::combination_rounded(
                &[(C64::new(1.0, 0.0), psi0), (i * (0.5 * dt), &h0)],
                policy,
            )?;
            let hh = h.apply_rounded(&half, policy)?;
            TensorTrain::combination_rounded(&[(C64::new(1.0, 0.0), psi0), (i * dt, &hh)], policy)
        }
    }
}

/// `psi(t+dt) = psi(t-dt) + Σ_{k=1..K} 2/(2k-1)! (-i dt H)^{2k-1} psi(t)`.
pub fn step_differencing(
    prev: &TensorTrain,
    curr: &TensorTrain,
    h: &TtOperator,
    dt: f64,
    order: usize,
    policy: &TruncationPolicy,
) -> Result<TensorTrain> {
    if !(1..=4).contains(&order) {
        return Err(Error::param("order", format!("must be in 1..=4, got {order}")));
    }
    if prev.dims() != curr.dims() {
        return Err(Error::DimensionMismatch(format!(
            "previous dims {:?} vs current {:?}",
            prev.dims(),
            curr.dims()
        )));
    }
    // The highest power is folded into the final rounding, so every step
    // rounds 2K - 1 times instead of 2K.
    let top = 2 * order - 1;
    let pw = powers(h, curr, top - 1, policy)?;
    let mut terms: Vec<(C64, &TensorTrain)> = vec![(C64::new(1.0, 0.0), prev)];
    for k in 1..order {
        // 2 (-i dt)^p / p! is twice the backward weight with dt -> -dt.
        let p = 2 * k - 1;
        terms.push((2.0 * taylor_weight(-dt, p), &pw[p]));
    }
    let rest = TensorTrain::combination(&terms)?;
    h.apply_add_rounded(&pw[top - 1], 2.0 * taylor_weight(-dt, top), &rest, policy)
}

/// Differencing integrator; keeps the previous state between calls.
#[derive(Clone, Debug)]
pub struct Differencing {
    config: PropagatorConfig,
    order: usize,
    hamiltonian: TtOperator,
    prev: Option<TensorTrain>,
    steps: usize,
}

impl Differencing {
    pub fn new(config: PropagatorConfig, hamiltonian: TtOperator) -> Result<Self> {
        let order = config.scheme.differencing_order().ok_or_else(|| {
            Error::Unsupported(format!("`{}` is not a differencing scheme", config.scheme))
        })?;
        Ok(Differencing { config, order, hamiltonian, prev: None, steps: 0 })
    }

    /// Forgets the history so the next call bootstraps again.
    pub fn reset(&mut self) {
        self.prev = None;
        self.steps = 0;
    }
}

impl Integrator for Differencing {
    fn scheme(&self) -> Scheme {
        self.config.scheme
    }

    fn advance(&mut self, psi: &TensorTrain, n: usize) -> Result<TensorTrain> {
        let policy = self.config.policy();
        let dt = self.config.dt;
        let mut prev = match self.prev.take() {
            Some(p) => p,
            None => bootstrap_previous(
                psi,
                &self.hamiltonian,
                dt,
                self.order,
                &policy,
                self.config.bootstrap,
            )?,
        };
        let mut curr = psi.clone();
        for _ in 0..n {
            self.steps += 1;
            let time = self.steps as f64 * dt;
            // A diverging recurrence surfaces as a failed decomposition.
            let next = step_differencing(&prev, &curr, &self.hamiltonian, dt, self.order, &policy)
                .map_err(|e| match e {
                    Error::Linalg(_) => Error::UnstableStep { time },
                    other => other,
                })?;
            check_finite(&next, time)?;
            prev = std::mem::replace(&mut curr, next);
        }
        self.prev = Some(prev);
        Ok(curr)
    }
}
