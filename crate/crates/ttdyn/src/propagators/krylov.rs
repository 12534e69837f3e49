//! Global Krylov: Lanczos recurrence in TT arithmetic.

use num_complex::Complex64 as C64;

use super::{check_finite, Integrator, PropagatorConfig, Scheme};
use crate::error::{Error, Result};
use crate::linalg::expm_tridiagonal_e1;
use crate::tt::{TensorTrain, TruncationPolicy, TtOperator};

/// Recurrence coefficients below this mark an invariant subspace.
const BREAKDOWN: f64 = 1e-14;

/// `exp(-i dt H) psi` from an `m`-dimensional Krylov space. Basis tensors
/// are rounded to `policy` after every operator application.
pub fn step_global_krylov(
    psi: &TensorTrain,
    h: &TtOperator,
    dt: f64,
    m: usize,
    policy: &TruncationPolicy,
) -> Result<TensorTrain> {
    if m < 1 {
        return Err(Error::param("krylov_dim", "must be at least 1"));
    }
    let nrm = psi.norm();
    if !(nrm > 0.0) {
        return Err(Error::param("psi", "state has zero norm"));
    }
    let one = C64::new(1.0, 0.0);
    let mut basis = vec![psi.scale(C64::new(1.0 / nrm, 0.0))];
    let mut alphas = Vec::with_capacity(m);
    let mut betas: Vec<f64> = Vec::with_capacity(m);
    for j in 0..m {
        let w = h.apply_rounded(&basis[j], policy)?;
        let alpha = basis[j].inner(&w)?.re;
        alphas.push(alpha);
        if j + 1 == m {
            break;
        }
        let mut terms = vec![(one, &w), (C64::new(-alpha, 0.0), &basis[j])];
        if j > 0 {
            terms.push((C64::new(-betas[j - 1], 0.0), &basis[j - 1]));
        }
        let mut r = TensorTrain::combination_rounded(&terms, policy)?;
        let beta = r.norm();
        if !(beta >= BREAKDOWN) {
            break;
        }
        r.scale_in_place(C64::new(1.0 / beta, 0.0));
        betas.push(beta);
        basis.push(r);
    }
    let c = expm_tridiagonal_e1(&alphas, &betas[..alphas.len() - 1], dt)?;
    let terms: Vec<(C64, &TensorTrain)> = c.iter().zip(&basis).map(|(ck, v)| (ck * nrm, v)).collect();
    TensorTrain::combination_rounded(&terms, policy)
}

#[derive(Clone, Debug)]
pub struct GlobalKrylov {
    config: PropagatorConfig,
    hamiltonian: TtOperator,
    steps: usize,
}

impl GlobalKrylov {
    pub fn new(config: PropagatorConfig, hamiltonian: TtOperator) -> Self {
        GlobalKrylov { config, hamiltonian, steps: 0 }
    }
}

impl Integrator for GlobalKrylov {
    fn scheme(&self) -> Scheme {
        self.config.scheme
    }

    fn advance(&mut self, psi: &TensorTrain, n: usize) -> Result<TensorTrain> {
        let policy = self.config.policy();
        let m = self.config.krylov_dimension();
        let mut out = psi.clone();
        for _ in 0..n {
            out = step_global_krylov(&out, &self.hamiltonian, self.config.dt, m, &policy)?;
            self.steps += 1;
            check_finite(&out, self.steps as f64 * self.config.dt)?;
        }
        Ok(out)
    }
}
