use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::slim::{effective_frequencies, ChainParameters, SystemKind};

/// Displacements and conjugate momenta of a classical chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalPhasePoint {
    pub r: Array1<f64>,
    pub p: Array1<f64>,
}

/// Normal-mode solution of `dR/dt = P/m`, `dP/dt = -K R` for the quadratic
/// phonon potential, with `K_ii = m ν̃_i²` and `K_{i,i+1} = -μ ω²`.
#[derive(Clone, Debug)]
pub struct ClassicalChain {
    masses: Array1<f64>,
    /// Columns are normal modes of `M^-1/2 K M^-1/2`.
    modes: Array2<f64>,
    freqs: Array1<f64>,
    stiffness: Array2<f64>,
}

impl ClassicalChain {
    pub fn new(params: &ChainParameters) -> Result<Self> {
        if params.kind != SystemKind::Phonon {
            return Err(Error::Unsupported(format!(
                "classical reference needs a pure phonon chain, got {}",
                params.kind
            )));
        }
        params.validate()?;
        let n = params.n_sites;
        let freq = effective_frequencies(params)?;
        let masses = Array1::from_elem(n, params.mass);
        let mut k = Array2::zeros((n, n));
        for i in 0..n {
            k[[i, i]] = masses[i] * freq.nu_tilde[i] * freq.nu_tilde[i];
            if i + 1 < n {
                let mu = masses[i] * masses[i + 1] / (masses[i] + masses[i + 1]);
                k[[i, i + 1]] = -mu * params.omega * params.omega;
                k[[i + 1, i]] = k[[i, i + 1]];
            }
        }
        let dyn_mat = Array2::from_shape_fn((n, n), |(i, j)| k[[i, j]] / (masses[i] * masses[j]).sqrt());
        let (w2, modes) = linalg::eigh_real(dyn_mat.view())?;
        if w2.iter().any(|&x| x <= 0.0) {
            return Err(Error::param("system", "force-constant matrix is not positive definite"));
        }
        Ok(ClassicalChain { masses, modes, freqs: w2.mapv(f64::sqrt), stiffness: k })
    }

    pub fn normal_frequencies(&self) -> &Array1<f64> {
        &self.freqs
    }

    pub fn propagate(&self, x0: &ClassicalPhasePoint, t: f64) -> ClassicalPhasePoint {
        let sq = self.masses.mapv(f64::sqrt);
        // Mass-weighted coordinates y = sqrt(m) R, momenta p / sqrt(m).
        let y = self.modes.t().dot(&(&x0.r * &sq));
        let v = self.modes.t().dot(&(&x0.p / &sq));
        let (c, s) = (self.freqs.mapv(|w| (w * t).cos()), self.freqs.mapv(|w| (w * t).sin()));
        let yt = &c * &y + &(&s * &v / &self.freqs);
        let vt = &c * &v - &(&s * &y * &self.freqs);
        ClassicalPhasePoint { r: self.modes.dot(&yt) / &sq, p: self.modes.dot(&vt) * &sq }
    }

    pub fn energy(&self, x: &ClassicalPhasePoint) -> f64 {
        let kin: f64 = x.p.iter().zip(&self.masses).map(|(p, m)| p * p / (2.0 * m)).sum();
        kin + 0.5 * x.r.dot(&self.stiffness.dot(&x.r))
    }
}

pub fn classical_propagate(
    x0: &ClassicalPhasePoint,
    params: &ChainParameters,
    t: f64,
) -> Result<ClassicalPhasePoint> {
    Ok(ClassicalChain::new(params)?.propagate(x0, t))
}
