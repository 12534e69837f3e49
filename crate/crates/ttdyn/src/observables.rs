//! Initial states, expectation values and trajectory metrics.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::slim::{effective_frequencies, local_operators, ChainParameters, SystemKind};
use crate::tt::{TensorTrain, TtOperator};

/// Which site is excited and how.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialStateSpec {
    /// 1-based; `None` means `ceil(N / 2)`.
    pub excited_site: Option<usize>,
    /// Mean displacement of the excited site's oscillator.
    pub displacement: f64,
    pub excite_exciton: bool,
    pub displace_phonon: bool,
}

impl InitialStateSpec {
    /// Exciton chains get one excitation, phonon chains one displaced
    /// oscillator, coupled chains an excitation with phonons in vacuum.
    pub fn default_for(kind: SystemKind) -> Self {
        InitialStateSpec {
            excited_site: None,
            displacement: 1.0,
            excite_exciton: kind.has_excitons(),
            displace_phonon: kind == SystemKind::Phonon,
        }
    }

    pub fn site(&self, n_sites: usize) -> usize {
        self.excited_site.unwrap_or(n_sites.div_ceil(2))
    }
}

/// Truncated coherent state `e^{-|λ|²/2} λⁿ / sqrt(n!)`, renormalized.
pub fn coherent_state(d_ph: usize, lambda: f64) -> Array1<C64> {
    let mut a = Array1::<C64>::zeros(d_ph);
    let mut term = (-0.5 * lambda * lambda).exp();
    for n in 0..d_ph {
        if n > 0 {
            term *= lambda / (n as f64).sqrt();
        }
        a[n] = C64::new(term, 0.0);
    }
    let nrm = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    a.mapv(|z| z / nrm)
}

/// Rank-1 initial state.
pub fn build_initial_state(params: &ChainParameters, spec: &InitialStateSpec) -> Result<TensorTrain> {
    params.validate()?;
    let n = params.n_sites;
    let i0 = spec.site(n);
    if i0 < 1 || i0 > n {
        return Err(Error::param("state.excited_site", format!("must lie in 1..={n}, got {i0}")));
    }
    let freq = if params.kind.has_phonons() { Some(effective_frequencies(params)?) } else { None };
    let local: Vec<Array1<C64>> = (0..n)
        .map(|i| {
            let here = i + 1 == i0;
            let ex = if params.kind.has_excitons() {
                let mut v = Array1::<C64>::zeros(params.d_ex);
                v[usize::from(here && spec.excite_exciton)] = C64::new(1.0, 0.0);
                Some(v)
            } else {
                None
            };
            let ph = freq.as_ref().map(|f| {
                let lambda = if here && spec.displace_phonon {
                    (params.mass * f.nu_tilde[i] / 2.0).sqrt() * spec.displacement
                } else {
                    0.0
                };
                coherent_state(params.d_ph, lambda)
            });
            match (ex, ph) {
                (Some(e), Some(p)) => {
                    let dp = p.len();
                    Array1::from_shape_fn(e.len() * dp, |k| e[k / dp] * p[k % dp])
                }
                (Some(e), None) => e,
                (None, Some(p)) => p,
                (None, None) => unreachable!("every kind has a subsystem"),
            }
        })
        .collect();
    TensorTrain::product_state(&local)
}

/// `Re <psi|O|psi> / <psi|psi>`.
pub fn expectation(psi: &TensorTrain, op: &TtOperator) -> Result<f64> {
    let nrm2 = psi.inner(psi)?.re;
    Ok(op.expectation(psi)?.re / nrm2)
}

pub fn energy(psi: &TensorTrain, hamiltonian: &TtOperator) -> Result<f64> {
    expectation(psi, hamiltonian)
}

/// Operators measured along a trajectory.
#[derive(Clone, Debug)]
pub struct ObservableSet {
    hamiltonian: TtOperator,
    n_ex: Option<Array2<f64>>,
    /// `R_i` per site.
    displacement: Option<Vec<Array2<f64>>>,
    exciton_number: Option<TtOperator>,
}

/// Observables at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub time: f64,
    pub norm: f64,
    pub energy: f64,
    /// Exciton population per site; zeros without excitons.
    pub populations: Vec<f64>,
    /// `<R_i>` per site; zeros without phonons.
    pub displacements: Vec<f64>,
    /// `||psi - psi_ref||` when a quantum reference exists.
    pub state_error: Option<f64>,
}

impl ObservableSet {
    pub fn new(params: &ChainParameters, hamiltonian: TtOperator) -> Result<Self> {
        let ops = local_operators(params)?;
        let displacement = match (&ops.q, params.kind.has_phonons()) {
            (Some(q), true) => {
                let f = effective_frequencies(params)?;
                Some(f.nu_tilde.iter().map(|nu| q / (2.0 * params.mass * nu).sqrt()).collect())
            }
            _ => None,
        };
        let exciton_number = match &ops.n_ex {
            Some(n_ex) => Some(TtOperator::sum_of_local(&vec![n_ex.clone(); params.n_sites])?),
            None => None,
        };
        Ok(ObservableSet { hamiltonian, n_ex: ops.n_ex, displacement, exciton_number })
    }

    pub fn hamiltonian(&self) -> &TtOperator {
        &self.hamiltonian
    }

    /// Normalized `<Σ b†b>`; `None` without excitons.
    pub fn exciton_number(&self, psi: &TensorTrain) -> Result<Option<f64>> {
        self.exciton_number.as_ref().map(|op| expectation(psi, op)).transpose()
    }

    pub fn measure(&self, psi: &TensorTrain, step: usize, time: f64) -> Result<Sample> {
        let n = psi.n_sites();
        let nrm2 = psi.inner(psi)?.re;
        let energy = self.hamiltonian.expectation(psi)?.re / nrm2;
        let populations = match &self.n_ex {
            Some(op) => psi.site_expectations(|_| op.clone()).iter().map(|z| z.re / nrm2).collect(),
            None => vec![0.0; n],
        };
        let displacements = match &self.displacement {
            Some(rs) => psi.site_expectations(|i| rs[i].clone()).iter().map(|z| z.re / nrm2).collect(),
            None => vec![0.0; n],
        };
        Ok(Sample {
            step,
            time,
            norm: nrm2.max(0.0).sqrt(),
            energy,
            populations,
            displacements,
            state_error: None,
        })
    }
}

/// `<n_i>` of one site, normalized.
pub fn site_population(psi: &TensorTrain, params: &ChainParameters, site: usize) -> Result<f64> {
    let ops = local_operators(params)?;
    let n_ex = ops.n_ex.ok_or_else(|| Error::Unsupported("no excitons in this chain".into()))?;
    expectation(psi, &TtOperator::local(&psi.dims(), site, &n_ex)?)
}

/// `<R_i>` of one site, normalized.
pub fn displacement(psi: &TensorTrain, params: &ChainParameters, site: usize) -> Result<f64> {
    let ops = local_operators(params)?;
    let q = ops.q.ok_or_else(|| Error::Unsupported("no phonons in this chain".into()))?;
    let f = effective_frequencies(params)?;
    let r = q / (2.0 * params.mass * f.nu_tilde[site]).sqrt();
    expectation(psi, &TtOperator::local(&psi.dims(), site, &r)?)
}

/// RMSD aggregates over the main-step samples.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub rmsd_norm: f64,
    pub rmsd_energy_rel: f64,
    /// False when the initial energy vanished and the absolute deviation
    /// was used instead.
    pub energy_relative: bool,
    pub rmsd_state: Option<f64>,
    pub rmsd_positions: Option<f64>,
    pub cpu_seconds: f64,
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), x| (s + x * x, c + 1));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// Aggregates samples `[t_0, t_1, ..]`; averages run over `t_1..` (the
/// initial sample only fixes `E_0`). `classical` holds one displacement
/// vector per sample.
pub fn rmsd_metrics(samples: &[Sample], classical: Option<&[Vec<f64>]>) -> Result<MetricsReport> {
    let first = samples.first().ok_or_else(|| Error::GridMismatch("no samples".into()))?;
    let rest = if samples.len() > 1 { &samples[1..] } else { samples };
    let e0 = first.energy;
    let energy_relative = e0 != 0.0;
    let rmsd_norm = rms(rest.iter().map(|s| s.norm - 1.0));
    let rmsd_energy_rel = rms(rest.iter().map(|s| {
        if energy_relative {
            (s.energy - e0) / e0
        } else {
            s.energy - e0
        }
    }));
    let rmsd_state = if rest.iter().all(|s| s.state_error.is_some()) {
        Some(rms(rest.iter().map(|s| s.state_error.unwrap_or(0.0))))
    } else {
        None
    };
    let rmsd_positions = match classical {
        None => None,
        Some(refs) => {
            if refs.len() != samples.len() {
                return Err(Error::GridMismatch(format!(
                    "{} samples vs {} classical points",
                    samples.len(),
                    refs.len()
                )));
            }
            let skip = samples.len() - rest.len();
            let mut diffs = Vec::new();
            for (s, r) in rest.iter().zip(&refs[skip..]) {
                if r.len() != s.displacements.len() {
                    return Err(Error::GridMismatch("site count differs".into()));
                }
                diffs.extend(s.displacements.iter().zip(r).map(|(a, b)| a - b));
            }
            Some(rms(diffs.into_iter()))
        }
    };
    Ok(MetricsReport {
        rmsd_norm,
        rmsd_energy_rel,
        energy_relative,
        rmsd_state,
        rmsd_positions,
        cpu_seconds: 0.0,
    })
}
