//! Sweeps over (scheme, rank, sub-steps) cells against shared oracles.

use std::time::Instant;

use anyhow::Context;
use ndarray::Array1;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use ttdyn::reference::{
    conserved_labels, dense_hamiltonian, ClassicalChain, ClassicalPhasePoint, DensePropagator, DenseState,
};
use ttdyn::{
    build_initial_state, build_slim, hamiltonian, integrator, MetricsReport, ObservableSet, PropagatorConfig,
    Sample, Scheme, SlimComponents, SystemKind, TensorTrain, TtOperator,
};

use crate::config::ExperimentConfig;

/// A norm this far from 1 marks a diverged cell long before it overflows.
pub const DIVERGED_NORM: f64 = 1e2;

/// One sweep cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub scheme: Scheme,
    pub rank: usize,
    pub sub_steps: usize,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub kind: SystemKind,
    pub n_sites: usize,
    pub local_dim: usize,
    pub cell: Cell,
    pub dt: f64,
    /// One sample per main step including `t = 0`; shorter if the cell failed.
    pub samples: Vec<Sample>,
    /// `None` for failed cells.
    pub metrics: Option<MetricsReport>,
    pub failure: Option<String>,
    /// Wall-clock of the propagation calls only.
    pub cpu_seconds: f64,
}

impl TrajectoryRecord {
    pub fn file_name(&self) -> String {
        format!(
            "{}_N{}_r{}_{}_sub{}.csv",
            self.kind, self.n_sites, self.cell.rank, self.cell.scheme, self.cell.sub_steps
        )
    }

    /// Largest `|Σ_i n_i(t) - Σ_i n_i(0)|` along the trajectory.
    pub fn exciton_number_drift(&self) -> f64 {
        let total = |s: &Sample| s.populations.iter().sum::<f64>();
        let Some(first) = self.samples.first() else { return f64::NAN };
        let n0 = total(first);
        self.samples.iter().map(|s| (total(s) - n0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Worker threads for independent cells.
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { threads: 1 }
    }
}

/// Oracle trajectories sampled at the main-step boundaries.
pub struct References {
    pub times: Vec<f64>,
    pub quantum: Option<Vec<Array1<C64>>>,
    /// Displacements per sample.
    pub classical: Option<Vec<Vec<f64>>>,
}

/// Everything shared by the cells of one sweep.
struct Setup {
    slim: SlimComponents,
    hamiltonian: TtOperator,
    observables: ObservableSet,
    initial: TensorTrain,
    references: References,
}

pub fn initial_state(config: &ExperimentConfig) -> ttdyn::Result<TensorTrain> {
    match config.random_state_rank {
        Some(r) => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let psi = TensorTrain::random(&config.system.dims(), r, &mut rng);
            let nrm = psi.norm();
            Ok(psi.scale(C64::new(1.0 / nrm, 0.0)))
        }
        None => build_initial_state(&config.system, &config.state),
    }
}

/// Dense and classical oracle trajectories requested by `config`.
pub fn references(config: &ExperimentConfig, initial: &TensorTrain) -> anyhow::Result<References> {
    let times: Vec<f64> = (0..=config.main_steps).map(|k| k as f64 * config.main_step_size).collect();
    let quantum = if config.quantum_reference {
        let h = dense_hamiltonian(&config.system)?;
        let labels = conserved_labels(&config.system);
        let prop = DensePropagator::new(&h, Some(&labels)).context("dense eigendecomposition")?;
        let psi0 = DenseState::new(initial.to_dense())?;
        Some(prop.trajectory(&psi0, &times)?.into_iter().map(|s| s.amplitudes).collect())
    } else {
        None
    };
    let classical = if config.classical_reference {
        let chain = ClassicalChain::new(&config.system)?;
        let n = config.system.n_sites;
        let mut r = Array1::zeros(n);
        if config.state.displace_phonon {
            r[config.state.site(n) - 1] = config.state.displacement;
        }
        let x0 = ClassicalPhasePoint { r, p: Array1::zeros(n) };
        Some(times.iter().map(|&t| chain.propagate(&x0, t).r.to_vec()).collect())
    } else {
        None
    };
    Ok(References { times, quantum, classical })
}

fn setup(config: &ExperimentConfig) -> anyhow::Result<Setup> {
    let slim = build_slim(&config.system)?;
    let hamiltonian = hamiltonian(&config.system)?;
    let observables = ObservableSet::new(&config.system, hamiltonian.clone())?;
    let initial = initial_state(config)?;
    let references = references(config, &initial)?;
    Ok(Setup { slim, hamiltonian, observables, initial, references })
}

/// Cells in output order: scheme-major, then rank, then sub-steps.
pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &scheme in &config.schemes {
        for &rank in &config.max_ranks {
            for &sub_steps in &config.sub_steps {
                out.push(Cell { scheme, rank, sub_steps });
            }
        }
    }
    out
}

fn measure(setup: &Setup, psi: &TensorTrain, step: usize) -> ttdyn::Result<Sample> {
    let mut s = setup.observables.measure(psi, step, setup.references.times[step])?;
    if let Some(q) = &setup.references.quantum {
        let diff = psi.to_dense() - &q[step];
        s.state_error = Some(diff.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
    }
    Ok(s)
}

fn run_cell(config: &ExperimentConfig, setup: &Setup, cell: Cell) -> TrajectoryRecord {
    let dt = config.dt(cell.sub_steps);
    let mut record = TrajectoryRecord {
        kind: config.system.kind,
        n_sites: config.system.n_sites,
        local_dim: config.system.local_dim(),
        cell,
        dt,
        samples: Vec::with_capacity(config.main_steps + 1),
        metrics: None,
        failure: None,
        cpu_seconds: 0.0,
    };
    let mut pc = PropagatorConfig::new(cell.scheme, dt, cell.rank);
    pc.inter_stage_rank = config.inter_stage_rank;
    pc.svd_threshold = config.svd_threshold;
    pc.krylov_dim = config.krylov_dim;
    pc.local_exp_dim = config.local_exp_dim;

    let outcome = (|| -> ttdyn::Result<()> {
        let mut prop = integrator(&pc, &setup.slim, &setup.hamiltonian)?;
        let mut psi = setup.initial.clone();
        record.samples.push(measure(setup, &psi, 0)?);
        for step in 1..=config.main_steps {
            let t0 = Instant::now();
            psi = prop.advance(&psi, cell.sub_steps)?;
            record.cpu_seconds += t0.elapsed().as_secs_f64();
            let s = measure(setup, &psi, step)?;
            if !(s.norm < DIVERGED_NORM && s.energy.is_finite()) {
                return Err(ttdyn::Error::UnstableStep { time: s.time });
            }
            record.samples.push(s);
        }
        Ok(())
    })();

    match outcome.and_then(|()| rmsd(setup, &record.samples)) {
        Ok(mut m) => {
            m.cpu_seconds = record.cpu_seconds;
            record.metrics = Some(m);
        }
        Err(e) => record.failure = Some(e.to_string()),
    }
    record
}

fn rmsd(setup: &Setup, samples: &[Sample]) -> ttdyn::Result<MetricsReport> {
    ttdyn::observables::rmsd_metrics(samples, setup.references.classical.as_deref())
}

/// Runs every cell of the sweep. Failed cells are recorded, not fatal.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> anyhow::Result<Vec<TrajectoryRecord>> {
    config.validate()?;
    let setup = setup(config)?;
    let cells = cells(config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.max(1))
        .build()
        .context("building worker pool")?;
    Ok(pool.install(|| cells.par_iter().map(|&c| run_cell(config, &setup, c)).collect()))
}

/// Observables of the dense oracle at the main-step boundaries.
pub fn oracle_samples(config: &ExperimentConfig) -> anyhow::Result<(Option<Vec<Sample>>, References)> {
    let hamiltonian = hamiltonian(&config.system)?;
    let observables = ObservableSet::new(&config.system, hamiltonian)?;
    let initial = initial_state(config)?;
    let refs = references(config, &initial)?;
    let samples = match &refs.quantum {
        Some(q) => {
            let dims = config.system.dims();
            let exact = ttdyn::TruncationPolicy::exact();
            let mut out = Vec::with_capacity(q.len());
            for (k, v) in q.iter().enumerate() {
                let psi = TensorTrain::from_dense(v, &dims, &exact)?;
                let mut s = observables.measure(&psi, k, refs.times[k])?;
                s.state_error = Some(0.0);
                out.push(s);
            }
            Some(out)
        }
        None => None,
    };
    Ok((samples, refs))
}
