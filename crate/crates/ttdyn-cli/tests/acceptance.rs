//! Acceptance run: one PASS/FAIL line per criterion. Criteria that cannot be
//! met are reported, not hidden; the process exits 0 either way so that the
//! report is always produced. `TTDYN_ACCEPTANCE_ONLY=2,3` restricts the run.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;
use ttdyn::propagators::{kahan_li, yoshida_neri};
use ttdyn::reference::{bessel_j, bessel_populations, dense_hamiltonian, ClassicalChain, ClassicalPhasePoint};
use ttdyn::slim::assemble_operator;
use ttdyn::{
    build_slim, hamiltonian, integrator, ChainParameters, ObservableSet, PropagatorConfig, Scheme, SystemKind,
    TensorTrain, TruncationPolicy, TtOperator,
};
use ttdyn_cli::output::fmt_f64;
use ttdyn_cli::{read_summary, run_experiment, slopes, write_outputs, ExperimentConfig, RunOptions, TrajectoryRecord};

type Check = anyhow::Result<(bool, String)>;

fn config(kind: SystemKind, n: usize, schemes: &[Scheme], ranks: &[usize], subs: &[usize]) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(kind, n);
    c.schemes = schemes.to_vec();
    c.max_ranks = ranks.to_vec();
    c.sub_steps = subs.to_vec();
    c
}

fn run(c: &ExperimentConfig) -> anyhow::Result<Vec<TrajectoryRecord>> {
    let records = run_experiment(c, &RunOptions::default())?;
    for r in &records {
        if let Some(f) = &r.failure {
            anyhow::bail!("{} failed: {f}", r.file_name());
        }
    }
    Ok(records)
}

fn metric(r: &TrajectoryRecord, f: impl Fn(&ttdyn::MetricsReport) -> Option<f64>) -> f64 {
    r.metrics.as_ref().and_then(f).unwrap_or(f64::NAN)
}

fn sci(x: f64) -> String {
    format!("{x:.2e}")
}

fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Dense SLIM operator against the direct dense build at the cap sizes.
fn operators() -> Check {
    let mut worst = 0.0f64;
    for (kind, n) in [(SystemKind::Exciton, 12), (SystemKind::Phonon, 4), (SystemKind::Coupled, 3)] {
        let p = ChainParameters::new(kind, n);
        let h = hamiltonian(&p)?.to_dense();
        anyhow::ensure!(h.nrows() == 4096, "{kind} has dimension {}", h.nrows());
        worst = worst.max(max_abs(&h, &dense_hamiltonian(&p)?));
    }
    Ok((worst <= 1e-13, format!("max-abs {} over exciton/phonon/coupled at D = 4096", sci(worst))))
}

/// Log-log slopes of rmsd_state against dt on coupled N=3 at r=16.
fn slopes_coupled() -> Check {
    let plan: [(Scheme, &[usize], f64, f64); 7] = [
        (Scheme::S2, &[500, 1000, 2000], 2.0, 0.3),
        (Scheme::Sm, &[50, 100, 200], 2.0, 0.3),
        (Scheme::Yn, &[5, 10, 20, 50], 4.0, 0.5),
        (Scheme::K4, &[5, 10, 20, 50], 4.0, 0.5),
        (Scheme::S4, &[20, 50, 100], 4.0, 0.5),
        (Scheme::Kl, &[1, 2, 5], 8.0, 1.0),
        (Scheme::K8, &[1, 2, 5], 8.0, 1.0),
    ];
    let dir = TempDir::new()?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (scheme, subs, target, tol) in plan {
        let mut c = config(SystemKind::Coupled, 3, &[scheme], &[16], subs);
        c.main_steps = 4;
        let out = dir.path().join(scheme.name());
        write_outputs(&run(&c)?, &out, true)?;
        let fit = slopes(&read_summary(&out.join("summary.csv"))?, 1e-12, 1e-3).pop().expect("one group");
        let slope = fit.slope.unwrap_or(f64::NAN);
        let pass = (slope - target).abs() <= tol;
        ok &= pass;
        parts.push(format!("{scheme} {slope:.2}{}", if pass { "" } else { "(!)" }));
    }
    Ok((ok, parts.join(", ")))
}

/// KL at its best sub-step count against the dense oracle.
fn kl_endpoint() -> Check {
    let c = config(SystemKind::Coupled, 3, &[Scheme::Kl], &[16], &[10, 20]);
    let records = run(&c)?;
    let (best, sub) = records
        .iter()
        .map(|r| (metric(r, |m| m.rmsd_state), r.cell.sub_steps))
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
    Ok((best <= 1e-9, format!("best rmsd_state {} at {sub} sub-steps", sci(best))))
}

/// TDVP norm and energy conservation on all three kinds.
fn tdvp_conservation() -> Check {
    let cases = [
        (SystemKind::Exciton, 12, vec![2, 4]),
        (SystemKind::Phonon, 4, vec![8, 64]),
        (SystemKind::Coupled, 3, vec![4, 16]),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, n, ranks) in cases {
        let mut c = config(kind, n, &[Scheme::Tdvp], &ranks, &[1, 10]);
        c.quantum_reference = false;
        c.classical_reference = false;
        let records = run(&c)?;
        let norm = records.iter().map(|r| metric(r, |m| Some(m.rmsd_norm))).fold(0.0, f64::max);
        let energy = records.iter().map(|r| metric(r, |m| Some(m.rmsd_energy_rel))).fold(0.0, f64::max);
        ok &= norm <= 1e-10 && energy <= 1e-10;
        parts.push(format!("{kind} norm {} energy {}", sci(norm), sci(energy)));
    }
    Ok((ok, parts.join("; ")))
}

/// Exciton N=12, SM at 100 sub-steps, r = 2 against r = 1.
fn exciton_rank_threshold() -> Check {
    let mut c = config(SystemKind::Exciton, 12, &[Scheme::Sm], &[1, 2], &[100]);
    c.state.excited_site = Some(6);
    let records = run(&c)?;
    let e1 = metric(&records[0], |m| m.rmsd_state);
    let e2 = metric(&records[1], |m| m.rmsd_state);
    let pass = e2 <= 1e-6 && e1 >= 100.0 * e2;
    Ok((pass, format!("rmsd_state r=2 {}, r=1 {} (ratio {:.0})", sci(e2), sci(e1), e1 / e2)))
}

/// Exciton populations against J²_{i-i0}(2|β|t) for t <= 200.
fn bessel() -> Check {
    let mut c = config(SystemKind::Exciton, 12, &[Scheme::Kl], &[2], &[10]);
    c.main_steps = 4;
    c.state.excited_site = Some(6);
    let record = run(&c)?.pop().expect("one cell");
    let oracle = metric(&record, |m| m.rmsd_state);
    let mut worst = 0.0f64;
    for s in &record.samples {
        let exact = bessel_populations(6, c.system.beta, s.time, 12);
        for (a, b) in s.populations.iter().zip(&exact) {
            worst = worst.max((a - b).abs());
        }
    }
    // The open 12-site chain reflects the wave by t = 200, so J² is only the
    // infinite-chain limit; the dense finite-chain error separates the two.
    Ok((worst <= 1e-3, format!("max-abs {} over t = 0..200; rmsd_state vs finite-chain dense {}", sci(worst), sci(oracle))))
}

/// Quantum displacements against the classical chain.
fn ehrenfest() -> Check {
    let mut c = config(SystemKind::Phonon, 4, &[Scheme::S4], &[32], &[500]);
    c.system.d_ph = 16;
    c.state.excited_site = Some(2);
    c.quantum_reference = false;
    let record = run(&c)?.pop().expect("one cell");
    let e = metric(&record, |m| m.rmsd_positions);
    Ok((e <= 1e-5, format!("rmsd_positions {} ({:.0} s propagation)", sci(e), record.cpu_seconds)))
}

/// SM on the phonon chain at full rank keeps the norm.
fn splitting_unitarity() -> Check {
    let mut c = config(SystemKind::Phonon, 4, &[Scheme::Sm], &[64], &[10, 100]);
    c.state.excited_site = Some(2);
    c.quantum_reference = false;
    let records = run(&c)?;
    let worst = records.iter().map(|r| metric(r, |m| Some(m.rmsd_norm))).fold(0.0, f64::max);
    Ok((worst <= 1e-10, format!("max rmsd_norm {} at 10 and 100 sub-steps", sci(worst))))
}

/// Exciton-number drift on coupled N=3 for every scheme at r = 16.
fn exciton_number() -> Check {
    let mut worst = (0.0f64, Scheme::S2);
    for scheme in Scheme::ALL {
        // Differencing is only conditionally stable. A two-vector Krylov step
        // amplifies round-off in other exciton-number sectors by about
        // sqrt(1 + (dt α)²) per step, so it needs a step well below 1/α.
        let sub = match scheme {
            Scheme::K2 => 200,
            s if s.differencing_order().is_some() => 50,
            _ => 10,
        };
        let mut c = config(SystemKind::Coupled, 3, &[scheme], &[16], &[sub]);
        c.quantum_reference = false;
        let drift = run(&c)?.pop().expect("one cell").exciton_number_drift();
        if !(drift <= worst.0) {
            worst = (drift, scheme);
        }
    }
    Ok((worst.0 < 1e-10, format!("largest drift {} ({}), 13 schemes", sci(worst.0), worst.1)))
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn random_state(dims: &[usize], rank: usize, seed: u64) -> TensorTrain {
    TensorTrain::random(dims, rank, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn dist(a: &Array1<C64>, b: &Array1<C64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

type Property = (&'static str, Box<dyn Fn() -> Result<(), String>>);

fn properties() -> Vec<Property> {
    let dims = || prop::collection::vec(2usize..=3, 2..=5);
    fn check<S: Strategy>(
        cases: u32,
        s: S,
        f: impl Fn(S::Value) -> Result<(), TestCaseError>,
    ) -> Result<(), String> {
        runner(cases).run(&s, f).map_err(|e| e.to_string())
    }
    vec![
        (
            "dense round trip",
            Box::new(move || {
                check(64, (dims(), 1usize..5, any::<u64>()), |(d, r, seed)| {
                    let psi = random_state(&d, r, seed);
                    let v = psi.to_dense();
                    let back = TensorTrain::from_dense(&v, &d, &TruncationPolicy::exact()).unwrap();
                    prop_assert!(dist(&back.to_dense(), &v) < 1e-12);
                    prop_assert!(dist(&psi.canonicalize(d.len() / 2).to_dense(), &v) < 1e-12 * (1.0 + v.len() as f64));
                    Ok(())
                })
            }),
        ),
        (
            "rank arithmetic",
            Box::new(move || {
                check(64, (dims(), 1usize..4, 1usize..4, any::<u64>()), |(d, ra, rb, seed)| {
                    let a = random_state(&d, ra, seed);
                    let b = random_state(&d, rb, seed ^ 1);
                    let sum = a.add(&b).unwrap();
                    let ops: Vec<Array2<f64>> =
                        d.iter().map(|&k| Array2::from_shape_fn((k, k), |(x, y)| (x + y) as f64)).collect();
                    let h = TtOperator::sum_of_local(&ops).unwrap();
                    let prod = h.apply(&a).unwrap();
                    for i in 1..d.len() {
                        prop_assert_eq!(sum.ranks()[i], a.ranks()[i] + b.ranks()[i]);
                        prop_assert_eq!(prod.ranks()[i], a.ranks()[i] * h.ranks()[i]);
                    }
                    Ok(())
                })
            }),
        ),
        (
            "truncation bound",
            Box::new(move || {
                check(64, (dims(), 2usize..6, 1usize..4, any::<u64>()), |(d, rank, r, seed)| {
                    let psi = random_state(&d, rank, seed);
                    let (out, discarded) = psi.truncate(&TruncationPolicy::rank(r).unwrap()).unwrap();
                    prop_assert!(out.ranks().iter().all(|&x| x <= r));
                    let err = dist(&out.to_dense(), &psi.to_dense());
                    prop_assert!(err <= discarded.iter().sum::<f64>().sqrt() + 1e-12);
                    Ok(())
                })
            }),
        ),
        (
            "slim hermiticity and ranks",
            Box::new(|| {
                let kinds = prop::sample::select(vec![SystemKind::Exciton, SystemKind::Phonon, SystemKind::Coupled]);
                check(24, (kinds, 2usize..=4, -0.05f64..0.05, -1e-3f64..1e-3), |(kind, n, beta, sigma)| {
                    let mut p = ChainParameters::new(kind, n);
                    p.d_ph = 2;
                    p.beta = beta;
                    p.sigma = sigma;
                    let slim = build_slim(&p).unwrap();
                    let op = assemble_operator(&slim).unwrap();
                    for bond in 0..n - 1 {
                        prop_assert_eq!(op.ranks()[bond + 1], 2 + slim.xi(bond));
                    }
                    let h = op.to_dense();
                    prop_assert!(max_abs(&h, &h.t().to_owned()) < 1e-14);
                    prop_assert!(max_abs(&h, &dense_hamiltonian(&p).unwrap()) < 1e-14);
                    Ok(())
                })
            }),
        ),
        (
            "composition sums",
            Box::new(|| {
                for (name, c) in [("yn", yoshida_neri()), ("kl", kahan_li())] {
                    let g = &c.gammas;
                    if (c.sum() - 1.0).abs() > 1e-14 {
                        return Err(format!("{name} coefficients sum to {}", c.sum()));
                    }
                    if g.iter().zip(g.iter().rev()).any(|(a, b)| a != b) {
                        return Err(format!("{name} is not palindromic"));
                    }
                    let cubes: f64 = g.iter().map(|x| x.powi(3)).sum();
                    if cubes.abs() > 1e-13 {
                        return Err(format!("{name} third moment {cubes}"));
                    }
                }
                Ok(())
            }),
        ),
        (
            "splitting unitarity",
            Box::new(|| {
                let p = ChainParameters { d_ph: 2, ..ChainParameters::new(SystemKind::Coupled, 3) };
                let h = hamiltonian(&p).unwrap();
                let slim = build_slim(&p).unwrap();
                let schemes = prop::sample::select(vec![Scheme::Lt, Scheme::Sm, Scheme::Yn, Scheme::Kl]);
                check(16, (0.01f64..20.0, schemes, any::<u64>()), |(tau, scheme, seed)| {
                    let psi = random_state(&p.dims(), 4, seed);
                    let psi = psi.scale(C64::new(1.0 / psi.norm(), 0.0));
                    let mut prop = integrator(&PropagatorConfig::new(scheme, tau, 16), &slim, &h).unwrap();
                    let out = prop.advance(&psi, 3).unwrap();
                    prop_assert!((out.norm_by_contraction() - 1.0).abs() < 1e-12);
                    Ok(())
                })
            }),
        ),
        (
            "bessel sum rule",
            Box::new(|| {
                check(64, 0.0f64..40.0, |x| {
                    let s: f64 = (-80..=80).map(|n| bessel_j(n, x).powi(2)).sum();
                    prop_assert!((s - 1.0).abs() < 1e-12, "x = {x}: {s}");
                    Ok(())
                })
            }),
        ),
        (
            "classical energy",
            Box::new(|| {
                let chain = ClassicalChain::new(&ChainParameters::new(SystemKind::Phonon, 4)).unwrap();
                let v = || prop::collection::vec(-2.0f64..2.0, 4);
                check(32, (v(), v(), 0.0f64..1e5), |(r, p, t)| {
                    let x0 = ClassicalPhasePoint { r: Array1::from(r), p: Array1::from(p).mapv(|x| x * 1e-3) };
                    let e0 = chain.energy(&x0);
                    let e = chain.energy(&chain.propagate(&x0, t));
                    prop_assert!((e - e0).abs() <= 1e-12 * e0.abs().max(1e-12));
                    Ok(())
                })
            }),
        ),
        (
            "populations sum to exciton number",
            Box::new(|| {
                let p = ChainParameters::new(SystemKind::Exciton, 5);
                let obs = ObservableSet::new(&p, hamiltonian(&p).unwrap()).unwrap();
                check(32, any::<u64>(), |seed| {
                    let psi = random_state(&p.dims(), 3, seed);
                    let s = obs.measure(&psi, 0, 0.0).unwrap();
                    let total: f64 = s.populations.iter().sum();
                    prop_assert!((total - obs.exciton_number(&psi).unwrap().unwrap()).abs() < 1e-12);
                    Ok(())
                })
            }),
        ),
        (
            "csv floats round trip",
            Box::new(|| {
                check(256, any::<f64>(), |x| {
                    let back: f64 = fmt_f64(x).parse().unwrap();
                    prop_assert!(back.to_bits() == x.to_bits() || (x.is_nan() && back.is_nan()));
                    Ok(())
                })
            }),
        ),
        ("cpu time linear in sub-steps", Box::new(|| timing_check().map_err(|e| e.to_string())?)),
    ]
}

/// SM cost at 10 vs 100 sub-steps, and S2 against SM at equal sub-steps.
fn timing_check() -> anyhow::Result<Result<(), String>> {
    let cost = |scheme, subs: &[usize]| -> anyhow::Result<Vec<f64>> {
        let mut c = config(SystemKind::Coupled, 3, &[scheme], &[16], subs);
        c.main_steps = 10;
        c.quantum_reference = false;
        Ok(run(&c)?.iter().map(|r| r.cpu_seconds).collect())
    };
    let sm = cost(Scheme::Sm, &[10, 100])?;
    // Differencing needs the finer step to stay stable.
    let s2 = cost(Scheme::S2, &[100])?[0];
    let ratio = sm[1] / sm[0];
    if !(10.0 / 1.5..=10.0 * 1.5).contains(&ratio) {
        return Ok(Err(format!("SM cost ratio over a decade of sub-steps is {ratio:.2}")));
    }
    if s2 >= sm[1] {
        return Ok(Err(format!("S2 {s2:.3} s is not cheaper than SM {:.3} s", sm[1])));
    }
    Ok(Ok(()))
}

fn invariants() -> Check {
    let mut failed = Vec::new();
    let props = properties();
    for (name, f) in &props {
        if let Err(e) = f() {
            failed.push(format!("{name}: {e}"));
        }
    }
    let detail = if failed.is_empty() {
        format!("{} property suites", props.len())
    } else {
        format!("{} of {} suites failed: {}", failed.len(), props.len(), failed.join("; "))
    };
    Ok((failed.is_empty(), detail))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 10] = [
        (1, "operator oracle equivalence", operators),
        (2, "order-of-accuracy slopes", slopes_coupled),
        (3, "high-precision KL endpoint", kl_endpoint),
        (4, "TDVP conservation", tdvp_conservation),
        (5, "exciton rank threshold", exciton_rank_threshold),
        (6, "Bessel populations", bessel),
        (7, "Ehrenfest correspondence", ehrenfest),
        (8, "splitting unitarity at full rank", splitting_unitarity),
        (9, "exciton-number conservation", exciton_number),
        (10, "invariant suites", invariants),
    ];
    let only: Option<Vec<u32>> = std::env::var("TTDYN_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut passed = 0;
    let mut ran = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e:#}")),
            Err(_) => (false, "panicked".to_string()),
        };
        passed += usize::from(ok);
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("{verdict} {id:>2} {name}: {detail} [{:.1} s]", t0.elapsed().as_secs_f64());
    }
    println!("acceptance: {passed}/{ran} criteria pass");
}
