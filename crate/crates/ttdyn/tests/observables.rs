mod common;

use common::*;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use ttdyn::observables::{
    coherent_state, displacement, energy, rmsd_metrics, site_population,
};
use ttdyn::{
    build_initial_state, hamiltonian, ChainParameters, InitialStateSpec, ObservableSet, Sample,
    SystemKind,
};

fn sample(step: usize, norm: f64, energy: f64, state_error: Option<f64>) -> Sample {
    Sample {
        step,
        time: step as f64,
        norm,
        energy,
        populations: vec![0.0; 2],
        displacements: vec![0.0; 2],
        state_error,
    }
}

#[test]
fn coherent_state_basics() {
    let vac = coherent_state(8, 0.0);
    assert_eq!(vac[0], C64::new(1.0, 0.0));
    assert!(vac.iter().skip(1).all(|z| z.norm() == 0.0));

    // lambda for a unit displacement of an interior site
    let nu = 3f64.sqrt() * 1e-3;
    let lambda = (nu / 2.0f64).sqrt();
    assert!((lambda - 0.029_428_31).abs() < 1e-8);

    let a = coherent_state(8, 0.03);
    // Weight of the untruncated tail beyond n = 7 is below 1e-20.
    let mut term = (-0.5 * 0.03f64 * 0.03).exp();
    let mut tail = 0.0;
    for n in 1..40 {
        term *= 0.03 / (n as f64).sqrt();
        if n >= 8 {
            tail += term * term;
        }
    }
    assert!(tail < 1e-20);
    // <c> = lambda
    let mean: C64 = (1..8).map(|n| a[n - 1].conj() * a[n] * (n as f64).sqrt()).sum();
    assert!((mean.re - 0.03).abs() < 1e-14);
}

#[test]
fn exciton_initial_state() {
    let p = ChainParameters::new(SystemKind::Exciton, 12);
    let spec = InitialStateSpec { excited_site: Some(6), ..InitialStateSpec::default_for(SystemKind::Exciton) };
    let psi = build_initial_state(&p, &spec).unwrap();
    assert_eq!(psi.max_bond(), 1);
    for i in 0..12 {
        let pop = site_population(&psi, &p, i).unwrap();
        assert!((pop - if i == 5 { 1.0 } else { 0.0 }).abs() < 1e-15);
    }
    let h = hamiltonian(&p).unwrap();
    assert!((energy(&psi, &h).unwrap() - 0.1).abs() < 1e-15);
    // Default site is ceil(N / 2).
    assert_eq!(InitialStateSpec::default_for(SystemKind::Exciton).site(12), 6);
    assert_eq!(InitialStateSpec::default_for(SystemKind::Exciton).site(3), 2);
}

#[test]
fn phonon_initial_state() {
    let p = ChainParameters::new(SystemKind::Phonon, 4);
    let spec = InitialStateSpec { excited_site: Some(2), ..InitialStateSpec::default_for(SystemKind::Phonon) };
    let psi = build_initial_state(&p, &spec).unwrap();
    for i in 0..4 {
        let r = displacement(&psi, &p, i).unwrap();
        assert!((r - if i == 1 { 1.0 } else { 0.0 }).abs() < 1e-12, "site {i}: {r}");
    }
}

#[test]
fn phonon_vacuum_energy() {
    let p = ChainParameters::new(SystemKind::Phonon, 4);
    let spec = InitialStateSpec { displacement: 0.0, ..InitialStateSpec::default_for(SystemKind::Phonon) };
    let psi = build_initial_state(&p, &spec).unwrap();
    let e = energy(&psi, &hamiltonian(&p).unwrap()).unwrap();
    assert!((e - 3.146_264_369_941_973e-3).abs() < 1e-17);
}

#[test]
fn coupled_initial_state() {
    let p = ChainParameters::new(SystemKind::Coupled, 3);
    let psi = build_initial_state(&p, &InitialStateSpec::default_for(SystemKind::Coupled)).unwrap();
    let obs = ObservableSet::new(&p, hamiltonian(&p).unwrap()).unwrap();
    assert!((obs.exciton_number(&psi).unwrap().unwrap() - 1.0).abs() < 1e-15);
    let s = obs.measure(&psi, 0, 0.0).unwrap();
    assert!((s.populations[1] - 1.0).abs() < 1e-15);
    assert!(s.displacements.iter().all(|x| x.abs() < 1e-15));
    assert!((s.norm - 1.0).abs() < 1e-15);
}

#[test]
fn invalid_excited_site() {
    let p = ChainParameters::new(SystemKind::Exciton, 4);
    let spec = InitialStateSpec { excited_site: Some(5), ..InitialStateSpec::default_for(SystemKind::Exciton) };
    assert!(build_initial_state(&p, &spec).is_err());
    let spec = InitialStateSpec { excited_site: Some(0), ..spec };
    assert!(build_initial_state(&p, &spec).is_err());
}

#[test]
fn measured_populations_match_dense() {
    let p = ChainParameters { d_ph: 3, ..ChainParameters::new(SystemKind::Coupled, 3) };
    let psi = random_state(&p.dims(), 5, 3);
    let obs = ObservableSet::new(&p, hamiltonian(&p).unwrap()).unwrap();
    let s = obs.measure(&psi, 0, 0.0).unwrap();
    let v = psi.to_dense();
    let d = p.local_dim();
    let mut pops = [0.0; 3];
    for (idx, z) in v.iter().enumerate() {
        for (i, pop) in pops.iter_mut().enumerate() {
            let digit = idx / d.pow(2 - i as u32) % d;
            if digit >= p.d_ph {
                *pop += z.norm_sqr();
            }
        }
    }
    for i in 0..3 {
        assert!((s.populations[i] - pops[i]).abs() < 1e-13);
    }
    let total: f64 = s.populations.iter().sum();
    assert!((total - obs.exciton_number(&psi).unwrap().unwrap()).abs() < 1e-13);
}

#[test]
fn self_comparison_and_exact_norm() {
    let samples: Vec<Sample> = (0..=100).map(|k| sample(k, 1.0, 0.1, Some(0.0))).collect();
    let m = rmsd_metrics(&samples, None).unwrap();
    assert_eq!(m.rmsd_state, Some(0.0));
    assert_eq!(m.rmsd_norm, 0.0);
    assert_eq!(m.rmsd_energy_rel, 0.0);
    assert!(m.energy_relative);
    assert_eq!(m.rmsd_positions, None);
}

#[test]
fn rmsd_definitions() {
    let samples = vec![
        sample(0, 1.0, 2.0, Some(0.0)),
        sample(1, 1.1, 2.2, Some(0.3)),
        sample(2, 0.8, 1.6, Some(0.4)),
    ];
    let m = rmsd_metrics(&samples, None).unwrap();
    assert!((m.rmsd_norm - ((0.01 + 0.04) / 2.0f64).sqrt()).abs() < 1e-15);
    assert!((m.rmsd_energy_rel - ((0.01 + 0.04) / 2.0f64).sqrt()).abs() < 1e-15);
    assert!((m.rmsd_state.unwrap() - ((0.09 + 0.16) / 2.0f64).sqrt()).abs() < 1e-15);

    let mut with_disp = samples.clone();
    with_disp[1].displacements = vec![0.5, 0.0];
    let classical = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]];
    let m = rmsd_metrics(&with_disp, Some(&classical)).unwrap();
    assert!((m.rmsd_positions.unwrap() - (0.25f64 / 4.0).sqrt()).abs() < 1e-15);
    assert!(rmsd_metrics(&with_disp, Some(&classical[..2])).is_err());
}

#[test]
fn zero_initial_energy_falls_back_to_absolute() {
    let samples = vec![sample(0, 1.0, 0.0, None), sample(1, 1.0, 1e-3, None)];
    let m = rmsd_metrics(&samples, None).unwrap();
    assert!(!m.energy_relative);
    assert!((m.rmsd_energy_rel - 1e-3).abs() < 1e-18);
    assert_eq!(m.rmsd_state, None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn displacement_round_trip(site in 1usize..=4, dr in -2.0f64..2.0) {
        let p = ChainParameters { d_ph: 16, ..ChainParameters::new(SystemKind::Phonon, 4) };
        let spec = InitialStateSpec {
            excited_site: Some(site),
            displacement: dr,
            ..InitialStateSpec::default_for(SystemKind::Phonon)
        };
        let psi = build_initial_state(&p, &spec).unwrap();
        prop_assert!((displacement(&psi, &p, site - 1).unwrap() - dr).abs() < 1e-12);
    }

    #[test]
    fn populations_sum_to_exciton_number(seed in any::<u64>()) {
        let p = ChainParameters::new(SystemKind::Exciton, 5);
        let psi = random_state(&p.dims(), 3, seed);
        let obs = ObservableSet::new(&p, hamiltonian(&p).unwrap()).unwrap();
        let s = obs.measure(&psi, 0, 0.0).unwrap();
        let total: f64 = s.populations.iter().sum();
        prop_assert!((total - obs.exciton_number(&psi).unwrap().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn coherent_mean_matches_lambda(lambda in 0.0f64..0.5) {
        let a = coherent_state(24, lambda);
        let nrm: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((nrm - 1.0).abs() < 1e-14);
        let mean: f64 = (1..24).map(|n| (a[n - 1].conj() * a[n]).re * (n as f64).sqrt()).sum();
        prop_assert!((mean - lambda).abs() < 1e-12);
    }
}
