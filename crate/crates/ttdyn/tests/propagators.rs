mod common;

use common::*;
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use ttdyn::observables::ObservableSet;
use ttdyn::propagators::{
    bootstrap_previous, build_pair_generators, kahan_li, lanczos_expm, step_global_krylov,
    two_site_gate, yoshida_neri, Bootstrap, CompositionCoefficients, GateCache, Parity,
};
use ttdyn::reference::{conserved_labels, dense_hamiltonian, DensePropagator, DenseState};
use ttdyn::{
    build_initial_state, build_slim, hamiltonian, integrator, ChainParameters, Error,
    InitialStateSpec, PropagatorConfig, Scheme, SystemKind, TensorTrain, TruncationPolicy,
};

/// Coupled 3-site chain with 2 vibrational levels: 64 states, full rank 4.
fn tiny() -> ChainParameters {
    ChainParameters { d_ph: 2, ..ChainParameters::new(SystemKind::Coupled, 3) }
}

fn initial(p: &ChainParameters) -> TensorTrain {
    build_initial_state(p, &InitialStateSpec::default_for(p.kind)).unwrap()
}

/// `||psi(T) - psi_exact(T)||` after `k` sub-steps of size `T / k`.
fn final_error(p: &ChainParameters, scheme: Scheme, t: f64, k: usize, rank: usize) -> f64 {
    let psi0 = initial(p);
    let h = hamiltonian(p).unwrap();
    let slim = build_slim(p).unwrap();
    let mut prop = integrator(&PropagatorConfig::new(scheme, t / k as f64, rank), &slim, &h).unwrap();
    let psi = prop.advance(&psi0, k).unwrap();
    let dense = DensePropagator::new(&dense_hamiltonian(p).unwrap(), Some(&conserved_labels(p))).unwrap();
    let exact = dense.propagate(&DenseState::new(psi0.to_dense()).unwrap(), t).unwrap();
    dist(&psi.to_dense(), &exact.amplitudes)
}

fn observed_order(p: &ChainParameters, scheme: Scheme, t: f64, k: usize) -> f64 {
    let coarse = final_error(p, scheme, t, k, 64);
    let fine = final_error(p, scheme, t, 2 * k, 64);
    (coarse / fine).log2()
}

#[test]
fn scheme_names_round_trip() {
    for s in Scheme::ALL {
        assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        assert_eq!(s.to_string().to_uppercase().parse::<Scheme>().unwrap(), s);
    }
    match "rk4".parse::<Scheme>() {
        Err(Error::InvalidParameter { name, .. }) => assert_eq!(name, "schemes"),
        other => panic!("expected an error, got {other:?}"),
    }
    assert_eq!(Scheme::S6.differencing_order(), Some(3));
    assert_eq!(Scheme::K8.krylov_dim(), Some(8));
    assert!(Scheme::Kl.is_splitting() && !Scheme::Tdvp.is_splitting());
}

#[test]
fn config_validation() {
    assert!(PropagatorConfig::new(Scheme::Sm, 0.0, 4).validate().is_err());
    assert!(PropagatorConfig::new(Scheme::Sm, f64::NAN, 4).validate().is_err());
    assert!(PropagatorConfig::new(Scheme::Sm, 1.0, 0).validate().is_err());
    let mut c = PropagatorConfig::new(Scheme::K4, 1.0, 4);
    c.krylov_dim = Some(3);
    assert!(c.validate().is_err());
    let mut c = PropagatorConfig::new(Scheme::Sm, 1.0, 4);
    c.inter_stage_rank = Some(2);
    assert!(c.validate().is_err());
    let c = PropagatorConfig::new(Scheme::Yn, 1.0, 4);
    assert_eq!(c.stage_rank(), 8);
    assert_eq!(c.krylov_dimension(), 2);
}

#[test]
fn composition_coefficients() {
    for c in [CompositionCoefficients::single(), yoshida_neri(), kahan_li()] {
        assert!((c.sum() - 1.0).abs() < 1e-14);
        assert!(c.is_palindromic());
    }
    assert_eq!(kahan_li().gammas.len(), 17);
    // Odd-power order conditions of symmetric compositions.
    let moment = |c: &CompositionCoefficients, k: i32| c.gammas.iter().map(|g| g.powi(k)).sum::<f64>();
    assert!(moment(&yoshida_neri(), 3).abs() < 1e-14);
    for k in [3, 5, 7] {
        assert!(moment(&kahan_li(), k).abs() < 1e-14, "k = {k}");
    }
}

#[test]
fn pair_generators_sum_to_hamiltonian() {
    for p in [tiny(), ChainParameters::new(SystemKind::Exciton, 5), ChainParameters { d_ph: 3, ..ChainParameters::new(SystemKind::Phonon, 4) }] {
        let gens = build_pair_generators(&build_slim(&p).unwrap()).unwrap();
        let dims = p.dims();
        let d = p.local_dim();
        let dim: usize = dims.iter().product();
        let mut total = Array2::<f64>::zeros((dim, dim));
        for g in &gens {
            // Embed on (site, site + 1) by treating the pair as one site of dimension d^2.
            let mut merged = dims.clone();
            if g.is_pair(p.n_sites) {
                merged.splice(g.site..g.site + 2, [d * d]);
            }
            total = total + embed(&merged, g.site, &g.matrix);
            assert_eq!(g.parity, if g.site % 2 == 0 { Parity::Odd } else { Parity::Even });
        }
        assert!(max_abs(&total, &hamiltonian(&p).unwrap().to_dense()) < 1e-15);
    }
}

#[test]
fn gates_are_unitary() {
    let gens = build_pair_generators(&build_slim(&tiny()).unwrap()).unwrap();
    for g in &gens {
        let u = two_site_gate(g, 7.5).unwrap();
        let uu = u.t().mapv(|z| z.conj()).dot(&u);
        let eye = Array2::<C64>::eye(u.nrows());
        assert!(uu.iter().zip(&eye).all(|(a, b)| (a - b).norm() < 1e-13));
        let back = two_site_gate(g, -7.5).unwrap().dot(&u);
        assert!(back.iter().zip(&eye).all(|(a, b)| (a - b).norm() < 1e-13));
    }
    let mut cache = GateCache::new(&gens).unwrap();
    assert_eq!(cache.n_sites(), 3);
    // Homogeneous chain: first pair, second pair and the lone last site.
    assert!(cache.distinct() <= 3);
    assert_eq!(cache.gate(0, 1.0).dim(), (16, 16));
}

#[test]
fn lanczos_matches_dense_exponential() {
    // Large enough to leave the dense fallback.
    let n = 400;
    let a = Array2::from_shape_fn((n, n), |(i, j)| match i.abs_diff(j) {
        0 => (i as f64 * 0.37).sin(),
        1 => 0.3,
        _ => 0.0,
    });
    let x = Array1::from_shape_fn(n, |i| C64::new((i as f64).cos(), (0.5 * i as f64).sin()));
    let apply = |v: &Array1<C64>| Array1::from_shape_fn(n, |i| {
        (i.saturating_sub(1)..(i + 2).min(n)).map(|j| v[j] * a[[i, j]]).sum::<C64>()
    });
    let y = lanczos_expm(apply, &x, 2.5, 16).unwrap();
    let exact = ttdyn::linalg::Spectral::of_real(a.view()).unwrap().apply(2.5, x.view());
    assert!(dist(&y, &exact) < 1e-11 * norm(&x), "{}", dist(&y, &exact));
}

#[test]
fn bootstrap_edge_cases() {
    let p = tiny();
    let psi = initial(&p);
    let h = hamiltonian(&p).unwrap();
    let policy = TruncationPolicy::exact();
    let same = bootstrap_previous(&psi, &h, 0.0, 2, &policy, Bootstrap::Taylor).unwrap();
    assert!(dist(&same.to_dense(), &psi.to_dense()) < 1e-15);
    assert!(bootstrap_previous(&psi, &h, 1.0, 0, &policy, Bootstrap::Taylor).is_err());
    assert!(bootstrap_previous(&psi, &h, 1.0, 5, &policy, Bootstrap::EulerHalfStep).is_err());
    // Both bootstraps approximate psi(-dt).
    let dense = DensePropagator::new(&dense_hamiltonian(&p).unwrap(), None).unwrap();
    let back = dense.propagate(&DenseState::new(psi.to_dense()).unwrap(), -0.5).unwrap();
    for (method, tol) in [(Bootstrap::Taylor, 1e-9), (Bootstrap::EulerHalfStep, 1e-2)] {
        let prev = bootstrap_previous(&psi, &h, 0.5, 4, &policy, method).unwrap();
        assert!(dist(&prev.to_dense(), &back.amplitudes) < tol, "{method:?}");
    }
}

#[test]
fn convergence_orders_at_full_rank() {
    let p = tiny();
    for (scheme, k, expected, tol) in [
        (Scheme::Lt, 20, 1.0, 0.2),
        (Scheme::Sm, 20, 2.0, 0.2),
        (Scheme::Yn, 10, 4.0, 0.3),
        (Scheme::Kl, 2, 8.0, 1.0),
        (Scheme::S2, 200, 2.0, 0.2),
        (Scheme::S4, 50, 4.0, 0.3),
        (Scheme::S6, 20, 6.0, 0.5),
        (Scheme::S8, 10, 8.0, 1.0),
        (Scheme::K4, 20, 3.0, 0.3),
        (Scheme::K6, 10, 5.0, 0.5),
    ] {
        let order = observed_order(&p, scheme, 50.0, k);
        assert!((order - expected).abs() < tol, "{scheme}: observed order {order:.2}");
    }
}

#[test]
fn exact_schemes_at_full_rank() {
    // A 4-site exciton chain keeps one excitation in a 4-dimensional sector,
    // so 8 Krylov vectors span it exactly; TDVP at full rank is exact too.
    let p = ChainParameters::new(SystemKind::Exciton, 4);
    for scheme in [Scheme::K8, Scheme::Tdvp] {
        let err = final_error(&p, scheme, 100.0, 2, 4);
        assert!(err < 1e-10, "{scheme}: {err:e}");
    }
    let err = final_error(&tiny(), Scheme::Tdvp, 50.0, 5, 8);
    assert!(err < 1e-10, "tdvp coupled: {err:e}");
}

#[test]
fn krylov_step_is_exact_on_invariant_subspace() {
    let p = ChainParameters::new(SystemKind::Exciton, 3);
    let psi = initial(&p);
    let h = hamiltonian(&p).unwrap();
    let out = step_global_krylov(&psi, &h, 30.0, 4, &TruncationPolicy::exact()).unwrap();
    let dense = DensePropagator::new(&dense_hamiltonian(&p).unwrap(), None).unwrap();
    let exact = dense.propagate(&DenseState::new(psi.to_dense()).unwrap(), 30.0).unwrap();
    assert!(dist(&out.to_dense(), &exact.amplitudes) < 1e-12);
}

#[test]
fn splitting_is_unitary_and_conserves_excitons() {
    let p = ChainParameters { d_ph: 3, ..ChainParameters::new(SystemKind::Coupled, 4) };
    let h = hamiltonian(&p).unwrap();
    let slim = build_slim(&p).unwrap();
    let obs = ObservableSet::new(&p, h.clone()).unwrap();
    for scheme in [Scheme::Lt, Scheme::Sm, Scheme::Yn] {
        let mut prop = integrator(&PropagatorConfig::new(scheme, 5.0, 36), &slim, &h).unwrap();
        let mut psi = initial(&p);
        for _ in 0..5 {
            psi = prop.advance(&psi, 4).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-12, "{scheme}");
            assert!((obs.exciton_number(&psi).unwrap().unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn tdvp_conserves_norm_and_energy_at_low_rank() {
    let p = ChainParameters { d_ph: 3, ..ChainParameters::new(SystemKind::Coupled, 4) };
    let h = hamiltonian(&p).unwrap();
    let slim = build_slim(&p).unwrap();
    let obs = ObservableSet::new(&p, h.clone()).unwrap();
    let psi0 = initial(&p);
    let e0 = obs.measure(&psi0, 0, 0.0).unwrap().energy;
    let mut prop = integrator(&PropagatorConfig::new(Scheme::Tdvp, 10.0, 3), &slim, &h).unwrap();
    let mut psi = psi0;
    for k in 1..=5 {
        psi = prop.advance(&psi, 2).unwrap();
        assert!(psi.max_bond() <= 3);
        let s = obs.measure(&psi, k, 20.0 * k as f64).unwrap();
        assert!((s.norm - 1.0).abs() < 1e-11);
        assert!(((s.energy - e0) / e0).abs() < 1e-11);
    }
}

#[test]
fn rank_caps_are_respected() {
    let p = ChainParameters { d_ph: 3, ..ChainParameters::new(SystemKind::Coupled, 4) };
    let h = hamiltonian(&p).unwrap();
    let slim = build_slim(&p).unwrap();
    for scheme in [Scheme::S2, Scheme::Sm, Scheme::K4, Scheme::Tdvp] {
        let mut prop = integrator(&PropagatorConfig::new(scheme, 2.0, 3), &slim, &h).unwrap();
        let psi = prop.advance(&initial(&p), 10).unwrap();
        assert!(psi.max_bond() <= 3, "{scheme}: {:?}", psi.ranks());
    }
}

#[test]
fn differencing_blows_up_on_unstable_steps() {
    // dt ||H|| well above the stability limit of the leapfrog-type scheme.
    let p = ChainParameters::new(SystemKind::Exciton, 4);
    let h = hamiltonian(&p).unwrap();
    let slim = build_slim(&p).unwrap();
    let mut prop = integrator(&PropagatorConfig::new(Scheme::S2, 200.0, 4), &slim, &h).unwrap();
    let mut psi = initial(&p);
    let mut failed = false;
    for _ in 0..200 {
        match prop.advance(&psi, 10) {
            Ok(next) if next.norm().is_finite() && next.norm() < 1e6 => psi = next,
            Ok(_) | Err(Error::UnstableStep { .. }) | Err(Error::Linalg(_)) => {
                failed = true;
                break;
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    assert!(failed);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn splitting_preserves_norm(tau in -20.0f64..20.0, scheme in prop::sample::select(vec![Scheme::Lt, Scheme::Sm, Scheme::Yn, Scheme::Kl])) {
        prop_assume!(tau.abs() > 1e-3);
        let p = tiny();
        let h = hamiltonian(&p).unwrap();
        let slim = build_slim(&p).unwrap();
        let mut prop = integrator(&PropagatorConfig::new(scheme, tau.abs(), 16), &slim, &h).unwrap();
        let psi = prop.advance(&initial(&p), 3).unwrap();
        prop_assert!((psi.norm_by_contraction() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gate_products_compose(t1 in -10.0f64..10.0, t2 in -10.0f64..10.0) {
        let gens = build_pair_generators(&build_slim(&tiny()).unwrap()).unwrap();
        let a = two_site_gate(&gens[0], t1).unwrap().dot(&two_site_gate(&gens[0], t2).unwrap());
        let b = two_site_gate(&gens[0], t1 + t2).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| (x - y).norm() < 1e-12));
    }
}

