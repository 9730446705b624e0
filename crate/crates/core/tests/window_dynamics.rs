//! Window operations on physical states: perturbation, evolution, energy,
//! correlators.

use std::sync::OnceLock;

use ibc_core::groundstate::{itebd_ground_state, InitialState, ItebdSchedule};
use ibc_core::mpo::{heisenberg_s1_mpo, op_identity, op_mul, tfi_mpo, SpinOperators};
use ibc_core::observables::{sz_profile, unequal_time_correlator};
use ibc_core::window::*;
use ibc_core::{DenseTensor, InfiniteMps, C64};

fn ground() -> &'static InfiniteMps {
    static GS: OnceLock<InfiniteMps> = OnceLock::new();
    GS.get_or_init(|| {
        let h = heisenberg_s1_mpo().bond_hamiltonian().unwrap();
        itebd_ground_state(&h, &ItebdSchedule::standard(16, InitialState::Aklt)).unwrap().mps
    })
}

fn window(n: usize, chi_max: usize) -> WindowState {
    open_window(ground(), n, &heisenberg_s1_mpo()).unwrap().with_truncation(chi_max, 1e-12).unwrap()
}

fn fidelity(a: &WindowState, b: &WindowState) -> f64 {
    let ov = mixed_expectations(a, b, &op_identity(3)).unwrap()[0];
    ov.norm() / (a.norm_sqr() * b.norm_sqr()).sqrt()
}

#[test]
fn identity_operator_changes_nothing() {
    let mut w = window(10, 32);
    let before = sz_profile(&w).unwrap();
    let norm = apply_local_operator(&mut w, 5, &op_identity(3)).unwrap();
    assert!((norm - 1.0).abs() < 1e-12);
    assert!((fidelity(&w, &window(10, 32)) - 1.0).abs() < 1e-12);
    for (a, b) in before.iter().zip(sz_profile(&w).unwrap()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn raising_twice_then_lowering_twice_restores_product_state() {
    // fully polarized product state, χ = 1, is exact at any window size
    let mut g = DenseTensor::zeros(&["l", "p", "r"], &[1, 3, 1]);
    g.set(&[0, 2, 0], C64::new(1.0, 0.0));
    let psi = InfiniteMps::new(g, vec![1.0]).unwrap();
    let mut w = open_window(&psi, 6, &heisenberg_s1_mpo()).unwrap();
    let before = sz_profile(&w).unwrap();
    let ops = SpinOperators::spin_one();
    for op in [&ops.sp, &ops.sp] {
        apply_local_operator(&mut w, 2, op).unwrap();
    }
    assert!((sz_profile(&w).unwrap()[2] - 1.0).abs() < 1e-12);
    for op in [&ops.sm, &ops.sm] {
        apply_local_operator(&mut w, 2, op).unwrap();
    }
    for (a, b) in before.iter().zip(sz_profile(&w).unwrap()) {
        assert!((a - b).abs() < 1e-12);
    }
    // one more lowering annihilates m = −1
    assert!(apply_local_operator(&mut w, 2, &ops.sm).is_err());
}

#[test]
fn zero_time_step_is_identity() {
    let mut w = window(8, 32);
    apply_local_operator(&mut w, 4, &SpinOperators::spin_one().sp).unwrap();
    let start = w.clone();
    let plan = TrotterPlan::new(4, 0.0).unwrap();
    for _ in 0..3 {
        tebd_step(&mut w, &plan).unwrap();
    }
    assert!((fidelity(&w, &start) - 1.0).abs() < 1e-12);
}

#[test]
fn unperturbed_window_stays_unmagnetized() {
    let mut w = window(8, 32);
    for dt in [0.05, 0.2] {
        let plan = TrotterPlan::new(2, dt).unwrap();
        for _ in 0..5 {
            tebd_step(&mut w, &plan).unwrap();
            assert!(sz_profile(&w).unwrap().iter().all(|s| s.abs() < 1e-6));
        }
    }
}

#[test]
fn flip_is_peaked_and_carries_unit_magnetization() {
    let mut w = window(40, 48);
    let e_before = window_energy(&w).unwrap();
    apply_local_operator(&mut w, 20, &SpinOperators::spin_one().sp).unwrap();
    let p = sz_profile(&w).unwrap();
    let peak = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(peak, 20);
    // decays away from the centre
    assert!(p[20] > p[18].abs() && p[18].abs() > p[14].abs() && p[14].abs() > p[8].abs());
    let total: f64 = p.iter().sum();
    assert!((total - 1.0).abs() < 0.02, "Σ Sz = {total}");
    // a flip mixes in excited states
    assert!(window_energy(&w).unwrap() > e_before + 0.1);
}

#[test]
fn correlator_at_zero_time_matches_local_operator_identity() {
    let ground_w = window(20, 32);
    let ops = SpinOperators::spin_one();
    // ⟨S⁻S⁺⟩ = ⟨2 − Sz² − Sz⟩ from the single-site expectations
    let sz2 = op_mul(&ops.sz, &ops.sz).unwrap();
    let direct = 2.0 - site_expectations(&ground_w, &sz2).unwrap()[10].re - site_expectations(&ground_w, &ops.sz).unwrap()[10].re;
    let mut w = ground_w.clone();
    apply_local_operator(&mut w, 10, &ops.sp).unwrap();
    let e_ref = window_energy(&ground_w).unwrap();
    let a = unequal_time_correlator(&ground_w, &w, e_ref).unwrap();
    assert!((a[10] - C64::new(direct, 0.0)).norm() < 1e-10);
    assert!((direct - 4.0 / 3.0).abs() < 1e-8);
}

#[test]
fn correlator_modulus_is_reflection_symmetric() {
    let ground_w = window(20, 48);
    let e_ref = window_energy(&ground_w).unwrap();
    let mut w = ground_w.clone();
    apply_local_operator(&mut w, 10, &SpinOperators::spin_one().sp).unwrap();
    let plan = TrotterPlan::new(4, 0.05).unwrap();
    for step in 1..=30 {
        tebd_step(&mut w, &plan).unwrap();
        if step % 10 == 0 {
            let a = unequal_time_correlator(&ground_w, &w, e_ref).unwrap();
            for x in 1..=8 {
                let d = (a[10 - x].norm() - a[10 + x].norm()).abs();
                assert!(d < 2e-3, "t={} x={x}: asymmetry {d:.2e}", w.time());
            }
        }
    }
}

#[test]
fn energy_is_conserved_during_evolution() {
    // Paramagnetic transverse-field Ising chain: the flip spreads with little
    // entanglement, so truncation stays negligible and what remains is the
    // product-formula error of unitary evolution.
    let mpo = tfi_mpo(1.0, 1.0).unwrap();
    let h = mpo.bond_hamiltonian().unwrap();
    let mut schedule = ItebdSchedule::standard(6, InitialState::Random { seed: 3 });
    schedule.steps = vec![(0.1, 3000), (0.03, 3000), (0.01, 3000)];
    let psi = itebd_ground_state(&h, &schedule).unwrap().mps;
    let mut w = open_window(&psi, 40, &mpo).unwrap().with_truncation(32, 1e-12).unwrap();
    apply_local_operator(&mut w, 20, &SpinOperators::spin_half().sz).unwrap();
    let e0 = window_energy(&w).unwrap();
    let plan = TrotterPlan::new(4, 0.05).unwrap();
    let mut worst = 0.0f64;
    for step in 1..=200 {
        tebd_step(&mut w, &plan).unwrap();
        if step % 10 == 0 {
            worst = worst.max((window_energy(&w).unwrap() - e0).abs());
        }
    }
    assert!((w.time() - 10.0).abs() < 1e-9);
    assert!(worst < 1e-4, "energy drift {worst:.2e}");
}

#[test]
fn trotter_error_scales_with_order() {
    // AKLT exterior (χ = 2) and a 6-site window: the full window space is
    // kept, so the only error left is the product formula.
    let (g, lam) = ibc_core::imps::aklt_tensors();
    let psi = ibc_core::imps::canonicalize(&g, &lam).unwrap();
    let base = open_window(&psi, 6, &heisenberg_s1_mpo()).unwrap().with_truncation(1000, 0.0).unwrap();
    let ops = SpinOperators::spin_one();
    let run = |order: u8, dt: f64| {
        let mut w = base.clone();
        apply_local_operator(&mut w, 3, &ops.sp).unwrap();
        let plan = TrotterPlan::new(order, dt).unwrap();
        let steps = (1.0 / dt).round() as usize;
        for _ in 0..steps {
            tebd_step(&mut w, &plan).unwrap();
        }
        sz_profile(&w).unwrap()[3]
    };
    let reference = run(4, 0.0125);
    let err = |order, dt| (run(order, dt) - reference).abs();
    let r1 = err(1, 0.1) / err(1, 0.05);
    assert!(r1 > 2.0 / 3.0 && r1 < 6.0, "order-1 ratio {r1}");
    let r4 = err(4, 0.2) / err(4, 0.1);
    assert!(r4 > 16.0 / 3.0 && r4 < 48.0, "order-4 ratio {r4}");
}
