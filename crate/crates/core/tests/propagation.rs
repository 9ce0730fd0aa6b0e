mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use qthermo::error::QError;
use qthermo::generator::{
    build_markovian, instantaneous_attractor, Attractor, BathSpectrum, Channel, Drive, Generator,
    RateFn, StructureTag,
};
use qthermo::jc::JCModel;
use qthermo::linalg::{self, cr, expm_ih, trace_distance, trace_norm_hermitian, CMat};
use qthermo::model::{assemble_local, thermal_state, LocalModel};
use qthermo::operator::{DensityOperator, HilbertLayout, Operator};
use qthermo::policy::NumericPolicy;
use qthermo::propagate::{
    evolve_generator, evolve_generator_with, evolve_unitary, reduced_trajectory, Grid,
};
use qthermo::states;
use qthermo::thermo::entropy_suite;

fn density(layout: HilbertLayout, m: CMat) -> DensityOperator {
    DensityOperator::new(Operator::hermitian(layout, m).unwrap()).unwrap()
}

fn qubit_layout() -> HilbertLayout {
    HilbertLayout::single(2, "S").unwrap()
}

/// Three resonant qubits in a chain with exchange couplings; every
/// interaction conserves the bare energy exactly.
fn three_qubit_chain(g_sc: f64, g_se: f64) -> LocalModel {
    let h = states::pauli_z() * cr(0.5);
    let sp = states::sigma_plus();
    let sm = states::sigma_minus();
    LocalModel::new(
        h.clone(),
        h.clone(),
        h,
        vec![(&sp * cr(g_sc), sm.clone()), (&sm * cr(g_sc), sp.clone())],
        vec![(&sp * cr(g_se), sm.clone()), (&sm * cr(g_se), sp.clone())],
    )
    .unwrap()
}

#[test]
fn unitary_trajectory_starts_at_the_initial_state() {
    let mut r = rng(70);
    let h = Operator::hermitian(qubit_layout(), rand_hermitian(&mut r, 2)).unwrap();
    let rho0 = density(qubit_layout(), rand_density(&mut r, 2));
    let grid = Grid::uniform(0.0, 1.0, 11).unwrap();
    let traj = evolve_unitary(&h, &rho0, &grid).unwrap();
    assert_eq!(traj.provenance, "unitary-exact");
    assert!(max_diff(&traj.states[0], rho0.entries()) < 1e-14, "first node is rho0");
    assert_eq!(traj.times.len(), 11);
}

#[test]
fn diagonal_hamiltonian_keeps_diagonal_states_constant() {
    let mut h = CMat::zeros(3, 3);
    let mut rho = CMat::zeros(3, 3);
    for (k, (e, p)) in [(0.3, 0.5), (-0.2, 0.2), (0.1, 0.3)].iter().enumerate() {
        h[(k, k)] = cr(*e);
        rho[(k, k)] = cr(*p);
    }
    let layout = HilbertLayout::single(3, "S").unwrap();
    let h = Operator::hermitian(layout.clone(), h).unwrap();
    let rho0 = density(layout, rho);
    let grid = Grid::uniform(0.0, 7.0, 29).unwrap();
    let traj = evolve_unitary(&h, &rho0, &grid).unwrap();
    for state in &traj.states {
        assert!(max_diff(state, rho0.entries()) < 1e-14, "diagonal state is stationary");
    }
}

#[test]
fn composite_evolution_matches_liouville_ode() {
    let model = three_qubit_chain(0.23, 0.17);
    let h = assemble_local(&model).unwrap();
    let mut r = rng(71);
    let rho0 = density(h.layout.clone(), rand_density(&mut r, 8));
    let grid = Grid::from_times(vec![0.0, 0.5, 1.3, 2.0]).unwrap();
    let traj = evolve_unitary(&h, &rho0, &grid).unwrap();
    let hm = h.entries.clone();
    let f = |_t: f64, rho: &CMat| (&hm * rho - rho * &hm) * Complex64::new(0.0, -1.0);
    for (k, &t) in grid.times().iter().enumerate().skip(1) {
        let steps = (t * 1000.0).ceil() as usize;
        let oracle = rk4_mat(&f, rho0.entries(), 0.0, t, steps);
        assert!(
            max_diff(&traj.states[k], &oracle) < 1e-7,
            "spectral evolution vs direct integration at t = {t}"
        );
    }
}

#[test]
fn zero_generator_keeps_the_state_constant() {
    let gen = Generator {
        layout: qubit_layout(),
        hamiltonian: Drive::Static(CMat::zeros(2, 2)),
        lamb_shift: None,
        channels: vec![],
        cross: None,
        structure: StructureTag::Custom,
    };
    let mut r = rng(72);
    let rho0 = density(qubit_layout(), rand_density(&mut r, 2));
    let grid = Grid::uniform(0.0, 4.0, 41).unwrap();
    let traj = evolve_generator(&gen, &rho0, &grid).unwrap();
    assert_eq!(traj.provenance, "lindblad-rk4");
    for state in &traj.states {
        assert!(max_diff(state, rho0.entries()) < 1e-14, "constant trajectory");
    }
    assert!(traj.trace_drift < 1e-14);
}

#[test]
fn amplitude_damping_population_decays_exponentially() {
    let gamma = 0.35;
    let gen = Generator {
        layout: qubit_layout(),
        hamiltonian: Drive::Static(states::pauli_z() * cr(0.5)),
        lamb_shift: None,
        channels: vec![Channel::new_static(
            states::sigma_minus(),
            1.0,
            RateFn::Const(gamma),
            "down",
        )],
        cross: None,
        structure: StructureTag::Custom,
    };
    let rho0 = DensityOperator::pure(qubit_layout(), &states::excited()).unwrap();
    let grid = Grid::uniform(0.0, 5.0, 101).unwrap();
    let traj = evolve_generator(&gen, &rho0, &grid).unwrap();
    for (k, &t) in grid.times().iter().enumerate() {
        let p_e = traj.states[k][(0, 0)].re;
        assert!(
            (p_e - (-gamma * t).exp()).abs() < 1e-7,
            "exponential decay at t = {t}: {p_e} vs {}",
            (-gamma * t).exp()
        );
    }
}

#[test]
fn detailed_balance_evolution_converges_to_the_attractor() {
    let (gamma, beta) = (0.4, 1.2);
    let h = states::pauli_z() * cr(0.5);
    let bath = BathSpectrum::flat(beta, gamma).unwrap();
    let gen = build_markovian(&h, Some(&states::pauli_x()), &bath).unwrap();
    let target = match instantaneous_attractor(&gen, 0.0).unwrap() {
        Attractor::Unique { state } => state,
        other => panic!("expected unique attractor, got {other:?}"),
    };
    let mut r = rng(73);
    let rho0 = density(qubit_layout(), rand_density(&mut r, 2));
    let grid = Grid::uniform(0.0, 20.0 / gamma, 501).unwrap();
    let traj = evolve_generator(&gen, &rho0, &grid).unwrap();
    let final_state = traj.states.last().unwrap();
    assert!(
        trace_distance(final_state, &target) < 1e-6,
        "relaxed to the fixed point: {:.3e}",
        trace_distance(final_state, &target)
    );
}

#[test]
fn reduced_trajectory_keeping_all_labels_is_the_identity() {
    let model = three_qubit_chain(0.2, 0.1);
    let h = assemble_local(&model).unwrap();
    let mut r = rng(74);
    let rho0 = density(h.layout.clone(), rand_density(&mut r, 8));
    let grid = Grid::uniform(0.0, 1.5, 7).unwrap();
    let traj = evolve_unitary(&h, &rho0, &grid).unwrap();
    let same = reduced_trajectory(&traj, &["S", "C", "E"]).unwrap();
    assert_eq!(same.layout, traj.layout);
    for (a, b) in same.states.iter().zip(traj.states.iter()) {
        assert!(max_diff(a, b) < 1e-14);
    }
    assert!(matches!(
        reduced_trajectory(&traj, &["S", "X"]),
        Err(QError::UnknownLabel(_))
    ));
}

#[test]
fn uncoupled_product_state_reduces_to_local_unitary_evolution() {
    let mut r = rng(75);
    let h_s = rand_hermitian(&mut r, 2);
    let h_c = rand_hermitian(&mut r, 3);
    let rho_s = rand_density(&mut r, 2);
    let rho_c = rand_density(&mut r, 3);
    let layout = HilbertLayout::new(vec![2, 3], vec!["S".into(), "C".into()]).unwrap();
    let h_full = kron_oracle(&h_s, &states::identity(3))
        + kron_oracle(&states::identity(2), &h_c);
    let h_full = Operator::hermitian(layout.clone(), h_full).unwrap();
    let rho0 = density(layout, kron_oracle(&rho_s, &rho_c));
    let grid = Grid::uniform(0.0, 3.0, 31).unwrap();
    let traj = evolve_unitary(&h_full, &rho0, &grid).unwrap();
    let reduced = reduced_trajectory(&traj, &["S"]).unwrap();
    let local_h = Operator::hermitian(qubit_layout(), h_s).unwrap();
    let local0 = density(qubit_layout(), rho_s);
    let local = evolve_unitary(&local_h, &local0, &grid).unwrap();
    for (a, b) in reduced.states.iter().zip(local.states.iter()) {
        assert!(max_diff(a, b) < 1e-12, "spectator factor drops out");
    }
}

#[test]
fn jc_composite_reduction_matches_the_population_formula() {
    let model = JCModel::resonant(1.0, 0.25, 2.0).unwrap();
    let layout = model.layout();
    let dim_mode = model.dim_mode();
    let h_full = kron_oracle(&model.h_s(), &states::identity(dim_mode))
        + kron_oracle(&states::identity(2), &model.h_c())
        + model.h_sc();
    let h = Operator::hermitian(layout.clone(), h_full).unwrap();
    let psi0 = model
        .state_vector_at(0.0, &NumericPolicy::default())
        .unwrap();
    let rho0 = DensityOperator::pure(layout, &psi0).unwrap();
    let grid = Grid::uniform(0.0, 10.0, 201).unwrap();
    let traj = evolve_unitary(&h, &rho0, &grid).unwrap();
    let qubit = reduced_trajectory(&traj, &["S"]).unwrap();
    for (k, &t) in grid.times().iter().enumerate() {
        let p_e = qubit.states[k][(0, 0)].re;
        let formula = model.poisson_population(t).unwrap();
        assert!(
            (p_e - formula).abs() < 1e-6,
            "dense reduction vs population sum at t = {t}: {:.3e}",
            (p_e - formula).abs()
        );
    }
}

#[test]
fn unitary_evolution_conserves_the_entropy_suite() {
    let mut r = rng(76);
    let layout = HilbertLayout::single(4, "S").unwrap();
    let h_m = rand_hermitian(&mut r, 4);
    let h = Operator::hermitian(layout.clone(), h_m.clone()).unwrap();
    let rho0 = density(layout, rand_density(&mut r, 4));
    let grid = Grid::uniform(0.0, 3.0, 61).unwrap();
    let traj = evolve_unitary(&h, &rho0, &grid).unwrap();
    let base = entropy_suite(&traj.states[0], &h_m).unwrap();
    for state in &traj.states {
        let s = entropy_suite(state, &h_m).unwrap();
        assert!((s.s_vn - base.s_vn).abs() < 1e-9, "entropy drift");
        assert!((s.s_energy - base.s_energy).abs() < 1e-9, "level-population drift");
        assert!((s.coherence - base.coherence).abs() < 1e-9, "coherence drift");
    }
}

#[test]
fn reduced_map_commutes_with_free_device_evolution() {
    let m = fixture_sec_2x2x4();
    let h_full = assemble_local(&m).unwrap();
    let rho_e = thermal_state(&m.h_e, 0.7).unwrap();
    let dims = [2usize, 2, 4];
    let mut r = rng(77);
    for &t in &[0.6, 1.7] {
        let u = expm_ih(&h_full.entries, t);
        let u0 = expm_ih(&m.h_d_free(), t);
        let lambda = |x: &CMat| -> CMat {
            let big = kron_oracle(x, rho_e.entries());
            ptrace_oracle(&(&u * big * u.adjoint()), &dims, &[0, 1])
        };
        for _ in 0..3 {
            let rho_d = rand_density(&mut r, 4);
            let map_then_free = &u0 * lambda(&rho_d) * u0.adjoint();
            let free_then_map = lambda(&(&u0 * &rho_d * u0.adjoint()));
            let diff = &map_then_free - &free_then_map;
            assert!(
                trace_norm_hermitian(&diff) < 1e-8,
                "reduced map commutes with the free device flow at t = {t}"
            );
        }
    }
}

#[test]
fn static_composition_over_subintervals_matches_direct_evolution() {
    let mut r = rng(78);
    let layout = HilbertLayout::single(3, "S").unwrap();
    let h = Operator::hermitian(layout.clone(), rand_hermitian(&mut r, 3)).unwrap();
    let rho0 = density(layout.clone(), rand_density(&mut r, 3));
    let first = evolve_unitary(&h, &rho0, &Grid::uniform(0.0, 0.7, 15).unwrap()).unwrap();
    let mid = density(layout, first.states.last().unwrap().clone());
    let second = evolve_unitary(&h, &mid, &Grid::uniform(0.7, 1.9, 25).unwrap()).unwrap();
    let direct = evolve_unitary(&h, &rho0, &Grid::uniform(0.0, 1.9, 39).unwrap()).unwrap();
    assert!(
        max_diff(second.states.last().unwrap(), direct.states.last().unwrap()) < 1e-9,
        "two legs compose to the direct evolution"
    );
}

#[test]
fn oversized_dense_hamiltonian_is_rejected() {
    let n = 2100;
    let layout = HilbertLayout::single(n, "S").unwrap();
    let h = Operator::hermitian(layout, CMat::zeros(n, n)).unwrap();
    let mut r = rng(79);
    let rho0 = density(qubit_layout(), rand_density(&mut r, 2));
    let grid = Grid::uniform(0.0, 1.0, 3).unwrap();
    match evolve_unitary(&h, &rho0, &grid) {
        Err(QError::DimensionCap { dim, cap }) => {
            assert_eq!(dim, n);
            assert!(cap < n);
        }
        other => panic!("expected dimension-cap rejection, got {other:?}"),
    }
}

#[test]
fn positivity_loss_aborts_with_a_diagnosis() {
    // a rate that starts negative is not completely positive from t = 0;
    // the integrator must refuse to continue past the documented threshold
    let gen = Generator {
        layout: qubit_layout(),
        hamiltonian: Drive::Static(states::pauli_z() * cr(0.5)),
        lamb_shift: None,
        channels: vec![Channel::new_static(
            states::sigma_minus(),
            1.0,
            RateFn::Const(-0.3),
            "bad",
        )],
        cross: None,
        structure: StructureTag::Custom,
    };
    let mut plus = CMat::zeros(2, 2);
    for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        plus[(i, j)] = cr(0.5);
    }
    let rho0 = density(qubit_layout(), plus);
    let grid = Grid::uniform(0.0, 4.0, 81).unwrap();
    match evolve_generator(&gen, &rho0, &grid) {
        Err(QError::PositivityLoss { min_eig, .. }) => {
            assert!(min_eig < -1e-6, "reported eigenvalue is beyond the abort threshold");
        }
        other => panic!("expected positivity abort, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn prop_reduced_states_stay_normalized(seed in 0u64..1 << 16) {
        let mut r = rng(seed);
        let layout = HilbertLayout::new(vec![2, 3], vec!["S".into(), "C".into()]).unwrap();
        let h = Operator::hermitian(layout.clone(), rand_hermitian(&mut r, 6)).unwrap();
        let rho0 = density(layout, rand_density(&mut r, 6));
        let grid = Grid::uniform(0.0, 2.0, 9).unwrap();
        let traj = evolve_unitary(&h, &rho0, &grid).unwrap();
        let red = reduced_trajectory(&traj, &["C"]).unwrap();
        for state in &red.states {
            prop_assert!((linalg::trace(state).re - 1.0).abs() < 1e-10);
            prop_assert!(linalg::herm_defect(state) < 1e-10);
            prop_assert!(linalg::min_eigenvalue(state) > -1e-10);
        }
    }

    #[test]
    fn prop_static_generator_composition(seed in 0u64..1 << 16, split in 0.2f64..0.8) {
        let mut r = rng(seed);
        let h = rand_hermitian(&mut r, 2);
        let bath = BathSpectrum::flat(1.0, 0.3).unwrap();
        if let Ok(gen) = build_markovian(&h, Some(&rand_hermitian(&mut r, 2)), &bath) {
            let rho0 = density(qubit_layout(), rand_density(&mut r, 2));
            let tight = NumericPolicy { integrator_tol: 1e-11, ..NumericPolicy::default() };
            let grid_a = Grid::uniform(0.0, split, 9).unwrap();
            let first = evolve_generator_with(&gen, &rho0, &grid_a, &tight).unwrap();
            let mid = density(qubit_layout(), first.states.last().unwrap().clone());
            let grid_b = Grid::uniform(split, 1.0, 9).unwrap();
            let second = evolve_generator_with(&gen, &mid, &grid_b, &tight).unwrap();
            let direct = evolve_generator_with(
                &gen,
                &rho0,
                &Grid::uniform(0.0, 1.0, 17).unwrap(),
                &tight,
            )
            .unwrap();
            prop_assert!(
                max_diff(second.states.last().unwrap(), direct.states.last().unwrap()) < 1e-9
            );
        }
    }
}
