mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use qthermo::error::QError;
use qthermo::linalg::{
    self, cr, derivative4, eigh, expm_ih, func_hermitian, ln_hermitian_floored, max_abs, simpson,
    trace_distance, trace_of_product, CMat, CVec,
};
use qthermo::operator::{
    anticommutator, commutator, expectation, matrix_exponential_unitary, partial_trace,
    partial_trace_mat, tensor_product, DensityOperator, HilbertLayout, Operator,
};
use qthermo::states;

#[test]
fn pauli_algebra() {
    let (sx, sy, sz) = (states::pauli_x(), states::pauli_y(), states::pauli_z());
    let i2 = states::identity(2);
    assert_mat_close(&(&sx * &sx), &i2, 1e-15, "sx^2");
    assert_mat_close(&(&sy * &sy), &i2, 1e-15, "sy^2");
    assert_mat_close(&(&sz * &sz), &i2, 1e-15, "sz^2");
    let isz = &sz * Complex64::new(0.0, 1.0);
    assert_mat_close(&(&sx * &sy), &isz, 1e-15, "sx sy = i sz");
    let comm = &sx * &sy - &sy * &sx;
    assert_mat_close(&comm, &(&isz * cr(2.0)), 1e-15, "[sx, sy] = 2i sz");
    // ladder operators connect the basis states in the documented order
    let sp = states::sigma_plus();
    let e = states::excited();
    let g = states::ground();
    assert!(max_abs(&CMat::from_column_slice(2, 1, (&sp * &g).as_slice())) > 0.9);
    assert_close((&sp * &e).norm(), 0.0, 1e-15, "sigma_plus annihilates excited");
    assert_close(
        (sz.clone() * &e)[0].re,
        1.0,
        1e-15,
        "excited state has sz = +1",
    );
}

#[test]
fn ladder_operator_matrix_elements() {
    let a = states::annihilation(4);
    assert_eq!(a.nrows(), 5);
    for n in 1..=4usize {
        assert_close(a[(n - 1, n)].re, (n as f64).sqrt(), 1e-15, "a matrix element");
    }
    let n_op = states::number_operator(4);
    assert_mat_close(&(linalg::dag(&a) * &a), &n_op, 1e-12, "a† a = n");
}

#[test]
fn exponential_matches_taylor_oracle() {
    let mut r = rng(11);
    let h = rand_hermitian(&mut r, 6);
    let layout = HilbertLayout::single(6, "S").unwrap();
    let op = Operator::hermitian(layout, h.clone()).unwrap();
    for &t in &[0.7, -1.3, 0.0] {
        let u = matrix_exponential_unitary(&op, t).unwrap();
        let oracle = expm_ih_oracle(&h, t);
        assert_mat_close(&u.entries, &oracle, 1e-9, "exp(-iHt) vs Taylor series");
    }
}

#[test]
fn exponential_composes_additively() {
    let mut r = rng(12);
    let h = rand_hermitian(&mut r, 5);
    let layout = HilbertLayout::single(5, "S").unwrap();
    let op = Operator::hermitian(layout, h).unwrap();
    let (t1, t2) = (0.43, 1.77);
    let u1 = matrix_exponential_unitary(&op, t1).unwrap();
    let u2 = matrix_exponential_unitary(&op, t2).unwrap();
    let u12 = matrix_exponential_unitary(&op, t1 + t2).unwrap();
    assert_mat_close(&(&u1.entries * &u2.entries), &u12.entries, 1e-9, "U(t1)U(t2)=U(t1+t2)");
}

#[test]
fn exponential_is_unitary() {
    let mut r = rng(13);
    let h = rand_hermitian(&mut r, 7);
    let layout = HilbertLayout::single(7, "S").unwrap();
    let op = Operator::hermitian(layout, h).unwrap();
    let u = matrix_exponential_unitary(&op, 2.9).unwrap();
    let eye = states::identity(7);
    assert_mat_close(&(linalg::dag(&u.entries) * &u.entries), &eye, 1e-10, "U†U = I");
}

#[test]
fn trace_is_cyclic() {
    let mut r = rng(14);
    let a = rand_matrix(&mut r, 5);
    let b = rand_matrix(&mut r, 5);
    let c = rand_matrix(&mut r, 5);
    let abc = linalg::trace(&(&a * &b * &c));
    let bca = linalg::trace(&(&b * &c * &a));
    let cab = linalg::trace(&(&c * &a * &b));
    assert!((abc - bca).norm() <= 1e-10, "tr(ABC) vs tr(BCA)");
    assert!((abc - cab).norm() <= 1e-10, "tr(ABC) vs tr(CAB)");
    // and the fused product-trace path agrees with the explicit one
    let direct = trace_of_product(&a, &b);
    let explicit = linalg::trace(&(&a * &b));
    assert!((direct - explicit).norm() <= 1e-12);
}

#[test]
fn tensor_product_matches_index_oracle() {
    let mut r = rng(15);
    let ma = rand_matrix(&mut r, 2);
    let mb = rand_matrix(&mut r, 3);
    let a = Operator::new(HilbertLayout::single(2, "S").unwrap(), ma.clone()).unwrap();
    let b = Operator::new(HilbertLayout::single(3, "C").unwrap(), mb.clone()).unwrap();
    let ab = tensor_product(&a, &b).unwrap();
    assert_mat_close(&ab.entries, &kron_oracle(&ma, &mb), 1e-14, "kron oracle");
    assert_eq!(ab.layout.labels(), vec!["S", "C"]);
    assert_eq!(ab.layout.dims(), &[2, 3]);
}

#[test]
fn partial_trace_matches_index_oracle() {
    let mut r = rng(16);
    let layout = HilbertLayout::new(vec![2, 3, 2], vec!["S", "C", "E"]).unwrap();
    let rho = rand_density(&mut r, 12);
    for keep in [vec![0usize], vec![1], vec![2], vec![0, 1], vec![1, 2], vec![0, 2]] {
        let got = partial_trace_mat(&rho, &layout, &keep).unwrap();
        let want = ptrace_oracle(&rho, &[2, 3, 2], &keep);
        assert_mat_close(&got, &want, 1e-13, "partial trace vs index sum");
    }
    // keeping everything is the identity map
    let all = partial_trace_mat(&rho, &layout, &[0, 1, 2]).unwrap();
    assert_mat_close(&all, &rho, 0.0, "keep-all partial trace");
}

#[test]
fn partial_trace_by_label_and_trace_preservation() {
    let mut r = rng(17);
    let layout = HilbertLayout::new(vec![2, 4], vec!["S", "E"]).unwrap();
    let rho_m = rand_density(&mut r, 8);
    let rho = DensityOperator::new(Operator::hermitian(layout, rho_m.clone()).unwrap()).unwrap();
    let rho_s = partial_trace(&rho, &["S"]).unwrap();
    assert_eq!(rho_s.dim(), 2);
    assert_close(
        linalg::trace(rho_s.entries()).re,
        1.0,
        1e-12,
        "partial trace preserves trace",
    );
    let want = ptrace_oracle(&rho_m, &[2, 4], &[0]);
    assert_mat_close(rho_s.entries(), &want, 1e-13, "labelled partial trace");
}

#[test]
fn partial_trace_recovers_tensor_factor() {
    let mut r = rng(18);
    let rho_a = rand_density(&mut r, 3);
    let rho_b = rand_density(&mut r, 2);
    let layout = HilbertLayout::new(vec![3, 2], vec!["S", "C"]).unwrap();
    let joint = kron_oracle(&rho_a, &rho_b);
    let a_back = partial_trace_mat(&joint, &layout, &[0]).unwrap();
    let b_back = partial_trace_mat(&joint, &layout, &[1]).unwrap();
    assert_mat_close(&a_back, &rho_a, 1e-13, "left factor recovery");
    assert_mat_close(&b_back, &rho_b, 1e-13, "right factor recovery");
}

#[test]
fn embed_places_factor_with_identities() {
    let mut r = rng(19);
    let hc = rand_hermitian(&mut r, 3);
    let op = Operator::hermitian(HilbertLayout::single(3, "C").unwrap(), hc.clone()).unwrap();
    let target = HilbertLayout::new(vec![2, 3, 4], vec!["S", "C", "E"]).unwrap();
    let embedded = op.embed(&target).unwrap();
    let want = kron_oracle(&kron_oracle(&states::identity(2), &hc), &states::identity(4));
    assert_mat_close(&embedded.entries, &want, 1e-14, "embed = I (x) op (x) I");
    // embedding onto a layout without the label fails
    let bad = HilbertLayout::new(vec![2, 4], vec!["S", "E"]).unwrap();
    assert!(op.embed(&bad).is_err());
}

#[test]
fn hermitian_constructor_rejects_non_hermitian() {
    let layout = HilbertLayout::single(2, "S").unwrap();
    let mut m = states::pauli_x();
    m[(0, 1)] += cr(1e-3);
    match Operator::hermitian(layout, m) {
        Err(QError::NotHermitian { defect, tol }) => {
            assert!(defect > tol, "reported defect should exceed tolerance");
        }
        other => panic!("expected NotHermitian, got {other:?}"),
    }
}

#[test]
fn density_operator_validation() {
    let layout = HilbertLayout::single(2, "S").unwrap();
    // wrong trace
    let m = states::identity(2);
    let op = Operator::hermitian(layout.clone(), m).unwrap();
    assert!(DensityOperator::new(op).is_err(), "trace-2 matrix rejected");
    // negative eigenvalue
    let mut neg = CMat::zeros(2, 2);
    neg[(0, 0)] = cr(1.5);
    neg[(1, 1)] = cr(-0.5);
    let op = Operator::hermitian(layout.clone(), neg).unwrap();
    assert!(DensityOperator::new(op).is_err(), "negative population rejected");
    // valid pure state via the dedicated constructor
    let psi = CVec::from_column_slice(&[cr(1.0), cr(1.0)]) * cr(1.0 / 2.0f64.sqrt());
    let rho = DensityOperator::pure(layout, &psi).unwrap();
    assert_close(linalg::trace(rho.entries()).re, 1.0, 1e-14, "pure state trace");
    assert_close(rho.entries()[(0, 1)].re, 0.5, 1e-14, "pure state coherence");
}

#[test]
fn pure_constructor_requires_unit_norm() {
    let layout = HilbertLayout::single(3, "S").unwrap();
    let psi = CVec::from_column_slice(&[cr(2.0), cr(0.0), cr(0.0)]);
    assert!(
        DensityOperator::pure(layout.clone(), &psi).is_err(),
        "unnormalized vector rejected"
    );
    let rho = DensityOperator::pure(layout, &(psi * cr(0.5))).unwrap();
    assert_close(linalg::trace(rho.entries()).re, 1.0, 1e-14, "normalized");
    assert_close(rho.entries()[(0, 0)].re, 1.0, 1e-14, "population");
}

#[test]
fn expectation_values() {
    let layout = HilbertLayout::single(2, "S").unwrap();
    let sz = Operator::hermitian(layout.clone(), states::pauli_z()).unwrap();
    let up = DensityOperator::pure(layout.clone(), &states::excited()).unwrap();
    let dn = DensityOperator::pure(layout.clone(), &states::ground()).unwrap();
    assert_close(expectation(&sz, &up).unwrap().re, 1.0, 1e-14, "<e|sz|e>");
    assert_close(expectation(&sz, &dn).unwrap().re, -1.0, 1e-14, "<g|sz|g>");
    // expectation of an operator on a sub-factor embeds automatically or errors;
    // here dimensions match so it must agree with the direct trace
    let mut r = rng(20);
    let rho_m = rand_density(&mut r, 2);
    let rho = DensityOperator::new(Operator::hermitian(layout, rho_m.clone()).unwrap()).unwrap();
    let want = trace_of_product(&states::pauli_z(), &rho_m);
    let got = expectation(&sz, &rho).unwrap();
    assert!((got - want).norm() < 1e-13);
}

#[test]
fn layout_indexing_roundtrip() {
    let layout = HilbertLayout::new(vec![2, 3, 4], vec!["S", "C", "E"]).unwrap();
    assert_eq!(layout.total_dim(), 24);
    assert_eq!(layout.position("C").unwrap(), 1);
    assert!(layout.position("X").is_err());
    for idx in 0..24 {
        let multi = layout.unravel(idx);
        assert_eq!(layout.ravel(&multi), idx, "ravel/unravel roundtrip");
    }
    // the last factor varies fastest (row-major composite indexing)
    assert_eq!(layout.unravel(1), vec![0, 0, 1]);
    assert_eq!(layout.unravel(4), vec![0, 1, 0]);
    // duplicate labels rejected
    assert!(HilbertLayout::new(vec![2, 2], vec!["S", "S"]).is_err());
}

#[test]
fn commutator_helpers() {
    let layout = HilbertLayout::single(2, "S").unwrap();
    let sx = Operator::hermitian(layout.clone(), states::pauli_x()).unwrap();
    let sy = Operator::hermitian(layout, states::pauli_y()).unwrap();
    let c = commutator(&sx, &sy).unwrap();
    let want = states::pauli_z() * Complex64::new(0.0, 2.0);
    assert_mat_close(&c.entries, &want, 1e-14, "[sx, sy]");
    let a = anticommutator(&sx, &sx).unwrap();
    assert_mat_close(&a.entries, &(states::identity(2) * cr(2.0)), 1e-14, "{sx, sx}");
}

#[test]
fn eigh_sorted_and_reconstructs() {
    let mut r = rng(21);
    let h = rand_hermitian(&mut r, 6);
    let (vals, vecs) = eigh(&h);
    for w in vals.windows(2) {
        assert!(w[0] <= w[1] + 1e-12, "ascending eigenvalues");
    }
    let mut rebuilt = CMat::zeros(6, 6);
    for (k, &v) in vals.iter().enumerate() {
        let col = vecs.column(k).clone_owned();
        rebuilt += (&col * col.adjoint()) * cr(v);
    }
    assert_mat_close(&rebuilt, &h, 1e-10, "spectral reconstruction");
    // orthonormality
    assert_mat_close(
        &(linalg::dag(&vecs) * &vecs),
        &states::identity(6),
        1e-11,
        "eigenvector orthonormality",
    );
}

#[test]
fn hermitian_functions_and_logs() {
    let mut r = rng(22);
    let rho = rand_density(&mut r, 4);
    let exp_rho = func_hermitian(&rho, |x| cr(x.exp()));
    // exp then log is the identity on the support
    let (log_back, floored) = ln_hermitian_floored(&exp_rho, 1e-30);
    assert!(!floored, "strictly positive spectrum needs no floor");
    assert_mat_close(&log_back, &rho, 1e-9, "log(exp(rho)) = rho");
    // expm_ih agrees with the Taylor oracle
    let h = rand_hermitian(&mut r, 4);
    assert_mat_close(&expm_ih(&h, 1.4), &expm_ih_oracle(&h, 1.4), 1e-10, "expm_ih");
}

#[test]
fn trace_distance_extremes() {
    let a = dyad(&states::excited());
    let b = dyad(&states::ground());
    assert_close(trace_distance(&a, &b), 1.0, 1e-12, "orthogonal pure states");
    assert_close(trace_distance(&a, &a), 0.0, 1e-12, "identical states");
}

#[test]
fn quadrature_and_differentiation_helpers() {
    let n = 101;
    let h = 1.0 / (n as f64 - 1.0);
    let xs: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
    let squares: Vec<f64> = xs.iter().map(|x| x * x).collect();
    assert_close(simpson(&squares, h), 1.0 / 3.0, 1e-12, "Simpson on x^2");
    let cubes: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
    let d = derivative4(&cubes, h);
    for (k, x) in xs.iter().enumerate() {
        assert_close(d[k], 3.0 * x * x, 1e-9, "five-point derivative of x^3");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prop_partial_trace_preserves_trace_and_hermiticity(seed in 0u64..1 << 16) {
        let mut r = rng(seed);
        let layout = HilbertLayout::new(vec![2, 3], vec!["S", "E"]).unwrap();
        let rho = rand_density(&mut r, 6);
        let reduced = partial_trace_mat(&rho, &layout, &[1]).unwrap();
        prop_assert!((linalg::trace(&reduced).re - 1.0).abs() < 1e-12);
        prop_assert!(linalg::trace(&reduced).im.abs() < 1e-12);
        prop_assert!(linalg::herm_defect(&reduced) < 1e-12);
    }

    #[test]
    fn prop_unitary_conjugation_preserves_spectrum_trace(seed in 0u64..1 << 16) {
        let mut r = rng(seed);
        let h = rand_hermitian(&mut r, 4);
        let u = rand_unitary(&mut r, 4);
        let conj = &u * &h * linalg::dag(&u);
        prop_assert!((linalg::trace(&conj) - linalg::trace(&h)).norm() < 1e-10);
        let (va, _) = eigh(&h);
        let (vb, _) = eigh(&conj);
        for (a, b) in va.iter().zip(vb.iter()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn prop_adjoint_involution(seed in 0u64..1 << 16) {
        let mut r = rng(seed);
        let m = rand_matrix(&mut r, 5);
        let op = Operator::new(HilbertLayout::single(5, "S").unwrap(), m.clone()).unwrap();
        let back = op.adjoint().adjoint();
        prop_assert!(max_diff(&back.entries, &m) < 1e-15);
    }

    #[test]
    fn prop_tensor_product_trace_factorizes(seed in 0u64..1 << 16) {
        let mut r = rng(seed);
        let a = rand_matrix(&mut r, 2);
        let b = rand_matrix(&mut r, 3);
        let prod = kron_oracle(&a, &b);
        let lhs = linalg::trace(&prod);
        let rhs = linalg::trace(&a) * linalg::trace(&b);
        prop_assert!((lhs - rhs).norm() < 1e-10);
    }
}
