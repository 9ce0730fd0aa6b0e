//! Shared helpers for the integration tests: seeded randomness and slow,
//! obviously-correct reference implementations (index sums, Taylor series,
//! fixed-step RK4) that the library results are checked against.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use qthermo::linalg::{cr, max_abs, CMat, CVec, ONE, ZERO};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_complex(r: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
}

pub fn rand_matrix(r: &mut ChaCha8Rng, n: usize) -> CMat {
    CMat::from_fn(n, n, |_, _| rand_complex(r))
}

pub fn rand_hermitian(r: &mut ChaCha8Rng, n: usize) -> CMat {
    let a = rand_matrix(r, n);
    (&a + a.adjoint()) * cr(0.5)
}

/// Random unitary as exp(-iH) of a random Hermitian H.
pub fn rand_unitary(r: &mut ChaCha8Rng, n: usize) -> CMat {
    let h = rand_hermitian(r, n);
    expm_taylor(&(&h * Complex64::new(0.0, -1.0)))
}

/// Random full-rank density matrix A A^dag / tr(A A^dag).
pub fn rand_density(r: &mut ChaCha8Rng, n: usize) -> CMat {
    let a = rand_matrix(r, n);
    let p = &a * a.adjoint();
    let t = p.trace();
    p / t
}

pub fn rand_pure(r: &mut ChaCha8Rng, n: usize) -> CVec {
    let mut v = CVec::from_fn(n, |_, _| rand_complex(r));
    let nrm = v.norm();
    v /= cr(nrm);
    v
}

pub fn dyad(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// Kronecker product by explicit index sum, independent of nalgebra's kron.
pub fn kron_oracle(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    CMat::from_fn(ra * rb, ca * cb, |i, j| {
        a[(i / rb, j / cb)] * b[(i % rb, j % cb)]
    })
}

/// Partial trace by explicit index sums over an arbitrary factorisation.
/// `dims` are the tensor factor dimensions in order, `keep` the positions
/// retained (output index order follows `keep`).
pub fn ptrace_oracle(m: &CMat, dims: &[usize], keep: &[usize]) -> CMat {
    let total: usize = dims.iter().product();
    assert_eq!(m.nrows(), total);
    let kept_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let out_dim: usize = kept_dims.iter().product::<usize>().max(1);
    let traced: Vec<usize> = (0..dims.len()).filter(|p| !keep.contains(p)).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let traced_total: usize = traced_dims.iter().product::<usize>().max(1);

    let unravel = |mut flat: usize, ds: &[usize]| -> Vec<usize> {
        let mut idx = vec![0; ds.len()];
        for p in (0..ds.len()).rev() {
            idx[p] = flat % ds[p];
            flat /= ds[p];
        }
        idx
    };
    let ravel_full = |kept_idx: &[usize], traced_idx: &[usize]| -> usize {
        let mut full = vec![0; dims.len()];
        for (slot, &pos) in keep.iter().enumerate() {
            full[pos] = kept_idx[slot];
        }
        for (slot, &pos) in traced.iter().enumerate() {
            full[pos] = traced_idx[slot];
        }
        let mut flat = 0;
        for p in 0..dims.len() {
            flat = flat * dims[p] + full[p];
        }
        flat
    };

    CMat::from_fn(out_dim, out_dim, |i, j| {
        let ki = unravel(i, &kept_dims);
        let kj = unravel(j, &kept_dims);
        let mut acc = ZERO;
        for t in 0..traced_total {
            let ti = unravel(t, &traced_dims);
            acc += m[(ravel_full(&ki, &ti), ravel_full(&kj, &ti))];
        }
        acc
    })
}

/// Matrix exponential by scaling-and-squaring Taylor series. Slow but has no
/// shared code with the eigendecomposition-based path under test.
pub fn expm_taylor(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = max_abs(a) * n as f64;
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a * cr(1.0 / 2f64.powi(s as i32));
    let mut term = CMat::identity(n, n);
    let mut sum = CMat::identity(n, n);
    for k in 1..200 {
        term = (&term * &scaled) * cr(1.0 / k as f64);
        sum += &term;
        if max_abs(&term) < 1e-22 {
            break;
        }
    }
    let mut out = sum;
    for _ in 0..s {
        out = &out * &out;
    }
    out
}

/// e^{-iHt} via the Taylor oracle.
pub fn expm_ih_oracle(h: &CMat, t: f64) -> CMat {
    expm_taylor(&(h * Complex64::new(0.0, -t)))
}

/// Fixed-step classical RK4 on a matrix-valued ODE dY/dt = f(t, Y).
pub fn rk4_mat<F>(f: F, y0: &CMat, t0: f64, t1: f64, steps: usize) -> CMat
where
    F: Fn(f64, &CMat) -> CMat,
{
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.clone();
    let mut t = t0;
    for _ in 0..steps {
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &(&y + &k1 * cr(0.5 * h)));
        let k3 = f(t + 0.5 * h, &(&y + &k2 * cr(0.5 * h)));
        let k4 = f(t + h, &(&y + &k3 * cr(h)));
        y += (k1 + k2 * cr(2.0) + k3 * cr(2.0) + k4) * cr(h / 6.0);
        t += h;
    }
    y
}

/// Lindblad right-hand side assembled directly from a Hamiltonian and a list
/// of (rate, jump) pairs; used as the independent generator reference.
pub fn lindblad_rhs(h: &CMat, jumps: &[(f64, CMat)], rho: &CMat) -> CMat {
    let i = Complex64::new(0.0, 1.0);
    let mut out = (h * rho - rho * h) * (-i);
    for (gamma, l) in jumps {
        let ld = l.adjoint();
        let ldl = &ld * l;
        out += (l * rho * &ld - (&ldl * rho + rho * &ldl) * cr(0.5)) * cr(*gamma);
    }
    out
}

pub fn max_diff(a: &CMat, b: &CMat) -> f64 {
    max_abs(&(a - b))
}

pub fn assert_mat_close(a: &CMat, b: &CMat, tol: f64, what: &str) {
    let d = max_diff(a, b);
    assert!(d <= tol, "{what}: max entry difference {d:.3e} > {tol:.1e}");
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    let d = (a - b).abs();
    assert!(d <= tol, "{what}: |{a:.12e} - {b:.12e}| = {d:.3e} > {tol:.1e}");
}

/// Hermitian matrix from real diagonal plus symmetric off-diagonal parts,
/// convenient for proptest-generated cases.
pub fn herm_from_parts(diag: &[f64], re: &[f64], im: &[f64]) -> CMat {
    let n = diag.len();
    let mut m = CMat::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        m[(i, i)] = cr(diag[i]);
        for j in (i + 1)..n {
            let z = Complex64::new(re[k], im[k]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 1;
        }
    }
    m
}

/// Real matrix view helper for diagnostics.
pub fn re_parts(m: &CMat) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re)
}

pub const ONE_C: Complex64 = ONE;

/// Resonant qubit pair (S, C) with an excitation-exchange coupling and a
/// four-level environment whose two transitions are exactly energy-matched
/// to the system gap. Every energy-conservation commutator vanishes
/// identically, so composite evolution is an exact thermal operation.
pub fn fixture_sec_2x2x4() -> qthermo::model::LocalModel {
    use qthermo::states;
    let h_s = states::pauli_z() * cr(0.5);
    let h_c = states::pauli_z() * cr(0.5);
    let mut h_e = CMat::zeros(4, 4);
    h_e[(1, 1)] = cr(1.0);
    h_e[(2, 2)] = cr(1.7);
    h_e[(3, 3)] = cr(2.7);
    let sp = states::sigma_plus();
    let sm = states::sigma_minus();
    let couplings_sc = vec![(&sp * cr(0.3), sm.clone()), (&sm * cr(0.3), sp.clone())];
    let mut b = CMat::zeros(4, 4);
    b[(0, 1)] = cr(1.0);
    b[(2, 3)] = cr(0.7);
    let couplings_se = vec![(&sp * cr(0.4), b.clone()), (&sm * cr(0.4), b.adjoint())];
    qthermo::model::LocalModel::new(h_s, h_c, h_e, couplings_sc, couplings_se).unwrap()
}

/// Qubit under a circularly polarized classical drive, realized through a
/// three-level control whose reduced field is lambda (e^{-i nu t} - 1); the
/// constant part of the drive is folded into the static Hamiltonian so the
/// total is exactly (omega/2) sz + lambda (e^{-i nu t} s+ + h.c.) and equals
/// the static part at t = 0.
pub fn circular_drive_sc(omega: f64, nu: f64, lambda: f64) -> qthermo::semiclassical::ScHamiltonian {
    use qthermo::states;
    let h_s = states::pauli_z() * cr(0.5 * omega) + states::pauli_x() * cr(lambda);
    let mut h_c = CMat::zeros(3, 3);
    h_c[(1, 1)] = cr(nu);
    let psi = CVec::from_element(3, cr(1.0 / 3.0f64.sqrt()));
    let rho_c = &psi * psi.adjoint();
    let mut c1 = CMat::zeros(3, 3);
    c1[(0, 1)] = cr(3.0 * lambda);
    c1[(0, 2)] = cr(-3.0 * lambda);
    let couplings = vec![
        (states::sigma_plus(), c1.clone()),
        (states::sigma_minus(), c1.adjoint()),
    ];
    qthermo::semiclassical::build_sc_hamiltonian(&h_s, &couplings, &h_c, &rho_c).unwrap()
}

/// Exact propagator for the circularly driven qubit of `circular_drive_sc`:
/// U(t) = exp(-i nu t sz / 2) exp(-i Ht t) with Ht = (Delta/2) sz + lambda sx.
pub fn circular_drive_propagator(omega: f64, nu: f64, lambda: f64, t: f64) -> CMat {
    use qthermo::states;
    let rot = expm_taylor(&(states::pauli_z() * Complex64::new(0.0, -0.5 * nu * t)));
    let tilted = states::pauli_z() * cr(0.5 * (omega - nu)) + states::pauli_x() * cr(lambda);
    rot * expm_ih_oracle(&tilted, t)
}
