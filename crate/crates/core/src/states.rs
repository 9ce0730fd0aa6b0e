//! Small operator zoo: Pauli matrices, Fock-space ladder operators, basis
//! vectors. Qubit basis order is (|e>, |g>) so sigma_z = diag(+1, -1) and
//! <sigma_z> = +1 on |e><e|; sigma_minus = |g><e|.

use crate::linalg::{cr, CMat, CVec, ONE, ZERO};
use num_complex::Complex64;

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(
        2,
        2,
        &[ZERO, Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0), ZERO],
    )
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, cr(-1.0)])
}

/// |g><e| in the (|e>, |g>) basis.
pub fn sigma_minus() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

/// |e><g|.
pub fn sigma_plus() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Annihilation operator on a Fock space truncated at n_max
/// (dimension n_max + 1): a |n> = sqrt(n) |n-1>.
pub fn annihilation(n_max: usize) -> CMat {
    let d = n_max + 1;
    CMat::from_fn(d, d, |i, j| {
        if j == i + 1 {
            cr((j as f64).sqrt())
        } else {
            ZERO
        }
    })
}

pub fn number_operator(n_max: usize) -> CMat {
    let d = n_max + 1;
    CMat::from_fn(d, d, |i, j| if i == j { cr(i as f64) } else { ZERO })
}

pub fn basis_vector(dim: usize, k: usize) -> CVec {
    let mut v = CVec::zeros(dim);
    v[k] = ONE;
    v
}

/// |e> in the qubit basis.
pub fn excited() -> CVec {
    basis_vector(2, 0)
}

/// |g> in the qubit basis.
pub fn ground() -> CVec {
    basis_vector(2, 1)
}
