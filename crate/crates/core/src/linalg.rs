//! Dense complex linear algebra on top of nalgebra: Hermitian
//! eigendecomposition with a deterministic gauge, operator functions,
//! quadrature and stencils shared by the physics layers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn cr(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Entrywise max norm (the crate-wide operator norm surrogate).
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn herm_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn dag(m: &CMat) -> CMat {
    m.adjoint()
}

/// tr(a * b) without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Rotate `v` so its largest-|component| entry is real-positive (first index
/// wins ties). Makes eigenvectors deterministic across runs.
pub fn phase_fix(v: &mut CVec) {
    let mut k = 0usize;
    let mut best = -1.0f64;
    for (i, z) in v.iter().enumerate() {
        let a = z.norm();
        if a > best {
            best = a;
            k = i;
        }
    }
    if best > 0.0 {
        let ph = v[k] / v[k].norm();
        let corr = ph.conj();
        for z in v.iter_mut() {
            *z *= corr;
        }
    }
}

/// Hermitian eigendecomposition: ascending eigenvalues, phase-fixed
/// eigenvector columns. The input is symmetrized first, so callers should
/// check Hermiticity themselves when it is a contract.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let sym = (m + m.adjoint()) * cr(0.5);
    let se = sym.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (new, &old) in idx.iter().enumerate() {
        let mut v = se.eigenvectors.column(old).clone_owned();
        let norm = v.norm();
        if norm > 0.0 {
            v /= cr(norm);
        }
        phase_fix(&mut v);
        vecs.set_column(new, &v);
    }
    (vals, vecs)
}

/// V f(Lambda) V' for Hermitian input.
pub fn func_hermitian(h: &CMat, f: impl Fn(f64) -> Complex64) -> CMat {
    let (vals, vecs) = eigh(h);
    let fd = CMat::from_fn(vals.len(), vals.len(), |i, j| {
        if i == j {
            f(vals[i])
        } else {
            ZERO
        }
    });
    &vecs * fd * vecs.adjoint()
}

/// exp(-i h t) for Hermitian h.
pub fn expm_ih(h: &CMat, t: f64) -> CMat {
    func_hermitian(h, |lam| (-I * cr(lam * t)).exp())
}

/// ln of a Hermitian PSD matrix with eigenvalues clamped at `floor`;
/// the flag reports whether clamping happened.
pub fn ln_hermitian_floored(m: &CMat, floor: f64) -> (CMat, bool) {
    let (vals, vecs) = eigh(m);
    let mut floored = false;
    let fd = CMat::from_fn(vals.len(), vals.len(), |i, j| {
        if i == j {
            let v = if vals[i] < floor {
                floored = true;
                floor
            } else {
                vals[i]
            };
            cr(v.ln())
        } else {
            ZERO
        }
    });
    (&vecs * fd * vecs.adjoint(), floored)
}

/// Trace norm of a Hermitian matrix (sum of |eigenvalues|).
pub fn trace_norm_hermitian(m: &CMat) -> f64 {
    eigh(m).0.iter().map(|x| x.abs()).sum()
}

/// (1/2) || a - b ||_1 for Hermitian a, b.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    0.5 * trace_norm_hermitian(&(a - b))
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    eigh(m).0[0]
}

/// Composite Simpson quadrature on a uniform grid (3/8 rule on the tail when
/// the interval count is odd; trapezoid for a single interval).
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * h * (values[0] + values[1]);
    }
    let intervals = n - 1;
    let (simpson_end, mut total) = if intervals % 2 == 0 {
        (n - 1, 0.0)
    } else if intervals >= 3 {
        // 3/8 rule over the last three intervals
        let k = n - 4;
        let tail = 3.0 * h / 8.0
            * (values[k] + 3.0 * values[k + 1] + 3.0 * values[k + 2] + values[k + 3]);
        (k, tail)
    } else {
        unreachable!()
    };
    if simpson_end >= 2 {
        let mut s = values[0] + values[simpson_end];
        for (i, v) in values.iter().enumerate().take(simpson_end).skip(1) {
            s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        total += s * h / 3.0;
    }
    total
}

/// 4th-order finite-difference derivative on a uniform grid; needs >= 5
/// points (2nd-order fallback below that).
pub fn derivative4(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    if n < 5 {
        d[0] = (values[1] - values[0]) / h;
        for i in 1..n - 1 {
            d[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
        }
        d[n - 1] = (values[n - 1] - values[n - 2]) / h;
        return d;
    }
    let v = values;
    d[0] = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / (12.0 * h);
    d[1] = (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / (12.0 * h);
    for i in 2..n - 2 {
        d[i] = (-v[i + 2] + 8.0 * v[i + 1] - 8.0 * v[i - 1] + v[i - 2]) / (12.0 * h);
    }
    d[n - 2] =
        (3.0 * v[n - 1] + 10.0 * v[n - 2] - 18.0 * v[n - 3] + 6.0 * v[n - 4] - v[n - 5])
            / (12.0 * h);
    d[n - 1] = (25.0 * v[n - 1] - 48.0 * v[n - 2] + 36.0 * v[n - 3] - 16.0 * v[n - 4]
        + 3.0 * v[n - 5])
        / (12.0 * h);
    d
}
