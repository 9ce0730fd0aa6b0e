//! Time evolution: exact unitary propagation by spectral decomposition,
//! adaptive RK4 (with Richardson extrapolation) for master equations, and a
//! commutator-free 4th-order exponential scheme for driven unitaries.
//!
//! Trace drift is recorded on every trajectory but never corrected;
//! positivity loss beyond the policy threshold aborts the run.

use crate::error::{QError, Result};
use crate::generator::Generator;
use crate::linalg::{self, cr, CMat};
use crate::operator::{DensityOperator, HilbertLayout, Operator};
use crate::policy::NumericPolicy;
use num_complex::Complex64;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    times: Vec<f64>,
}

impl Grid {
    pub fn uniform(t0: f64, t1: f64, points: usize) -> Result<Grid> {
        if points < 2 {
            return Err(QError::Invalid("grid needs at least 2 points".into()));
        }
        if !(t1 > t0) {
            return Err(QError::Invalid("grid needs t1 > t0".into()));
        }
        let dt = (t1 - t0) / (points - 1) as f64;
        Ok(Grid {
            times: (0..points).map(|k| t0 + dt * k as f64).collect(),
        })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Grid> {
        if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QError::Invalid(
                "grid times must be strictly increasing with at least 2 points".into(),
            ));
        }
        Ok(Grid { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn span(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Uniform spacing if the grid is uniform within 1e-12 relative.
    pub fn uniform_step(&self) -> Option<f64> {
        let dt = self.times[1] - self.times[0];
        let ok = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-12 * dt.abs().max(1e-300));
        ok.then_some(dt)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub layout: HilbertLayout,
    pub times: Vec<f64>,
    pub states: Vec<CMat>,
    /// How the states were produced: "unitary-exact", "unitary-cf4",
    /// "lindblad-rk4", "jc-analytic", ...
    pub provenance: String,
    /// max |tr rho - 1| over the run (recorded, never corrected).
    pub trace_drift: f64,
    /// most negative eigenvalue encountered at grid nodes.
    pub min_eigenvalue: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn expectation_series(&self, op: &CMat) -> Vec<Complex64> {
        self.states
            .iter()
            .map(|rho| linalg::trace_of_product(op, rho))
            .collect()
    }

    /// Reduce every state onto the named subsystems (order preserved).
    pub fn reduced(&self, keep: &[&str]) -> Result<Trajectory> {
        let keep_idx: Vec<usize> = keep
            .iter()
            .map(|l| self.layout.position(l))
            .collect::<Result<_>>()?;
        let mut states = Vec::with_capacity(self.states.len());
        for rho in &self.states {
            states.push(crate::operator::partial_trace_mat(
                rho,
                &self.layout,
                &keep_idx,
            )?);
        }
        let dims: Vec<usize> = keep_idx.iter().map(|&i| self.layout.dims()[i]).collect();
        let labels: Vec<&str> = keep_idx.iter().map(|&i| self.layout.labels()[i]).collect();
        Ok(Trajectory {
            layout: HilbertLayout::new(dims, labels)?,
            times: self.times.clone(),
            states,
            provenance: self.provenance.clone(),
            trace_drift: self.trace_drift,
            min_eigenvalue: self.min_eigenvalue,
        })
    }
}

/// Closed evolution under a static Hamiltonian, exact via the spectral
/// decomposition: entrywise Bohr phases in the eigenbasis.
pub fn evolve_unitary(h: &Operator, rho0: &DensityOperator, grid: &Grid) -> Result<Trajectory> {
    let cap = NumericPolicy::default().matrix_dim_cap;
    if h.entries.nrows() > cap {
        return Err(QError::DimensionCap {
            dim: h.entries.nrows(),
            cap,
        });
    }
    if h.layout != *rho0.layout() {
        return Err(QError::LayoutMismatch(
            "Hamiltonian and state layouts differ".into(),
        ));
    }
    let (vals, vecs) = linalg::eigh(&h.entries);
    let rho_tilde = vecs.adjoint() * rho0.entries() * &vecs;
    let n = vals.len();
    let t0 = grid.times()[0];
    let mut states = Vec::with_capacity(grid.len());
    let mut trace_drift = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for &t in grid.times() {
        let dt = t - t0;
        let mut m = rho_tilde.clone();
        for i in 0..n {
            for j in 0..n {
                let phase = Complex64::from_polar(1.0, -(vals[i] - vals[j]) * dt);
                m[(i, j)] *= phase;
            }
        }
        let rho = &vecs * m * vecs.adjoint();
        trace_drift = trace_drift.max((linalg::trace(&rho).re - 1.0).abs());
        min_eig = min_eig.min(linalg::min_eigenvalue(&rho));
        states.push(rho);
    }
    Ok(Trajectory {
        layout: h.layout.clone(),
        times: grid.times().to_vec(),
        states,
        provenance: "unitary-exact".into(),
        trace_drift,
        min_eigenvalue: min_eig,
    })
}

fn rk4_step<F: Fn(f64, &CMat) -> CMat>(f: &F, t: f64, dt: f64, y: &CMat) -> CMat {
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * dt, &(y + &k1 * cr(0.5 * dt)));
    let k3 = f(t + 0.5 * dt, &(y + &k2 * cr(0.5 * dt)));
    let k4 = f(t + dt, &(y + &k3 * cr(dt)));
    y + (k1 + k2 * cr(2.0) + k3 * cr(2.0) + k4) * cr(dt / 6.0)
}

/// One interval with step-doubling Richardson control: halves the substep
/// until the coarse/fine difference meets `tol`, then extrapolates.
fn rk4_interval<F: Fn(f64, &CMat) -> CMat>(
    f: &F,
    t: f64,
    dt: f64,
    y: &CMat,
    tol: f64,
) -> Result<CMat> {
    let mut n_sub = 1usize;
    loop {
        let h = dt / n_sub as f64;
        let mut coarse = y.clone();
        let mut fine = y.clone();
        for k in 0..n_sub {
            let tk = t + h * k as f64;
            coarse = rk4_step(f, tk, h, &coarse);
            fine = rk4_step(f, tk, 0.5 * h, &fine);
            fine = rk4_step(f, tk + 0.5 * h, 0.5 * h, &fine);
        }
        let diff = linalg::max_abs(&(&fine - &coarse));
        if diff / 15.0 <= tol || n_sub >= 1 << 14 {
            if diff / 15.0 > tol {
                return Err(QError::GridTooCoarse(format!(
                    "integrator stalled at t = {t:.6}: residual {diff:.3e} after {n_sub} substeps"
                )));
            }
            // 5th-order Richardson extrapolant
            return Ok(&fine + (&fine - &coarse) * cr(1.0 / 15.0));
        }
        n_sub *= 2;
    }
}

/// Master-equation propagation with per-unit-time accuracy
/// `policy.integrator_tol`. Aborts when an eigenvalue drops below
/// -`policy.positivity_abort`.
pub fn evolve_generator(
    gen: &Generator,
    rho0: &DensityOperator,
    grid: &Grid,
) -> Result<Trajectory> {
    evolve_generator_with(gen, rho0, grid, &NumericPolicy::default())
}

pub fn evolve_generator_with(
    gen: &Generator,
    rho0: &DensityOperator,
    grid: &Grid,
    policy: &NumericPolicy,
) -> Result<Trajectory> {
    if gen.layout != *rho0.layout() {
        return Err(QError::LayoutMismatch(
            "generator and state layouts differ".into(),
        ));
    }
    let f = |t: f64, y: &CMat| gen.apply(t, y);
    let mut states = Vec::with_capacity(grid.len());
    let mut rho = rho0.entries().clone();
    let mut trace_drift = (linalg::trace(&rho).re - 1.0).abs();
    let mut min_eig = linalg::min_eigenvalue(&rho);
    states.push(rho.clone());
    for w in grid.times().windows(2) {
        let (t, t_next) = (w[0], w[1]);
        let dt = t_next - t;
        let tol = policy.integrator_tol * dt;
        rho = rk4_interval(&f, t, dt, &rho, tol)?;
        trace_drift = trace_drift.max((linalg::trace(&rho).re - 1.0).abs());
        let me = linalg::min_eigenvalue(&rho);
        min_eig = min_eig.min(me);
        if me < -policy.positivity_abort {
            return Err(QError::PositivityLoss {
                min_eig: me,
                t: t_next,
            });
        }
        states.push(rho.clone());
    }
    Ok(Trajectory {
        layout: gen.layout.clone(),
        times: grid.times().to_vec(),
        states,
        provenance: "lindblad-rk4".into(),
        trace_drift,
        min_eigenvalue: min_eig,
    })
}

/// Reduce a trajectory onto the named subsystems.
pub fn reduced_trajectory(traj: &Trajectory, keep: &[&str]) -> Result<Trajectory> {
    traj.reduced(keep)
}

const GAUSS_SHIFT: f64 = 0.288_675_134_594_812_88; // sqrt(3)/6

/// One commutator-free 4th-order step for dU/dt = -i H(t) U: two exponentials
/// of Gauss-node combinations; exactly unitary by construction.
fn cf4_step<F: Fn(f64) -> CMat>(h: &F, t: f64, dt: f64, u: &CMat) -> CMat {
    let a1 = h(t + (0.5 - GAUSS_SHIFT) * dt);
    let a2 = h(t + (0.5 + GAUSS_SHIFT) * dt);
    let x1 = 0.25 - GAUSS_SHIFT; // (3 - 2 sqrt 3)/12
    let x2 = 0.25 + GAUSS_SHIFT;
    let b_early = &a1 * cr(x2) + &a2 * cr(x1);
    let b_late = &a1 * cr(x1) + &a2 * cr(x2);
    let u1 = linalg::expm_ih(&b_early, dt) * u;
    linalg::expm_ih(&b_late, dt) * u1
}

/// Advance a propagator across [t, t+dt] with step-doubling control;
/// exactly unitary regardless of the substep count.
pub fn cf4_interval<F: Fn(f64) -> CMat>(
    h: &F,
    t: f64,
    dt: f64,
    u: &CMat,
    tol: f64,
) -> Result<CMat> {
    let mut n_sub = 1usize;
    loop {
        let step = dt / n_sub as f64;
        let mut coarse = u.clone();
        let mut fine = u.clone();
        for k in 0..n_sub {
            let tk = t + step * k as f64;
            coarse = cf4_step(h, tk, step, &coarse);
            fine = cf4_step(h, tk, 0.5 * step, &fine);
            fine = cf4_step(h, tk + 0.5 * step, 0.5 * step, &fine);
        }
        let diff = linalg::max_abs(&(&fine - &coarse));
        if diff / 15.0 <= tol || n_sub >= 1 << 14 {
            if diff / 15.0 > tol {
                return Err(QError::GridTooCoarse(format!(
                    "unitary integrator stalled at t = {t:.6}: residual {diff:.3e}"
                )));
            }
            return Ok(fine);
        }
        n_sub *= 2;
    }
}

/// Propagators U(t_k, t_0) for a driven Hamiltonian on every grid node.
pub fn propagator_series<F: Fn(f64) -> CMat>(
    h: &F,
    grid: &Grid,
    policy: &NumericPolicy,
) -> Result<Vec<CMat>> {
    let n = h(grid.times()[0]).nrows();
    let mut u = CMat::identity(n, n);
    let mut out = Vec::with_capacity(grid.len());
    out.push(u.clone());
    for w in grid.times().windows(2) {
        let dt = w[1] - w[0];
        let tol = 0.1 * policy.integrator_tol * dt;
        u = cf4_interval(h, w[0], dt, &u, tol)?;
        out.push(u.clone());
    }
    Ok(out)
}

/// Closed evolution under a driven Hamiltonian.
pub fn evolve_unitary_driven<F: Fn(f64) -> CMat>(
    h: &F,
    layout: &HilbertLayout,
    rho0: &DensityOperator,
    grid: &Grid,
    policy: &NumericPolicy,
) -> Result<Trajectory> {
    if layout != rho0.layout() {
        return Err(QError::LayoutMismatch(
            "Hamiltonian and state layouts differ".into(),
        ));
    }
    let us = propagator_series(h, grid, policy)?;
    let mut states = Vec::with_capacity(grid.len());
    let mut trace_drift = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for u in &us {
        let rho = u * rho0.entries() * u.adjoint();
        trace_drift = trace_drift.max((linalg::trace(&rho).re - 1.0).abs());
        min_eig = min_eig.min(linalg::min_eigenvalue(&rho));
        states.push(rho);
    }
    Ok(Trajectory {
        layout: layout.clone(),
        times: grid.times().to_vec(),
        states,
        provenance: "unitary-cf4".into(),
        trace_drift,
        min_eigenvalue: min_eig,
    })
}
