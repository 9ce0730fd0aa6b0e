//! Analytic qubit-mode (Jaynes-Cummings) engine. The excitation-conserving
//! coupling splits the Hilbert space into 2x2 blocks {|e,n>, |g,n+1>} plus
//! two singletons (|g,0> and the truncation edge |e,n_max>), so every
//! amplitude has a closed form and observables can be evaluated at any time
//! without storing or stepping a dense state. This is what makes the large
//! coherent-amplitude regime (dim ~ 2 alpha^2) affordable.
//!
//! Basis order matches the rest of the crate: qubit (|e>, |g>), mode Fock
//! 0..n_max, row-major composite index s*(n_max+1) + n.

use crate::error::{QError, Result};
use crate::linalg::{self, cr, CMat, CVec};
use crate::model::{coherent_amplitudes, coherent_truncation_rule};
use crate::operator::HilbertLayout;
use crate::policy::NumericPolicy;
use crate::propagate::{propagator_series, Grid, Trajectory};
use crate::states;
use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct JCModel {
    pub omega_s: f64,
    pub omega_c: f64,
    pub g: f64,
    /// initial qubit amplitudes on |e> and |g>
    pub qubit_e: Complex64,
    pub qubit_g: Complex64,
    /// initial coherent amplitude of the mode
    pub alpha: Complex64,
    pub n_max: usize,
    /// soft diagnostics collected at construction (strong coupling,
    /// off-resonance)
    pub warnings: Vec<String>,
}

impl JCModel {
    pub fn new(
        omega_s: f64,
        omega_c: f64,
        g: f64,
        alpha: Complex64,
        qubit: (Complex64, Complex64),
        n_max: Option<usize>,
    ) -> Result<JCModel> {
        if omega_s <= 0.0 || omega_c <= 0.0 {
            return Err(QError::Invalid("mode/qubit frequencies must be positive".into()));
        }
        let (qe, qg) = qubit;
        let norm = qe.norm_sqr() + qg.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(QError::InvalidState(format!(
                "qubit amplitudes have norm^2 = {norm:.12}, expected 1"
            )));
        }
        let required = coherent_truncation_rule(alpha.norm());
        let n_max = match n_max {
            Some(n) if n < required => {
                return Err(QError::TruncationTooSmall {
                    required,
                    given: n,
                })
            }
            Some(n) => n,
            None => required,
        };
        let mut warnings = vec![];
        if g.abs() * alpha.norm() > 0.1 * omega_s {
            warnings.push(format!(
                "effective drive g|alpha| = {:.3e} exceeds 0.1 omega_s; \
                 rotating-wave form may be inaccurate",
                g.abs() * alpha.norm()
            ));
        }
        if (omega_s - omega_c).abs() > 1e-12 * omega_s.max(omega_c) {
            warnings.push(format!(
                "detuning {:.3e}: the coupling no longer commutes with the free \
                 energy, so strict energy conservation between qubit and mode fails",
                omega_s - omega_c
            ));
        }
        Ok(JCModel {
            omega_s,
            omega_c,
            g,
            qubit_e: qe,
            qubit_g: qg,
            alpha,
            n_max,
            warnings,
        })
    }

    /// Resonant model, qubit starting excited.
    pub fn resonant(omega: f64, g: f64, alpha: f64) -> Result<JCModel> {
        JCModel::new(
            omega,
            omega,
            g,
            Complex64::new(alpha, 0.0),
            (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            None,
        )
    }

    pub fn dim_mode(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        2 * self.dim_mode()
    }

    pub fn layout(&self) -> HilbertLayout {
        HilbertLayout::new(vec![2, self.dim_mode()], vec!["S".into(), "C".into()]).unwrap()
    }

    pub fn h_s(&self) -> CMat {
        states::pauli_z() * cr(self.omega_s / 2.0)
    }

    pub fn h_c(&self) -> CMat {
        states::number_operator(self.n_max) * cr(self.omega_c)
    }

    /// g (sigma_+ a + sigma_- a†) on the composite space.
    pub fn h_sc(&self) -> CMat {
        let a = states::annihilation(self.n_max);
        let term = states::sigma_plus().kronecker(&a);
        (&term + term.adjoint()) * cr(self.g)
    }

    pub fn coupling_pairs(&self) -> Vec<(CMat, CMat)> {
        let a = states::annihilation(self.n_max);
        vec![
            (states::sigma_plus() * cr(self.g), a.clone()),
            (states::sigma_minus() * cr(self.g), a.adjoint()),
        ]
    }

    /// Dense composite Hamiltonian; intended for cross-checks at small
    /// truncation.
    pub fn device_hamiltonian(&self) -> CMat {
        let dm = self.dim_mode();
        let id_c = CMat::identity(dm, dm);
        let id_s = CMat::identity(2, 2);
        self.h_s().kronecker(&id_c) + id_s.kronecker(&self.h_c()) + self.h_sc()
    }

    pub fn initial_vector(&self) -> CVec {
        let c = coherent_amplitudes(self.alpha, self.n_max);
        let dm = self.dim_mode();
        let mut v = CVec::zeros(2 * dm);
        for n in 0..dm {
            v[n] = self.qubit_e * c[n];
            v[dm + n] = self.qubit_g * c[n];
        }
        v
    }

    /// Closed-form amplitudes (A_n on |e,n>, B_n on |g,n>) at time t.
    pub fn amplitudes_at(&self, t: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let c = coherent_amplitudes(self.alpha, self.n_max);
        let dm = self.dim_mode();
        let delta = self.omega_s - self.omega_c;
        let mut a_amp = vec![Complex64::new(0.0, 0.0); dm];
        let mut b_amp = vec![Complex64::new(0.0, 0.0); dm];
        // singleton |g,0>: energy -omega_s/2
        b_amp[0] = self.qubit_g * c[0] * Complex64::from_polar(1.0, self.omega_s / 2.0 * t);
        // singleton |e,n_max>: the truncated partner never mixes back
        let e_edge = self.n_max as f64 * self.omega_c + self.omega_s / 2.0;
        a_amp[dm - 1] = self.qubit_e * c[dm - 1] * Complex64::from_polar(1.0, -e_edge * t);
        // coupled blocks (|e,n>, |g,n+1>), n = 0..n_max-1
        for n in 0..self.n_max {
            let gn = self.g * ((n + 1) as f64).sqrt();
            let omega_rabi = (delta * delta + 4.0 * gn * gn).sqrt();
            let e_bar = (n as f64 + 0.5) * self.omega_c;
            let (cos_phi, sin_phi) = if omega_rabi > 0.0 {
                (delta / omega_rabi, 2.0 * gn / omega_rabi)
            } else {
                (1.0, 0.0)
            };
            let half = 0.5 * omega_rabi * t;
            let (s, co) = half.sin_cos();
            let phase = Complex64::from_polar(1.0, -e_bar * t);
            let a0 = self.qubit_e * c[n];
            let b0 = self.qubit_g * c[n + 1];
            let m00 = Complex64::new(co, -s * cos_phi);
            let m01 = Complex64::new(0.0, -s * sin_phi);
            let m11 = Complex64::new(co, s * cos_phi);
            a_amp[n] += phase * (m00 * a0 + m01 * b0);
            b_amp[n + 1] = phase * (m01 * a0 + m11 * b0);
        }
        (a_amp, b_amp)
    }

    /// Dense state vector at time t (for oracle comparisons; refuses large
    /// truncations).
    pub fn state_vector_at(&self, t: f64, policy: &NumericPolicy) -> Result<CVec> {
        if self.dim() > policy.vector_dim_cap {
            return Err(QError::DimensionCap {
                dim: self.dim(),
                cap: policy.vector_dim_cap,
            });
        }
        let (a_amp, b_amp) = self.amplitudes_at(t);
        let dm = self.dim_mode();
        let mut v = CVec::zeros(2 * dm);
        for n in 0..dm {
            v[n] = a_amp[n];
            v[dm + n] = b_amp[n];
        }
        Ok(v)
    }

    /// Dense density-operator trajectory with analytic provenance.
    pub fn state_trajectory(&self, grid: &Grid, policy: &NumericPolicy) -> Result<Trajectory> {
        if self.dim() > policy.matrix_dim_cap {
            return Err(QError::DimensionCap {
                dim: self.dim(),
                cap: policy.matrix_dim_cap,
            });
        }
        let mut states = Vec::with_capacity(grid.len());
        let mut trace_drift = 0.0f64;
        for &t in grid.times() {
            let v = self.state_vector_at(t, policy)?;
            let rho = CMat::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj());
            trace_drift = trace_drift.max((linalg::trace(&rho).re - 1.0).abs());
            states.push(rho);
        }
        Ok(Trajectory {
            layout: self.layout(),
            times: grid.times().to_vec(),
            states,
            provenance: "jc-analytic".into(),
            trace_drift,
            min_eigenvalue: 0.0,
        })
    }

    pub fn excited_population(&self, t: f64) -> f64 {
        let (a_amp, _) = self.amplitudes_at(t);
        a_amp.iter().map(|x| x.norm_sqr()).sum()
    }

    /// Single-time observable bundle from the closed-form amplitudes.
    pub fn observables_at(&self, t: f64) -> JcObservables {
        let (a_amp, b_amp) = self.amplitudes_at(t);
        let dm = self.dim_mode();
        let mut p_e = 0.0;
        let mut norm = 0.0;
        let mut n_mode = 0.0;
        let mut excitation = 0.0;
        let mut z = Complex64::new(0.0, 0.0); // <a† sigma_->
        let mut sp = Complex64::new(0.0, 0.0); // <sigma_+>
        let mut a_mean = Complex64::new(0.0, 0.0);
        for n in 0..dm {
            let pa = a_amp[n].norm_sqr();
            let pb = b_amp[n].norm_sqr();
            p_e += pa;
            norm += pa + pb;
            n_mode += n as f64 * (pa + pb);
            excitation += (n + 1) as f64 * pa + n as f64 * pb;
            sp += a_amp[n].conj() * b_amp[n];
            if n + 1 < dm {
                let root = ((n + 1) as f64).sqrt();
                z += b_amp[n + 1].conj() * root * a_amp[n];
                a_mean += root * (a_amp[n].conj() * a_amp[n + 1] + b_amp[n].conj() * b_amp[n + 1]);
            }
        }
        let p_autonomous = -2.0 * self.g * self.omega_c * z.im;
        JcObservables {
            t,
            p_e,
            norm,
            e_s: self.omega_s / 2.0 * (2.0 * p_e - norm),
            e_c: self.omega_c * n_mode,
            excitation,
            p_autonomous,
            qubit_coherence: sp,
            mode_amplitude: a_mean,
        }
    }

    /// Driven-qubit counterpart: the mode is replaced by the classical field
    /// alpha e^{-i omega_c t}. Returns the reduced 2x2 states and the drive
    /// power <dH/dt> on the same grid.
    pub fn semiclassical_run(&self, grid: &Grid, policy: &NumericPolicy) -> Result<ScRun> {
        let drive = self.g * self.alpha.norm();
        let phase0 = self.alpha.arg();
        let wc = self.omega_c;
        let h = move |t: f64| {
            let c = Complex64::from_polar(drive, phase0 - wc * t);
            let mut m = states::pauli_z() * cr(self.omega_s / 2.0);
            m += states::sigma_plus() * c + states::sigma_minus() * c.conj();
            m
        };
        let us = propagator_series(&h, grid, policy)?;
        let mut rho = CMat::zeros(2, 2);
        rho[(0, 0)] = self.qubit_e * self.qubit_e.conj();
        rho[(0, 1)] = self.qubit_e * self.qubit_g.conj();
        rho[(1, 0)] = self.qubit_g * self.qubit_e.conj();
        rho[(1, 1)] = self.qubit_g * self.qubit_g.conj();
        let mut p_sc = Vec::with_capacity(grid.len());
        let mut p_e = Vec::with_capacity(grid.len());
        let mut states_out = Vec::with_capacity(grid.len());
        for (k, &t) in grid.times().iter().enumerate() {
            let rt = &us[k] * &rho * us[k].adjoint();
            let dc = Complex64::from_polar(drive * wc, phase0 - wc * t)
                * Complex64::new(0.0, -1.0);
            let dh = states::sigma_plus() * dc + states::sigma_minus() * dc.conj();
            p_sc.push(linalg::trace_of_product(&dh, &rt).re);
            p_e.push(rt[(0, 0)].re);
            states_out.push(rt);
        }
        Ok(ScRun {
            times: grid.times().to_vec(),
            states: states_out,
            p_semiclassical: p_sc,
            p_e,
        })
    }

    /// Full side-by-side run: closed-form composite observables plus the
    /// driven-qubit reduction on one grid.
    pub fn run(&self, grid: &Grid, policy: &NumericPolicy) -> Result<JcRun> {
        let sc = self.semiclassical_run(grid, policy)?;
        let mut out = JcRun {
            times: grid.times().to_vec(),
            p_e: Vec::with_capacity(grid.len()),
            p_e_semiclassical: sc.p_e,
            p_autonomous: Vec::with_capacity(grid.len()),
            p_semiclassical: sc.p_semiclassical,
            e_s: Vec::with_capacity(grid.len()),
            e_c: Vec::with_capacity(grid.len()),
            norm_defect: 0.0,
            excitation_drift: 0.0,
            free_energy_drift: 0.0,
        };
        let first = self.observables_at(grid.times()[0]);
        for &t in grid.times() {
            let obs = self.observables_at(t);
            out.p_e.push(obs.p_e);
            out.p_autonomous.push(obs.p_autonomous);
            out.e_s.push(obs.e_s);
            out.e_c.push(obs.e_c);
            out.norm_defect = out.norm_defect.max((obs.norm - 1.0).abs());
            out.excitation_drift = out
                .excitation_drift
                .max((obs.excitation - first.excitation).abs());
            out.free_energy_drift = out
                .free_energy_drift
                .max(((obs.e_s + obs.e_c) - (first.e_s + first.e_c)).abs());
        }
        Ok(out)
    }

    /// Classical-drive transfer probability for a qubit starting in |g>:
    /// (4 g^2 <n> / W^2) sin^2(W t / 2), W = sqrt(delta^2 + 4 g^2 <n>).
    pub fn rabi_population(&self, t: f64) -> f64 {
        let n_mean = self.alpha.norm_sqr();
        let rabi2 = 4.0 * self.g * self.g * n_mean;
        let w2 = (self.omega_s - self.omega_c).powi(2) + rabi2;
        if w2 == 0.0 {
            return 0.0;
        }
        rabi2 / w2 * (0.5 * w2.sqrt() * t).sin().powi(2)
    }

    /// Poisson-weighted block sum for P_e(t); exact when the qubit starts in
    /// a pole state (|e> or |g>), undefined for superpositions because the
    /// block interference terms survive.
    pub fn poisson_population(&self, t: f64) -> Result<f64> {
        let pe0 = self.qubit_e.norm_sqr();
        let c = coherent_amplitudes(self.alpha, self.n_max);
        let delta = self.omega_s - self.omega_c;
        if pe0 > 1.0 - 1e-12 {
            // start |e>: block n transfers with weight on |e,n>
            let mut p = 0.0;
            for n in 0..self.n_max {
                let rabi2 = 4.0 * self.g * self.g * (n + 1) as f64;
                let w2 = delta * delta + rabi2;
                let transfer = if w2 > 0.0 {
                    rabi2 / w2 * (0.5 * w2.sqrt() * t).sin().powi(2)
                } else {
                    0.0
                };
                p += c[n].norm_sqr() * (1.0 - transfer);
            }
            p += c[self.n_max].norm_sqr(); // truncation-edge singleton
            Ok(p)
        } else if pe0 < 1e-12 {
            // start |g>: block n-1 feeds |e,n-1> from |g,n>
            let mut p = 0.0;
            for n in 1..=self.n_max {
                let rabi2 = 4.0 * self.g * self.g * n as f64;
                let w2 = delta * delta + rabi2;
                let transfer = if w2 > 0.0 {
                    rabi2 / w2 * (0.5 * w2.sqrt() * t).sin().powi(2)
                } else {
                    0.0
                };
                p += c[n].norm_sqr() * transfer;
            }
            Ok(p)
        } else {
            Err(QError::Invalid(
                "closed-form Poisson sum needs a pole initial qubit state".into(),
            ))
        }
    }
}

#[derive(Clone, Debug)]
pub struct JcObservables {
    pub t: f64,
    pub p_e: f64,
    pub norm: f64,
    pub e_s: f64,
    pub e_c: f64,
    pub excitation: f64,
    pub p_autonomous: f64,
    pub qubit_coherence: Complex64,
    pub mode_amplitude: Complex64,
}

#[derive(Clone, Debug)]
pub struct ScRun {
    pub times: Vec<f64>,
    pub states: Vec<CMat>,
    pub p_semiclassical: Vec<f64>,
    pub p_e: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct JcRun {
    pub times: Vec<f64>,
    pub p_e: Vec<f64>,
    pub p_e_semiclassical: Vec<f64>,
    pub p_autonomous: Vec<f64>,
    pub p_semiclassical: Vec<f64>,
    pub e_s: Vec<f64>,
    pub e_c: Vec<f64>,
    pub norm_defect: f64,
    pub excitation_drift: f64,
    pub free_energy_drift: f64,
}

/// One row of the coherent-amplitude scan: the classical-field limit is
/// approached with g scaled as g_scale/alpha so the effective drive g|alpha|
/// stays fixed.
#[derive(Clone, Debug)]
pub struct JcScanRow {
    pub alpha: f64,
    pub g: f64,
    pub run: JcRun,
    /// sup_t |P_autonomous - P_semiclassical|
    pub sup_power_gap: f64,
    /// max |P_autonomous| in the last scanned drive period over the first
    /// period (collapse of the power envelope)
    pub envelope_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct JcScan {
    pub omega: f64,
    pub g_scale: f64,
    pub rows: Vec<JcScanRow>,
}

/// Side-by-side autonomous/driven comparison over a list of coherent
/// amplitudes at fixed effective drive. Guardrail: amplitudes above 150 are
/// refused (the mode dimension grows as alpha^2).
pub fn figure2_scan(
    alphas: &[f64],
    omega: f64,
    g_scale: f64,
    grid: &Grid,
) -> Result<JcScan> {
    figure2_scan_with(alphas, omega, g_scale, grid, &NumericPolicy::default())
}

pub fn figure2_scan_with(
    alphas: &[f64],
    omega: f64,
    g_scale: f64,
    grid: &Grid,
    policy: &NumericPolicy,
) -> Result<JcScan> {
    if alphas.is_empty() {
        return Err(QError::Invalid("scan needs at least one amplitude".into()));
    }
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if !(alpha > 0.0) {
            return Err(QError::Invalid("amplitudes must be positive".into()));
        }
        if alpha > 150.0 {
            return Err(QError::DimensionCap {
                dim: 2 * (coherent_truncation_rule(alpha) + 1),
                cap: 2 * (coherent_truncation_rule(150.0) + 1),
            });
        }
        let g = g_scale / alpha;
        let model = JCModel::resonant(omega, g, alpha)?;
        let run = model.run(grid, policy)?;
        let sup_power_gap = run
            .p_autonomous
            .iter()
            .zip(&run.p_semiclassical)
            .fold(0.0f64, |m, (a, s)| m.max((a - s).abs()));
        // drive (Rabi) period of the scan layout: 2 pi / (2 g alpha)
        let t_rabi = std::f64::consts::PI / (g * alpha);
        let max_in = |lo: f64, hi: f64| {
            run.times
                .iter()
                .zip(&run.p_autonomous)
                .filter(|(t, _)| **t >= lo && **t < hi)
                .fold(0.0f64, |m, (_, p)| m.max(p.abs()))
        };
        let first = max_in(0.0, t_rabi);
        let t_end = *run.times.last().unwrap();
        let last = max_in(t_end - t_rabi, t_end + 1.0);
        let envelope_ratio = if first > 0.0 { last / first } else { 1.0 };
        rows.push(JcScanRow {
            alpha,
            g,
            run,
            sup_power_gap,
            envelope_ratio,
        });
    }
    Ok(JcScan {
        omega,
        g_scale,
        rows,
    })
}

/// Gaussian-collapse rate from the extrema of P_e - 1/2: linear regression
/// of ln|extremum| against t^2. Returns (fitted rate, extrema used). The
/// window should stay inside the first collapse (before any revival).
pub fn collapse_fit(times: &[f64], p_e: &[f64], t_window: f64) -> Result<(f64, usize)> {
    if times.len() != p_e.len() || times.len() < 5 {
        return Err(QError::Invalid("need matching series, at least 5 points".into()));
    }
    let mut xs = vec![];
    let mut ys = vec![];
    for k in 1..times.len() - 1 {
        if times[k] > t_window {
            break;
        }
        let d = p_e[k] - 0.5;
        let prev = p_e[k - 1] - 0.5;
        let next = p_e[k + 1] - 0.5;
        let is_max = d > prev && d >= next && d > 0.0;
        let is_min = d < prev && d <= next && d < 0.0;
        if is_max || is_min {
            // parabolic refinement of the extremum value
            let denom = prev - 2.0 * d + next;
            let refined = if denom.abs() > 1e-300 {
                d - (next - prev).powi(2) / (8.0 * denom)
            } else {
                d
            };
            if refined.abs() > 1e-12 {
                xs.push(times[k] * times[k]);
                ys.push(refined.abs().ln());
            }
        }
    }
    if xs.len() < 3 {
        return Err(QError::Invalid(format!(
            "only {} extrema inside the window; widen it or refine the grid",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(QError::Invalid("degenerate extrema layout".into()));
    }
    Ok((-sxy / sxx, xs.len()))
}
