//! Master-equation generators with eigenoperator (symmetric) structure.
//!
//! A generator is dρ/dt = -i[H(t) + H_LS, ρ] + Σ_{ab} r_{ab}(t) (F_a ρ F_b†
//! - ½{F_b† F_a, ρ}). Channels carry jump operators that are eigenoperators
//! of the relevant free propagator, so conjugation by that propagator
//! commutes with the dissipator and thermodynamic fluxes split cleanly by
//! Bohr frequency. The kinetic matrix r is diag(g_a(t)) plus an optional
//! constant Hermitian cross block; negative transients are allowed (the
//! generator is then non-Markovian but still trace- and
//! Hermiticity-preserving).
//!
//! Frequency conventions: a channel's jump F = |n><m| lowers energy by
//! omega = eps_m - eps_n > 0; detailed-balance spectra obey
//! G(-w) = exp(-beta w) G(w), so emission dominates absorption.

use crate::error::{QError, Result};
use crate::linalg::{self, cr, CMat};
use crate::model::{GlobalModel, LocalModel};
use crate::operator::HilbertLayout;
use crate::policy::NumericPolicy;
use crate::semiclassical::InvariantFrame;
use crate::{eigenop, states};
use std::fmt;
use std::sync::Arc;

pub type TimeOperatorFn = Arc<dyn Fn(f64) -> CMat + Send + Sync>;
pub type TimeScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Bath coupling spectrum G(w) >= 0 with the detailed-balance (KMS)
/// asymmetry G(-w) = exp(-beta w) G(w).
#[derive(Clone, Debug, PartialEq)]
pub struct BathSpectrum {
    pub beta: f64,
    pub coupling: f64,
    pub kind: SpectrumKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpectrumKind {
    /// G(w) = coupling for w >= 0, coupling * exp(beta w) for w < 0.
    FlatDetailedBalance,
    /// G(w) = coupling * w / (1 - exp(-beta w)), Ohmic up to `cutoff`
    /// (hard cutoff on |w|).
    Ohmic { cutoff: f64 },
}

impl BathSpectrum {
    pub fn flat(beta: f64, coupling: f64) -> Result<Self> {
        if coupling < 0.0 {
            return Err(QError::NegativeRate {
                rate: coupling,
                channel: "bath coupling".into(),
            });
        }
        if !(beta >= 0.0) {
            return Err(QError::Invalid("bath beta must be >= 0".into()));
        }
        Ok(BathSpectrum {
            beta,
            coupling,
            kind: SpectrumKind::FlatDetailedBalance,
        })
    }

    pub fn eval(&self, omega: f64) -> f64 {
        match self.kind {
            SpectrumKind::FlatDetailedBalance => {
                if omega >= 0.0 {
                    self.coupling
                } else {
                    self.coupling * (self.beta * omega).exp()
                }
            }
            SpectrumKind::Ohmic { cutoff } => {
                if omega.abs() > cutoff {
                    return 0.0;
                }
                let x = self.beta * omega;
                if x.abs() < 1e-8 {
                    // w/(1-e^{-bw}) -> 1/b + w/2 + O(w^2 b)
                    self.coupling * (1.0 / self.beta + omega / 2.0)
                } else {
                    self.coupling * omega / (1.0 - (-x).exp())
                }
            }
        }
    }
}

/// Scalar kinetic coefficient g(t); `Spectral` folds in the bath spectrum
/// evaluated at the channel's instantaneous frequency.
#[derive(Clone, Debug)]
pub enum RateFn {
    Const(f64),
    /// g0 (1 - exp(-t/tau)) switch-on transient.
    ExpTransient { g0: f64, tau: f64 },
    /// Linear interpolation through (times, values); clamped outside.
    PiecewiseLinear { times: Vec<f64>, values: Vec<f64> },
    /// weight * G(omega) * envelope(t).
    Spectral {
        weight: f64,
        bath: BathSpectrum,
        envelope: Option<Box<RateFn>>,
    },
    Product(Box<RateFn>, Box<RateFn>),
}

impl RateFn {
    pub fn eval(&self, t: f64, omega: f64) -> f64 {
        match self {
            RateFn::Const(g) => *g,
            RateFn::ExpTransient { g0, tau } => g0 * (1.0 - (-t / tau).exp()),
            RateFn::PiecewiseLinear { times, values } => {
                if times.is_empty() {
                    return 0.0;
                }
                if t <= times[0] {
                    return values[0];
                }
                if t >= *times.last().unwrap() {
                    return *values.last().unwrap();
                }
                let k = times.partition_point(|&x| x <= t) - 1;
                let f = (t - times[k]) / (times[k + 1] - times[k]);
                values[k] + f * (values[k + 1] - values[k])
            }
            RateFn::Spectral {
                weight,
                bath,
                envelope,
            } => {
                weight
                    * bath.eval(omega)
                    * envelope.as_ref().map_or(1.0, |e| e.eval(t, omega))
            }
            RateFn::Product(a, b) => a.eval(t, omega) * b.eval(t, omega),
        }
    }
}

/// Envelope/cross/shift bundle shared by the generator builders.
#[derive(Clone, Debug)]
pub struct KineticSchedule {
    /// Multiplies every derived channel rate; defaults to 1.
    pub envelope: Option<RateFn>,
    /// Constant Hermitian cross-kinetic block r_{ab} added to diag(g_a(t)).
    pub cross: Option<CMat>,
    pub lamb_shift: Option<CMat>,
}

impl Default for KineticSchedule {
    fn default() -> Self {
        KineticSchedule {
            envelope: None,
            cross: None,
            lamb_shift: None,
        }
    }
}

impl KineticSchedule {
    /// Switch-on transient g0 (1 - exp(-t/tau)) on top of detailed-balance
    /// rates.
    pub fn exp_transient(g0: f64, tau: f64) -> Self {
        KineticSchedule {
            envelope: Some(RateFn::ExpTransient { g0, tau }),
            cross: None,
            lamb_shift: None,
        }
    }
}

#[derive(Clone)]
pub enum JumpOp {
    Static(CMat),
    /// Frame-carried jump F(t); used by the driven (moving-dyad) generators.
    Moving(TimeOperatorFn),
}

impl fmt::Debug for JumpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpOp::Static(m) => write!(f, "Static({}x{})", m.nrows(), m.ncols()),
            JumpOp::Moving(_) => write!(f, "Moving(..)"),
        }
    }
}

#[derive(Clone)]
pub struct Channel {
    pub jump: JumpOp,
    /// Bohr frequency at t = 0 (static channels keep it forever).
    pub omega: f64,
    /// Instantaneous frequency dθ/dt for moving channels.
    pub omega_fn: Option<TimeScalarFn>,
    pub rate: RateFn,
    pub label: String,
    /// cached F†F for static jumps
    ff: Option<CMat>,
}

impl fmt::Debug for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Channel")
            .field("jump", &self.jump)
            .field("omega", &self.omega)
            .field("rate", &self.rate)
            .field("label", &self.label)
            .finish()
    }
}

impl Channel {
    pub fn new_static(jump: CMat, omega: f64, rate: RateFn, label: impl Into<String>) -> Self {
        let ff = Some(jump.adjoint() * &jump);
        Channel {
            jump: JumpOp::Static(jump),
            omega,
            omega_fn: None,
            rate,
            label: label.into(),
            ff,
        }
    }

    pub fn new_moving(
        jump: TimeOperatorFn,
        omega0: f64,
        omega_fn: TimeScalarFn,
        rate: RateFn,
        label: impl Into<String>,
    ) -> Self {
        Channel {
            jump: JumpOp::Moving(jump),
            omega: omega0,
            omega_fn: Some(omega_fn),
            rate,
            label: label.into(),
            ff: None,
        }
    }

    pub fn jump_at(&self, t: f64) -> CMat {
        match &self.jump {
            JumpOp::Static(m) => m.clone(),
            JumpOp::Moving(f) => f(t),
        }
    }

    pub fn omega_at(&self, t: f64) -> f64 {
        match &self.omega_fn {
            Some(f) => f(t),
            None => self.omega,
        }
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        self.rate.eval(t, self.omega_at(t))
    }
}

/// Origin of a generator's channel structure; recorded in outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructureTag {
    LocalDevice,
    LocalSystem,
    GlobalDevice,
    ScGlobal,
    Markovian,
    Custom,
}

impl fmt::Display for StructureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StructureTag::LocalDevice => "local-device",
            StructureTag::LocalSystem => "local-system",
            StructureTag::GlobalDevice => "global-device",
            StructureTag::ScGlobal => "sc-global",
            StructureTag::Markovian => "markovian",
            StructureTag::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Clone)]
pub enum Drive {
    Static(CMat),
    Driven(TimeOperatorFn),
}

impl fmt::Debug for Drive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drive::Static(m) => write!(f, "Static({}x{})", m.nrows(), m.ncols()),
            Drive::Driven(_) => write!(f, "Driven(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub layout: HilbertLayout,
    pub hamiltonian: Drive,
    pub lamb_shift: Option<CMat>,
    pub channels: Vec<Channel>,
    /// Constant Hermitian cross-kinetic block, indexed like `channels`.
    pub cross: Option<CMat>,
    pub structure: StructureTag,
}

/// Indices of the zero-frequency (population/coherence-preserving) channels.
#[derive(Clone, Debug)]
pub struct InvariantBlock {
    pub channel_indices: Vec<usize>,
}

pub fn invariant_block(gen: &Generator) -> InvariantBlock {
    let scale = gen
        .channels
        .iter()
        .fold(0.0f64, |m, c| m.max(c.omega.abs()))
        .max(1e-300);
    InvariantBlock {
        channel_indices: (0..gen.channels.len())
            .filter(|&i| gen.channels[i].omega.abs() < 1e-12 * scale.max(1.0))
            .collect(),
    }
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn hamiltonian_at(&self, t: f64) -> CMat {
        match &self.hamiltonian {
            Drive::Static(m) => m.clone(),
            Drive::Driven(f) => f(t),
        }
    }

    /// Coherent part including the Lamb-shift correction.
    pub fn coherent_hamiltonian(&self, t: f64) -> CMat {
        let mut h = self.hamiltonian_at(t);
        if let Some(ls) = &self.lamb_shift {
            h += ls;
        }
        h
    }

    /// Dissipative part Σ r_ab (F_a ρ F_b† - ½{F_b†F_a, ρ}).
    pub fn dissipator(&self, t: f64, rho: &CMat) -> CMat {
        let n = self.dim();
        let mut out = CMat::zeros(n, n);
        for ch in &self.channels {
            let g = ch.rate_at(t);
            if g == 0.0 {
                continue;
            }
            match (&ch.jump, &ch.ff) {
                (JumpOp::Static(f), Some(ff)) => {
                    let frf = f * rho * f.adjoint();
                    let a = ff * rho;
                    let b = rho * ff;
                    out += (frf - (a + b) * cr(0.5)) * cr(g);
                }
                _ => {
                    let f = ch.jump_at(t);
                    let ff = f.adjoint() * &f;
                    let frf = &f * rho * f.adjoint();
                    out += (frf - (&ff * rho + rho * &ff) * cr(0.5)) * cr(g);
                }
            }
        }
        if let Some(cross) = &self.cross {
            for a in 0..self.channels.len() {
                for b in 0..self.channels.len() {
                    let r = cross[(a, b)];
                    if r.norm() < 1e-300 {
                        continue;
                    }
                    let fa = self.channels[a].jump_at(t);
                    let fb = self.channels[b].jump_at(t);
                    let fbfa = fb.adjoint() * &fa;
                    let term = &fa * rho * fb.adjoint()
                        - (&fbfa * rho + rho * &fbfa) * cr(0.5);
                    out += term * r;
                }
            }
        }
        out
    }

    /// Full generator action -i[H + H_LS, ρ] + dissipator.
    pub fn apply(&self, t: f64, rho: &CMat) -> CMat {
        let h = self.coherent_hamiltonian(t);
        let comm = &h * rho - rho * &h;
        self.dissipator(t, rho) - comm * linalg::I
    }

    /// Kinetic matrix r(t) = diag(g_a(t)) + cross.
    pub fn kinetic_matrix(&self, t: f64) -> CMat {
        let n = self.channels.len();
        let mut r = match &self.cross {
            Some(c) => c.clone(),
            None => CMat::zeros(n, n),
        };
        for (a, ch) in self.channels.iter().enumerate() {
            r[(a, a)] += cr(ch.rate_at(t));
        }
        r
    }

    /// True when the kinetic matrix is positive semidefinite at every sample
    /// time (GKLS/Markovian form).
    pub fn is_markovian(&self, times: &[f64]) -> bool {
        let tol = 1e-12;
        times.iter().all(|&t| {
            let r = self.kinetic_matrix(t);
            let scale = linalg::max_abs(&r).max(1.0);
            linalg::min_eigenvalue(&r) >= -tol * scale
        })
    }

    /// Column-stacked superoperator matrix L(t) acting on vec(ρ).
    pub fn superoperator(&self, t: f64) -> CMat {
        let n = self.dim();
        let id = CMat::identity(n, n);
        let h = self.coherent_hamiltonian(t);
        // vec(AρB) = (Bᵀ ⊗ A) vec(ρ) with column stacking
        let mut l = (h.transpose().kronecker(&id) - id.kronecker(&h)) * linalg::I;
        let r = self.kinetic_matrix(t);
        let jumps: Vec<CMat> = self.channels.iter().map(|c| c.jump_at(t)).collect();
        for a in 0..jumps.len() {
            for b in 0..jumps.len() {
                let g = r[(a, b)];
                if g.norm() < 1e-300 {
                    continue;
                }
                let fbfa = jumps[b].adjoint() * &jumps[a];
                let term = jumps[b].conjugate().kronecker(&jumps[a])
                    - (id.kronecker(&fbfa) + fbfa.transpose().kronecker(&id)) * cr(0.5);
                l += term * g;
            }
        }
        l
    }
}

/// Expand a coupling operator over an eigenoperator set; returns
/// (channel ops with frequencies and labels) whose weighted sum rebuilds the
/// operator's non-invariant + invariant content.
fn expand_coupling(
    set: &eigenop::EigenoperatorSet,
    coupling: &CMat,
    tag: &str,
) -> Vec<(CMat, f64, f64, String)> {
    let scale2 = linalg::max_abs(coupling).powi(2).max(1e-300);
    let mut out = vec![];
    for op in set.non_invariant.iter() {
        let s = linalg::trace_of_product(&op.op.adjoint(), coupling);
        let w = s.norm_sqr();
        if w > 1e-24 * scale2 {
            out.push((
                op.op.clone() * (s / cr(s.norm())),
                op.omega,
                w,
                format!("{tag}:dyad{}-{}", op.pair.0, op.pair.1),
            ));
        }
    }
    for (j, r) in set.invariant.iter().enumerate() {
        let s = linalg::trace_of_product(&r.adjoint(), coupling);
        let w = s.norm_sqr();
        if w > 1e-24 * scale2 {
            out.push((r.clone(), 0.0, w, format!("{tag}:diag{j}")));
        }
    }
    for op in set.invariant_offdiag.iter() {
        let s = linalg::trace_of_product(&op.op.adjoint(), coupling);
        let w = s.norm_sqr();
        if w > 1e-24 * scale2 {
            out.push((
                op.op.clone() * (s / cr(s.norm())),
                0.0,
                w,
                format!("{tag}:deg{}-{}", op.pair.0, op.pair.1),
            ));
        }
    }
    out
}

fn spectral_rate(weight: f64, bath: &BathSpectrum, schedule: &KineticSchedule) -> RateFn {
    RateFn::Spectral {
        weight,
        bath: bath.clone(),
        envelope: schedule.envelope.clone().map(Box::new),
    }
}

fn check_schedule_dims(schedule: &KineticSchedule, n_channels: usize, dim: usize) -> Result<()> {
    if let Some(c) = &schedule.cross {
        if c.nrows() != n_channels || c.ncols() != n_channels {
            return Err(QError::ScheduleMismatch(format!(
                "cross kinetic block is {}x{}, generator has {} channels",
                c.nrows(),
                c.ncols(),
                n_channels
            )));
        }
        let defect = linalg::herm_defect(c);
        if defect > 1e-12 * linalg::max_abs(c).max(1.0) {
            return Err(QError::ScheduleMismatch(
                "cross kinetic block must be Hermitian".into(),
            ));
        }
    }
    if let Some(ls) = &schedule.lamb_shift {
        if ls.nrows() != dim {
            return Err(QError::ScheduleMismatch(format!(
                "Lamb-shift dim {} vs generator dim {}",
                ls.nrows(),
                dim
            )));
        }
    }
    Ok(())
}

fn check_dim_cap(dim: usize, policy: &NumericPolicy) -> Result<()> {
    if dim > policy.matrix_dim_cap {
        return Err(QError::DimensionCap {
            dim,
            cap: policy.matrix_dim_cap,
        });
    }
    Ok(())
}

/// Device master equation in the local (bare-basis) scheme: jumps are system
/// eigenoperators embedded as F ⊗ I_C, so the dissipator never moves control
/// energy; the coherent part keeps the full device Hamiltonian including the
/// internal coupling.
pub fn build_local_device(
    model: &LocalModel,
    bath: &BathSpectrum,
    schedule: &KineticSchedule,
) -> Result<Generator> {
    build_local_device_with(model, bath, schedule, &NumericPolicy::default())
}

pub fn build_local_device_with(
    model: &LocalModel,
    bath: &BathSpectrum,
    schedule: &KineticSchedule,
    policy: &NumericPolicy,
) -> Result<Generator> {
    let layout = model.layout_d();
    check_dim_cap(layout.total_dim(), policy)?;
    let (d_sc, _) = model.sec_defects();
    if d_sc > policy.sec_rel {
        return Err(QError::SecViolation(format!(
            "|[H_SC, H_S + H_C]| / (|H_SC||H_S + H_C|) = {d_sc:.3e} exceeds {:.1e}; \
             the device coupling must preserve the free splitting",
            policy.sec_rel
        )));
    }
    let set = eigenop::decompose_with(&model.h_s, policy)
        .map_err(|e| QError::Degenerate(format!("system spectrum: {e}")))?;
    let dc = model.dim_c();
    let idc = CMat::identity(dc, dc);
    let mut channels = vec![];
    for (s_op, _e_op) in &model.couplings_se {
        for (op, omega, weight, label) in expand_coupling(&set, s_op, "se") {
            channels.push(Channel::new_static(
                op.kronecker(&idc),
                omega,
                spectral_rate(weight, bath, schedule),
                label,
            ));
        }
    }
    check_schedule_dims(schedule, channels.len(), layout.total_dim())?;
    Ok(Generator {
        layout,
        hamiltonian: Drive::Static(model.h_d()),
        lamb_shift: schedule.lamb_shift.clone(),
        channels,
        cross: schedule.cross.clone(),
        structure: StructureTag::LocalDevice,
    })
}

/// Reduced master equation on the system factor alone: jumps are the
/// eigenoperators of h_s picked out by the coupling operator.
pub fn build_local_system(
    h_s: &CMat,
    coupling: &CMat,
    bath: &BathSpectrum,
    schedule: &KineticSchedule,
) -> Result<Generator> {
    build_local_system_with(h_s, coupling, bath, schedule, &NumericPolicy::default())
}

pub fn build_local_system_with(
    h_s: &CMat,
    coupling: &CMat,
    bath: &BathSpectrum,
    schedule: &KineticSchedule,
    policy: &NumericPolicy,
) -> Result<Generator> {
    check_dim_cap(h_s.nrows(), policy)?;
    if coupling.nrows() != h_s.nrows() {
        return Err(QError::LayoutMismatch(format!(
            "coupling dim {} vs Hamiltonian dim {}",
            coupling.nrows(),
            h_s.nrows()
        )));
    }
    let set = eigenop::decompose_with(h_s, policy)?;
    let channels: Vec<Channel> = expand_coupling(&set, coupling, "s")
        .into_iter()
        .map(|(op, omega, weight, label)| {
            Channel::new_static(op, omega, spectral_rate(weight, bath, schedule), label)
        })
        .collect();
    check_schedule_dims(schedule, channels.len(), h_s.nrows())?;
    Ok(Generator {
        layout: HilbertLayout::single(h_s.nrows(), "S")?,
        hamiltonian: Drive::Static(h_s.clone()),
        lamb_shift: schedule.lamb_shift.clone(),
        channels,
        cross: schedule.cross.clone(),
        structure: StructureTag::LocalSystem,
    })
}

/// Device master equation in the global (dressed-basis) scheme: jumps are
/// dyads of the full device spectrum (including the internal coupling), so
/// the invariant operators commute with H_D rather than with H_S alone.
pub fn build_global_device(
    model: &GlobalModel,
    bath: &BathSpectrum,
    schedule: &KineticSchedule,
) -> Result<Generator> {
    build_global_device_with(model, bath, schedule, &NumericPolicy::default())
}

pub fn build_global_device_with(
    model: &GlobalModel,
    bath: &BathSpectrum,
    schedule: &KineticSchedule,
    policy: &NumericPolicy,
) -> Result<Generator> {
    let layout = model.layout_d();
    check_dim_cap(layout.total_dim(), policy)?;
    let d_de = model.sec_defect_de();
    if d_de > policy.sec_rel {
        return Err(QError::SecViolation(format!(
            "‖[H_DE, H_D + H_E]‖ / (‖H_DE‖‖H_D + H_E‖) = {d_de:.3e} exceeds {:.1e}; \
             the environment coupling must preserve the dressed splitting",
            policy.sec_rel
        )));
    }
    let h_d = model.h_d();
    let set = eigenop::decompose_with(&h_d, policy)
        .map_err(|e| QError::Degenerate(format!("dressed device spectrum: {e}")))?;
    let mut channels = vec![];
    for (d_op, _e_op) in &model.couplings_de {
        for (op, omega, weight, label) in expand_coupling(&set, d_op, "de") {
            channels.push(Channel::new_static(
                op,
                omega,
                spectral_rate(weight, bath, schedule),
                label,
            ));
        }
    }
    check_schedule_dims(schedule, channels.len(), layout.total_dim())?;
    Ok(Generator {
        layout,
        hamiltonian: Drive::Static(h_d),
        lamb_shift: schedule.lamb_shift.clone(),
        channels,
        cross: schedule.cross.clone(),
        structure: StructureTag::GlobalDevice,
    })
}

/// Driven-system master equation in the moving invariant frame: jumps follow
/// the frame dyads, rates track the instantaneous frequencies, and the
/// coherent part is the time-dependent control-averaged Hamiltonian. With a
/// static frame this reduces exactly to [`build_local_system`].
pub fn build_sc_global(
    frame: &InvariantFrame,
    coupling: &CMat,
    bath: &BathSpectrum,
    schedule: &KineticSchedule,
) -> Result<Generator> {
    build_sc_global_with(frame, coupling, bath, schedule, &NumericPolicy::default())
}

pub fn build_sc_global_with(
    frame: &InvariantFrame,
    coupling: &CMat,
    bath: &BathSpectrum,
    schedule: &KineticSchedule,
    policy: &NumericPolicy,
) -> Result<Generator> {
    let n = frame.dim();
    check_dim_cap(n, policy)?;
    if coupling.nrows() != n {
        return Err(QError::LayoutMismatch(format!(
            "coupling dim {} vs frame dim {}",
            coupling.nrows(),
            n
        )));
    }
    if frame.refinement_residual() > policy.grid_refine_tol {
        return Err(QError::GridTooCoarse(format!(
            "frame refinement residual {:.3e} exceeds {:.1e}; rebuild the frame on a finer grid",
            frame.refinement_residual(),
            policy.grid_refine_tol
        )));
    }
    let scale2 = linalg::max_abs(coupling).powi(2).max(1e-300);
    let mut channels = vec![];
    for (i, j) in frame.transition_pairs() {
        let f0 = frame.dyad_at(i, j, 0.0);
        let s = linalg::trace_of_product(&f0.adjoint(), coupling);
        let weight = s.norm_sqr();
        if weight <= 1e-24 * scale2 {
            continue;
        }
        let phase = s / cr(s.norm());
        let fr = frame.clone();
        let jump: TimeOperatorFn = Arc::new(move |t| fr.dyad_at(i, j, t) * phase);
        let fr2 = frame.clone();
        let omega_fn: TimeScalarFn = Arc::new(move |t| fr2.omega_at(i, j, t));
        channels.push(Channel::new_moving(
            jump,
            frame.omega_at(i, j, 0.0),
            omega_fn,
            spectral_rate(weight, bath, schedule),
            format!("sc:dyad{i}-{j}"),
        ));
    }
    // invariant sector: projector combinations move with the frame but stay
    // zero-frequency
    for j in 0..frame.invariant_count() {
        let r0 = frame.invariant_at(j, 0.0);
        let s = linalg::trace_of_product(&r0.adjoint(), coupling);
        let weight = s.norm_sqr();
        if weight <= 1e-24 * scale2 {
            continue;
        }
        let fr = frame.clone();
        let jump: TimeOperatorFn = Arc::new(move |t| fr.invariant_at(j, t));
        let omega_fn: TimeScalarFn = Arc::new(|_| 0.0);
        channels.push(Channel::new_moving(
            jump,
            0.0,
            omega_fn,
            spectral_rate(weight, bath, schedule),
            format!("sc:diag{j}"),
        ));
    }
    check_schedule_dims(schedule, channels.len(), n)?;
    let fr = frame.clone();
    let ham: TimeOperatorFn = Arc::new(move |t| fr.hamiltonian_at(t));
    Ok(Generator {
        layout: HilbertLayout::single(n, "S")?,
        hamiltonian: Drive::Driven(ham),
        lamb_shift: schedule.lamb_shift.clone(),
        channels,
        cross: schedule.cross.clone(),
        structure: StructureTag::ScGlobal,
    })
}

/// Time-independent detailed-balance generator: every transition dyad of h
/// becomes a channel with its spectrum-weighted rate, optionally filtered by
/// a coupling operator. The Gibbs state at the bath temperature is a fixed
/// point.
pub fn build_markovian(h: &CMat, coupling: Option<&CMat>, bath: &BathSpectrum) -> Result<Generator> {
    build_markovian_with(h, coupling, bath, &NumericPolicy::default())
}

pub fn build_markovian_with(
    h: &CMat,
    coupling: Option<&CMat>,
    bath: &BathSpectrum,
    policy: &NumericPolicy,
) -> Result<Generator> {
    check_dim_cap(h.nrows(), policy)?;
    let set = eigenop::decompose_with(h, policy)?;
    let schedule = KineticSchedule::default();
    let channels: Vec<Channel> = match coupling {
        Some(c) => expand_coupling(&set, c, "m")
            .into_iter()
            .map(|(op, omega, weight, label)| {
                Channel::new_static(op, omega, spectral_rate(weight, bath, &schedule), label)
            })
            .collect(),
        None => set
            .non_invariant
            .iter()
            .map(|op| {
                Channel::new_static(
                    op.op.clone(),
                    op.omega,
                    spectral_rate(1.0, bath, &schedule),
                    format!("m:dyad{}-{}", op.pair.0, op.pair.1),
                )
            })
            .collect(),
    };
    Ok(Generator {
        layout: HilbertLayout::single(h.nrows(), "S")?,
        hamiltonian: Drive::Static(h.clone()),
        lamb_shift: None,
        channels,
        cross: None,
        structure: StructureTag::Markovian,
    })
}

/// Fixed point(s) of the frozen generator L(t): unique stationary state, or
/// the full null-space basis when the kernel is degenerate.
#[derive(Clone, Debug)]
pub enum Attractor {
    Unique { state: CMat },
    Degenerate { null_dim: usize, basis: Vec<CMat> },
}

pub fn instantaneous_attractor(gen: &Generator, t: f64) -> Result<Attractor> {
    instantaneous_attractor_with(gen, t, &NumericPolicy::default())
}

pub fn instantaneous_attractor_with(
    gen: &Generator,
    t: f64,
    policy: &NumericPolicy,
) -> Result<Attractor> {
    let n = gen.dim();
    check_dim_cap(n * n, policy)?;
    let l = gen.superoperator(t);
    let gram = l.adjoint() * &l;
    let (vals, vecs) = linalg::eigh(&gram);
    let scale = linalg::max_abs(&l).max(1e-300);
    // eigenvalues of L^dag L carry absolute rounding noise of order
    // eps * ||L||^2, which swamps a (1e-10 * scale)^2 cutoff; screen loosely
    // on the eigenvalue, then classify by the direct residual ||L v||, which
    // sits at machine level for a true kernel vector
    let screen = (1e-6 * scale).powi(2);
    let residual_tol = 1e-10 * scale;
    let mut null_idx: Vec<usize> = Vec::new();
    let mut best_residual = f64::INFINITY;
    for k in 0..vals.len() {
        if vals[k] > screen {
            continue;
        }
        let lv = &l * vecs.column(k);
        let res = lv.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        best_residual = best_residual.min(res);
        if res <= residual_tol {
            null_idx.push(k);
        }
    }
    if null_idx.is_empty() {
        let reported = if best_residual.is_finite() {
            best_residual
        } else {
            vals[0].max(0.0).sqrt()
        };
        return Err(QError::Invalid(format!(
            "no stationary state at t = {t}: smallest singular value {reported:.3e}"
        )));
    }
    let unvec = |col: usize| -> CMat {
        let mut m = CMat::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] = vecs[(j * n + i, col)];
            }
        }
        m
    };
    if null_idx.len() == 1 {
        let m = unvec(null_idx[0]);
        let herm = (&m + &m.adjoint()) * cr(0.5);
        let tr = linalg::trace(&herm).re;
        if tr.abs() < 1e-12 * linalg::max_abs(&herm).max(1e-300) {
            return Err(QError::DegenerateAttractor { null_dim: 1 });
        }
        Ok(Attractor::Unique {
            state: herm * cr(1.0 / tr),
        })
    } else {
        Ok(Attractor::Degenerate {
            null_dim: null_idx.len(),
            basis: null_idx
                .into_iter()
                .map(|k| {
                    let m = unvec(k);
                    let herm = (&m + &m.adjoint()) * cr(0.5);
                    let norm = linalg::max_abs(&herm).max(1e-300);
                    herm * cr(1.0 / norm)
                })
                .collect(),
        })
    }
}

/// Coherent/dissipative split of a generator at time t, for flux
/// bookkeeping: bare Hamiltonian, Lamb shift, and their commutation defects
/// against a reference operator.
#[derive(Clone, Debug)]
pub struct ThermoSplit {
    pub hamiltonian: CMat,
    pub lamb_shift: CMat,
}

pub fn thermo_split(gen: &Generator, t: f64) -> ThermoSplit {
    let n = gen.dim();
    ThermoSplit {
        hamiltonian: gen.hamiltonian_at(t),
        lamb_shift: gen
            .lamb_shift
            .clone()
            .unwrap_or_else(|| CMat::zeros(n, n)),
    }
}

/// Convenience: amplitude-damping channels (lowering + raising with
/// detailed-balance rates) for a qubit with splitting omega.
pub fn qubit_damping_channels(omega: f64, bath: &BathSpectrum) -> Vec<Channel> {
    vec![
        Channel::new_static(
            states::sigma_minus(),
            omega,
            RateFn::Const(bath.eval(omega)),
            "qubit:down",
        ),
        Channel::new_static(
            states::sigma_plus(),
            -omega,
            RateFn::Const(bath.eval(-omega)),
            "qubit:up",
        ),
    ]
}
