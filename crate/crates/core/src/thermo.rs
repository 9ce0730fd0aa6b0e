//! Thermodynamic bookkeeping. Every flux definition computed by this module
//! is a trace functional of a state and a generator (or a composite
//! trajectory); work and heat follow by quadrature, and the first-law audit
//! cross-checks the competing conventions against each other.
//!
//! Sign conventions used throughout: work is positive when the control
//! (battery) loses energy, heat is positive when energy flows from the
//! environment into the accounted system. Natural units: hbar = k_B = 1.

use crate::error::{QError, Result};
use crate::generator::{instantaneous_attractor_with, Attractor, Generator, StructureTag};
use crate::linalg::{self, CMat};
use crate::model::{thermal_state, GlobalModel, LocalModel};
use crate::operator::{partial_trace_op, HilbertLayout, Operator};
use crate::policy::NumericPolicy;
use crate::propagate::Trajectory;
use crate::semiclassical::{InvariantFrame, ScHamiltonian};
use std::fmt;

/// The competing first-law bookkeeping schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Approach {
    AutonomousLocal,
    AutonomousGlobal,
    Semiclassical,
    ScGlobal,
    ExternalOriginal,
    ExternalModified,
    DynamicalMap,
}

impl Approach {
    pub const ALL: [Approach; 7] = [
        Approach::AutonomousLocal,
        Approach::AutonomousGlobal,
        Approach::Semiclassical,
        Approach::ScGlobal,
        Approach::ExternalOriginal,
        Approach::ExternalModified,
        Approach::DynamicalMap,
    ];

    pub fn parse(name: &str) -> Option<Approach> {
        Approach::ALL
            .iter()
            .copied()
            .find(|a| a.to_string() == name)
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Approach::AutonomousLocal => "autonomous-local",
            Approach::AutonomousGlobal => "autonomous-global",
            Approach::Semiclassical => "semiclassical",
            Approach::ScGlobal => "sc-global",
            Approach::ExternalOriginal => "external-original",
            Approach::ExternalModified => "external-modified",
            Approach::DynamicalMap => "dynamical-map",
        };
        f.write_str(s)
    }
}

/// Single-time flux triple of one approach.
#[derive(Clone, Copy, Debug)]
pub struct FluxRecord {
    pub t: f64,
    pub e_s_dot: f64,
    pub power: f64,
    pub q_dot: f64,
}

/// Flux columns of one approach over a shared time grid.
#[derive(Clone, Debug)]
pub struct ApproachSeries {
    pub approach: Approach,
    pub e_s_dot: Vec<f64>,
    pub power: Vec<f64>,
    pub q_dot: Vec<f64>,
    /// interface (system-control) energy flux, where the approach defines one
    pub phi: Option<Vec<f64>>,
}

impl ApproachSeries {
    pub fn new(approach: Approach) -> Self {
        ApproachSeries {
            approach,
            e_s_dot: vec![],
            power: vec![],
            q_dot: vec![],
            phi: None,
        }
    }

    pub fn push(&mut self, rec: FluxRecord) {
        self.e_s_dot.push(rec.e_s_dot);
        self.power.push(rec.power);
        self.q_dot.push(rec.q_dot);
    }

    pub fn len(&self) -> usize {
        self.e_s_dot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_s_dot.is_empty()
    }

    /// max_t |Ė_S − 𝒫 − Q̇|: the differential first law should hold
    /// pointwise for every approach.
    pub fn pointwise_residual(&self) -> f64 {
        self.e_s_dot
            .iter()
            .zip(&self.power)
            .zip(&self.q_dot)
            .fold(0.0f64, |m, ((e, p), q)| m.max((e - p - q).abs()))
    }
}

/// Integrated ledger of one approach.
#[derive(Clone, Copy, Debug)]
pub struct FluxTotals {
    pub delta_e_s: f64,
    pub work: f64,
    pub heat: f64,
    /// |ΔE_S − W − Q|
    pub residual: f64,
}

/// Fluxes of several approaches on one shared grid.
#[derive(Clone, Debug)]
pub struct FluxSeries {
    pub times: Vec<f64>,
    pub entries: Vec<ApproachSeries>,
}

impl FluxSeries {
    pub fn new(times: Vec<f64>) -> Self {
        FluxSeries {
            times,
            entries: vec![],
        }
    }

    pub fn insert(&mut self, series: ApproachSeries) -> Result<()> {
        if series.len() != self.times.len() {
            return Err(QError::Invalid(format!(
                "series for {} has {} samples, grid has {}",
                series.approach,
                series.len(),
                self.times.len()
            )));
        }
        if let Some(phi) = &series.phi {
            if phi.len() != self.times.len() {
                return Err(QError::Invalid("interface-flux column length mismatch".into()));
            }
        }
        self.entries.retain(|e| e.approach != series.approach);
        self.entries.push(series);
        Ok(())
    }

    pub fn get(&self, approach: Approach) -> Option<&ApproachSeries> {
        self.entries.iter().find(|e| e.approach == approach)
    }

    fn uniform_step(&self) -> Result<f64> {
        if self.times.len() < 3 {
            return Err(QError::Invalid("need at least 3 samples to integrate".into()));
        }
        let dt = self.times[1] - self.times[0];
        for w in self.times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-300) {
                return Err(QError::Invalid("quadrature requires a uniform grid".into()));
            }
        }
        Ok(dt)
    }

    /// Simpson quadrature of the flux columns.
    pub fn integrated(&self, approach: Approach) -> Result<FluxTotals> {
        let dt = self.uniform_step()?;
        let s = self
            .get(approach)
            .ok_or_else(|| QError::UnknownLabel(approach.to_string()))?;
        let delta_e_s = linalg::simpson(&s.e_s_dot, dt);
        let work = linalg::simpson(&s.power, dt);
        let heat = linalg::simpson(&s.q_dot, dt);
        Ok(FluxTotals {
            delta_e_s,
            work,
            heat,
            residual: (delta_e_s - work - heat).abs(),
        })
    }
}

fn embed_label(layout: &HilbertLayout, label: &str, m: &CMat) -> Result<CMat> {
    let single = HilbertLayout::single(m.nrows(), label)?;
    let op = Operator::new(single, m.clone())?;
    Ok(op.embed(layout)?.entries)
}

fn re_tr(a: &CMat, b: &CMat) -> f64 {
    linalg::trace_of_product(a, b).re
}

// ---------------------------------------------------------------------------
// autonomous definitions (state functionals on composite trajectories)
// ---------------------------------------------------------------------------

/// Work as the negative energy change of the control/battery:
/// 𝒲 = −tr(H_C [ρ(t_f) − ρ(0)]). `h_c` lives on the control factor.
pub fn autonomous_work(traj: &Trajectory, h_c: &CMat) -> Result<f64> {
    if traj.is_empty() {
        return Err(QError::Invalid("empty trajectory".into()));
    }
    let h = embed_label(&traj.layout, "C", h_c)?;
    let first = traj.states.first().unwrap();
    let last = traj.states.last().unwrap();
    Ok(-(re_tr(&h, last) - re_tr(&h, first)))
}

#[derive(Clone, Copy, Debug)]
pub struct HeatPair {
    /// ΔE_S − 𝒲 (first-law residual definition, always available)
    pub general: f64,
    /// −ΔE_E (energy counted at the environment; needs an "E" factor)
    pub local: Option<f64>,
}

/// Heat over a composite trajectory. The general form charges everything
/// that is not battery-energy change to heat; the local form reads the
/// environment energy directly and agrees under strict energy conservation.
pub fn autonomous_heat(
    traj: &Trajectory,
    h_s: &CMat,
    h_c: &CMat,
    h_e: Option<&CMat>,
) -> Result<HeatPair> {
    if traj.is_empty() {
        return Err(QError::Invalid("empty trajectory".into()));
    }
    let work = autonomous_work(traj, h_c)?;
    let hs = embed_label(&traj.layout, "S", h_s)?;
    let first = traj.states.first().unwrap();
    let last = traj.states.last().unwrap();
    let delta_e_s = re_tr(&hs, last) - re_tr(&hs, first);
    let local = match h_e {
        Some(he) => {
            let he = embed_label(&traj.layout, "E", he)?;
            Some(-(re_tr(&he, last) - re_tr(&he, first)))
        }
        None => None,
    };
    Ok(HeatPair {
        general: delta_e_s - work,
        local,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct LocalPower {
    /// (i)⟨[H_C, H_SC]⟩
    pub from_control: f64,
    /// −(i)⟨[H_S, H_SC]⟩
    pub from_system: f64,
}

/// Instantaneous power in the tandem (local) setup, evaluated through both
/// commutator forms. The two agree exactly when the system-control coupling
/// conserves H_S + H_C; a disagreement is diagnosed as an energy-conservation
/// violation of the model.
pub fn autonomous_local_power_flux(rho: &CMat, model: &LocalModel) -> Result<LocalPower> {
    let dim_d = model.dim_s() * model.dim_c();
    let dim_full = dim_d * model.dim_e();
    let ic = CMat::identity(model.dim_c(), model.dim_c());
    let is = CMat::identity(model.dim_s(), model.dim_s());
    let (h_c, h_s, h_sc) = if rho.nrows() == dim_d {
        (
            is.kronecker(&model.h_c),
            model.h_s.kronecker(&ic),
            model.h_sc(),
        )
    } else if rho.nrows() == dim_full {
        let ie = CMat::identity(model.dim_e(), model.dim_e());
        (
            is.kronecker(&model.h_c).kronecker(&ie),
            model.h_s.kronecker(&ic).kronecker(&ie),
            model.h_sc().kronecker(&ie),
        )
    } else {
        return Err(QError::LayoutMismatch(format!(
            "state dim {} matches neither the device ({dim_d}) nor the composite ({dim_full})",
            rho.nrows()
        )));
    };
    // i tr([A, H_SC] ρ): real part of i z is −Im z
    let zc = linalg::trace_of_product(&(&h_c * &h_sc - &h_sc * &h_c), rho);
    let zs = linalg::trace_of_product(&(&h_s * &h_sc - &h_sc * &h_s), rho);
    let from_control = -zc.im;
    let from_system = zs.im;
    let scale = from_control.abs().max(from_system.abs()).max(1e-12);
    if (from_control - from_system).abs() > 1e-9 * scale.max(1.0) {
        return Err(QError::SecViolation(format!(
            "the two commutator forms of the power disagree ({from_control:.6e} vs \
             {from_system:.6e}); the system-control coupling does not conserve H_S + H_C"
        )));
    }
    Ok(LocalPower {
        from_control,
        from_system,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct HeatForms {
    /// tr(H 𝒟(t)[ρ])
    pub dissipative: f64,
    /// −Σ_α ω_α r_α(t) ⟨F_α†F_α⟩
    pub channel: f64,
}

/// Heat flux into the system from its dissipator, in both the operator form
/// and the frequency-resolved channel form. The generator's Hamiltonian is
/// the energy being tracked.
pub fn autonomous_local_heat_flux(gen: &Generator, rho: &CMat, t: f64) -> Result<HeatForms> {
    if rho.nrows() != gen.dim() {
        return Err(QError::LayoutMismatch(format!(
            "state dim {} vs generator dim {}",
            rho.nrows(),
            gen.dim()
        )));
    }
    let h = gen.hamiltonian_at(t);
    let diss = gen.dissipator(t, rho);
    let dissipative = re_tr(&h, &diss);
    let mut channel = 0.0;
    for ch in &gen.channels {
        let omega = ch.omega_at(t);
        if omega == 0.0 {
            continue;
        }
        let f = ch.jump_at(t);
        let occ = re_tr(&(f.adjoint() * &f), rho);
        channel -= omega * ch.rate_at(t) * occ;
    }
    let scale = dissipative.abs().max(channel.abs()).max(1.0);
    if gen.cross.is_none() && (dissipative - channel).abs() > 1e-9 * scale {
        return Err(QError::Invalid(format!(
            "dissipative ({dissipative:.6e}) and channel ({channel:.6e}) heat-flux forms \
             disagree; the generator's jumps are not frequency-resolved eigenoperators"
        )));
    }
    Ok(HeatForms {
        dissipative,
        channel,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct GlobalFluxes {
    pub e_s_dot: f64,
    pub power: f64,
    pub q_dot: f64,
    /// interface energy flux tr(H_SC ℒ[ρ_D])
    pub phi: f64,
    /// −Σ_κ ν_κ g_κ ⟨G_κ†G_κ⟩ − Φ (frequency-resolved route)
    pub q_dot_channel: f64,
}

/// Fluxes in the global-coupling setup where the environment addresses the
/// dressed device. Heat is counted at the bare system-plus-control energy,
/// so the interface term is charged to heat, not work.
pub fn autonomous_global_fluxes(
    gen: &Generator,
    model: &GlobalModel,
    rho_d: &CMat,
    t: f64,
) -> Result<GlobalFluxes> {
    let dim_d = model.dim_s() * model.dim_c();
    if rho_d.nrows() != dim_d || gen.dim() != dim_d {
        return Err(QError::LayoutMismatch(format!(
            "device dim {dim_d}, state {}, generator {}",
            rho_d.nrows(),
            gen.dim()
        )));
    }
    let is = CMat::identity(model.dim_s(), model.dim_s());
    let ic = CMat::identity(model.dim_c(), model.dim_c());
    let h_s = model.h_s.kronecker(&ic);
    let h_c = is.kronecker(&model.h_c);
    let app = gen.apply(t, rho_d);
    let e_s_dot = re_tr(&h_s, &app);
    let power = -re_tr(&h_c, &app);
    let q_dot = re_tr(&(&h_s + &h_c), &app);
    let phi = re_tr(&model.h_sc_g, &app);
    let mut channel = 0.0;
    for ch in &gen.channels {
        let omega = ch.omega_at(t);
        if omega == 0.0 {
            continue;
        }
        let f = ch.jump_at(t);
        channel -= omega * ch.rate_at(t) * re_tr(&(f.adjoint() * &f), rho_d);
    }
    let q_dot_channel = channel - phi;
    let scale = q_dot.abs().max(q_dot_channel.abs()).max(1.0);
    if (q_dot - q_dot_channel).abs() > 1e-9 * scale {
        return Err(QError::Invalid(format!(
            "operator ({q_dot:.6e}) and channel ({q_dot_channel:.6e}) heat-flux routes \
             disagree; jumps are not dressed-basis eigenoperators"
        )));
    }
    Ok(GlobalFluxes {
        e_s_dot,
        power,
        q_dot,
        phi,
        q_dot_channel,
    })
}

// ---------------------------------------------------------------------------
// semiclassical / driven definitions
// ---------------------------------------------------------------------------

/// Fluxes in the classical-field description: power is the expectation of
/// the explicit time derivative of the driven Hamiltonian, system energy is
/// tracked at the static part only, heat closes the first law. `gen` carries
/// the dissipative part; `None` means closed (driven-unitary) evolution.
pub fn semiclassical_fluxes(
    sc: &ScHamiltonian,
    gen: Option<&Generator>,
    rho: &CMat,
    t: f64,
) -> Result<FluxRecord> {
    if rho.nrows() != sc.dim() {
        return Err(QError::LayoutMismatch(format!(
            "state dim {} vs driven Hamiltonian dim {}",
            rho.nrows(),
            sc.dim()
        )));
    }
    let power = re_tr(&sc.power_operator(t), rho);
    let app = match gen {
        Some(g) => {
            if g.dim() != sc.dim() {
                return Err(QError::LayoutMismatch(
                    "generator dimension differs from the driven Hamiltonian".into(),
                ));
            }
            g.apply(t, rho)
        }
        None => {
            let h = sc.at(t);
            let comm = &h * rho - rho * &h;
            comm * -linalg::I
        }
    };
    let e_s_dot = re_tr(&sc.h_s, &app);
    Ok(FluxRecord {
        t,
        e_s_dot,
        power,
        q_dot: e_s_dot - power,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ScGlobalHeat {
    /// tr((X(t) − 𝐇_SC(t)) ℒ[ρ])
    pub operator_form: f64,
    /// −Σ_α ω_α c_αα(t) ⟨F_α†(t)F_α(t)⟩ − Φ
    pub channel_form: f64,
    /// Φ(t) = tr(𝐇_SC(t) ℒ[ρ]) with 𝐇_SC(t) = H(t) − H(0)
    pub phi: f64,
    /// operator_form − channel_form = −i⟨[X, H(t)]⟩; nonzero only when the
    /// state carries coherences in the co-moving eigenbasis
    pub coherence_residual: f64,
}

/// Heat flux in the driven-global description: energy is counted along the
/// co-moving invariant X(t) = Σ_j ε_j |φ_j(t)⟩⟨φ_j(t)| instead of a static
/// Hamiltonian, minus the interface term. Both the operator and the
/// frequency-resolved routes are evaluated; for states diagonal in the
/// moving frame they must agree to rounding and a disagreement is an error.
pub fn sc_global_heat_flux(
    frame: &InvariantFrame,
    gen: &Generator,
    rho: &CMat,
    t: f64,
) -> Result<ScGlobalHeat> {
    if rho.nrows() != frame.dim() || gen.dim() != frame.dim() {
        return Err(QError::LayoutMismatch(format!(
            "state {}, generator {}, frame {}",
            rho.nrows(),
            gen.dim(),
            frame.dim()
        )));
    }
    let x = frame.x_operator_at(t);
    let h_sc_moving = frame.hamiltonian_at(t) - &frame.sc_hamiltonian().h_s;
    let app = gen.apply(t, rho);
    let phi = re_tr(&h_sc_moving, &app);
    let operator_form = re_tr(&(&x - &h_sc_moving), &app);
    let mut channel = 0.0;
    for ch in &gen.channels {
        // static effective quanta: the co-moving dyads keep their t = 0
        // eigenvalue difference
        if ch.omega == 0.0 {
            continue;
        }
        let f = ch.jump_at(t);
        channel -= ch.omega * ch.rate_at(t) * re_tr(&(f.adjoint() * &f), rho);
    }
    let channel_form = channel - phi;
    let coherence_residual = operator_form - channel_form;
    // the routes split only by −i⟨[X, H]⟩, which vanishes for states that
    // commute with the invariant
    let comm_xr = linalg::max_abs(&(&x * rho - rho * &x));
    let scale = linalg::max_abs(&x).max(1e-300) * linalg::max_abs(rho).max(1e-300);
    if comm_xr <= 1e-8 * scale
        && coherence_residual.abs() > 1e-9 * operator_form.abs().max(channel_form.abs()).max(1.0)
    {
        return Err(QError::Invalid(format!(
            "heat-flux routes disagree by {coherence_residual:.3e} on a frame-diagonal state; \
             generator channels are not co-moving eigenoperators of the frame"
        )));
    }
    Ok(ScGlobalHeat {
        operator_form,
        channel_form,
        phi,
        coherence_residual,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ExternalFluxes {
    /// d/dt tr(H(t) ρ): counts the drive term as system energy
    pub e_s_dot_original: f64,
    /// static-part energy flux tr(H(0) ℒ[ρ])
    pub e_s_dot_modified: f64,
    pub power_original: f64,
    pub power_modified: f64,
    /// −Σ_α ω_α^e(t) G(ω_α^e(t)) ⟨F_α†F_α⟩ with ω^e the instantaneous phase
    /// velocity of each transition
    pub q_dot: f64,
    pub phi: f64,
}

/// Fluxes as an external observer books them: heat quanta are weighed by the
/// instantaneous transition frequencies ω^e(t) (numerically differentiated
/// eigenframe phases), and the original/modified energy accounting differ by
/// the interface flux Φ.
pub fn external_fluxes(gen: &Generator, rho: &CMat, t: f64) -> Result<ExternalFluxes> {
    if rho.nrows() != gen.dim() {
        return Err(QError::LayoutMismatch(format!(
            "state dim {} vs generator dim {}",
            rho.nrows(),
            gen.dim()
        )));
    }
    if !matches!(
        gen.structure,
        StructureTag::ScGlobal | StructureTag::LocalSystem | StructureTag::Markovian
    ) {
        return Err(QError::Invalid(format!(
            "external accounting needs a system-space generator, got {}",
            gen.structure
        )));
    }
    let app = gen.apply(t, rho);
    let h0 = gen.hamiltonian_at(0.0);
    let e_s_dot_modified = re_tr(&h0, &app);
    let phi = re_tr(&(gen.hamiltonian_at(t) - &h0), &app);
    let e_s_dot_original = e_s_dot_modified + phi;
    let mut q_dot = 0.0;
    for ch in &gen.channels {
        let omega_e = ch.omega_at(t);
        if omega_e == 0.0 {
            continue;
        }
        let f = ch.jump_at(t);
        q_dot -= omega_e * ch.rate_at(t) * re_tr(&(f.adjoint() * &f), rho);
    }
    Ok(ExternalFluxes {
        e_s_dot_original,
        e_s_dot_modified,
        power_original: e_s_dot_original - q_dot,
        power_modified: e_s_dot_modified - q_dot,
        q_dot,
        phi,
    })
}

#[derive(Clone, Debug)]
pub struct DmHeat {
    /// −(1/β) tr(ℒ[ρ] ln ρ_attractor); None when the attractor is degenerate
    pub general: Option<f64>,
    /// (1/β) Σ_α G_α ln(G_{−α}/G_α) ⟨F_α†F_α⟩
    pub channel: f64,
    /// −Σ_α ω_α G_α ⟨F_α†F_α⟩ (valid under detailed balance)
    pub detailed_balance: f64,
    /// whether the rates satisfied G_{−α} = e^{−βω_α}G_α at this instant
    pub detailed_balance_holds: bool,
}

/// Heat flux defined through the entropy production of a Markovian map.
/// All three printed forms are evaluated; under detailed balance they agree
/// and this is asserted.
pub fn dynamical_map_heat_flux(gen: &Generator, rho: &CMat, t: f64, beta: f64) -> Result<DmHeat> {
    dynamical_map_heat_flux_with(gen, rho, t, beta, &NumericPolicy::default())
}

pub fn dynamical_map_heat_flux_with(
    gen: &Generator,
    rho: &CMat,
    t: f64,
    beta: f64,
    policy: &NumericPolicy,
) -> Result<DmHeat> {
    if rho.nrows() != gen.dim() {
        return Err(QError::LayoutMismatch(format!(
            "state dim {} vs generator dim {}",
            rho.nrows(),
            gen.dim()
        )));
    }
    if beta <= 0.0 {
        return Err(QError::Invalid("inverse temperature must be positive".into()));
    }
    struct Ch {
        f: CMat,
        omega: f64,
        rate: f64,
    }
    let mut chans = vec![];
    let mut rate_scale = 0.0f64;
    for ch in &gen.channels {
        let omega = ch.omega_at(t);
        if omega == 0.0 {
            continue;
        }
        let rate = ch.rate_at(t);
        rate_scale = rate_scale.max(rate.abs());
        chans.push(Ch {
            f: ch.jump_at(t),
            omega,
            rate,
        });
    }
    for c in &chans {
        if c.rate < -1e-12 * rate_scale.max(1.0) {
            return Err(QError::NegativeRate {
                rate: c.rate,
                channel: format!("transition at frequency {:.6e} at t = {t}", c.omega),
            });
        }
    }
    // pair each channel with its reverse (F† at −ω) to read off G_{−α}
    let reverse_rate = |idx: usize| -> f64 {
        let me = &chans[idx];
        let fd = me.f.adjoint();
        let fscale = linalg::max_abs(&me.f).max(1e-300);
        for (j, other) in chans.iter().enumerate() {
            if j == idx {
                continue;
            }
            if (other.omega + me.omega).abs() <= 1e-9 * me.omega.abs()
                && linalg::max_abs(&(&other.f - &fd)) <= 1e-9 * fscale
            {
                return other.rate;
            }
        }
        0.0
    };
    let kbt = 1.0 / beta;
    let mut channel = 0.0;
    let mut db = 0.0;
    let mut db_holds = true;
    let floor = policy.ln_floor;
    for (i, c) in chans.iter().enumerate() {
        let occ = re_tr(&(c.f.adjoint() * &c.f), rho);
        db -= c.omega * c.rate * occ;
        let g_rev = reverse_rate(i);
        if c.rate > floor {
            channel += kbt * c.rate * (g_rev.max(floor) / c.rate).ln() * occ;
        }
        let db_expected = c.rate * (-beta * c.omega).exp();
        if (g_rev - db_expected).abs() > 1e-9 * rate_scale.max(1e-300) {
            db_holds = false;
        }
    }
    let app = gen.apply(t, rho);
    let general = match instantaneous_attractor_with(gen, t, policy)? {
        Attractor::Unique { state } => {
            let (ln_ia, _) = linalg::ln_hermitian_floored(&state, floor);
            Some(-kbt * re_tr(&app, &ln_ia))
        }
        Attractor::Degenerate { .. } => None,
    };
    if db_holds {
        let scale = channel.abs().max(db.abs()).max(1.0);
        if (channel - db).abs() > 1e-8 * scale {
            return Err(QError::Invalid(format!(
                "detailed balance holds but channel ({channel:.6e}) and balance \
                 ({db:.6e}) heat forms disagree"
            )));
        }
        if let Some(g) = general {
            if (g - db).abs() > 1e-6 * scale {
                return Err(QError::Invalid(format!(
                    "attractor-based heat {g:.6e} disagrees with the detailed-balance \
                     form {db:.6e}"
                )));
            }
        }
    }
    Ok(DmHeat {
        general,
        channel,
        detailed_balance: db,
        detailed_balance_holds: db_holds,
    })
}

// ---------------------------------------------------------------------------
// entropy functionals
// ---------------------------------------------------------------------------

fn vn_entropy(m: &CMat, policy: &NumericPolicy) -> Result<f64> {
    let (vals, _) = linalg::eigh(m);
    let mut s = 0.0;
    for &p in &vals {
        if p < -policy.psd_tol {
            return Err(QError::InvalidState(format!(
                "negative population {p:e} in entropy evaluation"
            )));
        }
        if p > policy.ln_floor {
            s -= p * p.ln();
        }
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug)]
pub struct EntropySuite {
    pub s_vn: f64,
    /// Shannon entropy of the populations of the energy-level clusters
    pub s_energy: f64,
    /// S_E − S_VN; nonnegative when the reference spectrum is nondegenerate
    pub coherence: f64,
}

/// Von Neumann entropy, energy-basis (observational) entropy with respect to
/// a reference Hamiltonian, and the coherence measure given by their gap.
pub fn entropy_suite(rho: &CMat, h: &CMat) -> Result<EntropySuite> {
    entropy_suite_with(rho, h, &NumericPolicy::default())
}

pub fn entropy_suite_with(rho: &CMat, h: &CMat, policy: &NumericPolicy) -> Result<EntropySuite> {
    if rho.nrows() != h.nrows() {
        return Err(QError::LayoutMismatch(format!(
            "state dim {} vs reference dim {}",
            rho.nrows(),
            h.nrows()
        )));
    }
    let s_vn = vn_entropy(rho, policy)?;
    let (vals, vecs) = linalg::eigh(h);
    let clusters = crate::eigenop::cluster_levels(&vals, policy);
    let mut s_energy = 0.0;
    for cluster in &clusters {
        let mut p = 0.0;
        for &k in cluster {
            let col = vecs.column(k);
            let mut z = 0.0;
            for a in 0..rho.nrows() {
                for b in 0..rho.nrows() {
                    z += (col[a].conj() * rho[(a, b)] * col[b]).re;
                }
            }
            p += z;
        }
        if p > policy.ln_floor {
            s_energy -= p * p.ln();
        }
    }
    Ok(EntropySuite {
        s_vn,
        s_energy,
        coherence: s_energy - s_vn,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct EntropyProduction {
    /// I(S:E) + D(ρ_E' ‖ ρ_E(0))
    pub sigma: f64,
    pub mutual_info: f64,
    pub env_relative_entropy: f64,
    /// ΔS_S + β ΔE_E, available when the environment started thermal
    pub thermal_shortcut: Option<f64>,
}

/// Entropy produced between the first and last node of a composite
/// trajectory, split into correlation loss and environment-state change.
/// The initial state must be a product across the system/environment cut.
pub fn entropy_production(
    traj: &Trajectory,
    sys_labels: &[&str],
    env_labels: &[&str],
    h_e: &CMat,
    beta: f64,
) -> Result<EntropyProduction> {
    entropy_production_with(traj, sys_labels, env_labels, h_e, beta, &NumericPolicy::default())
}

pub fn entropy_production_with(
    traj: &Trajectory,
    sys_labels: &[&str],
    env_labels: &[&str],
    h_e: &CMat,
    beta: f64,
    policy: &NumericPolicy,
) -> Result<EntropyProduction> {
    if traj.len() < 2 {
        return Err(QError::Invalid("trajectory needs at least two nodes".into()));
    }
    let keep: Vec<&str> = sys_labels.iter().chain(env_labels.iter()).copied().collect();
    let cut = |state: &CMat| -> Result<(CMat, CMat, CMat)> {
        let op = Operator::new(traj.layout.clone(), state.clone())?;
        let se = partial_trace_op(&op, &keep)?;
        let s = partial_trace_op(&se, sys_labels)?;
        let e = partial_trace_op(&se, env_labels)?;
        Ok((se.entries, s.entries, e.entries))
    };
    let (se0, s0, e0) = cut(traj.states.first().unwrap())?;
    let (se1, s1, e1) = cut(traj.states.last().unwrap())?;
    if h_e.nrows() != e0.nrows() {
        return Err(QError::LayoutMismatch(format!(
            "environment Hamiltonian dim {} vs traced factor {}",
            h_e.nrows(),
            e0.nrows()
        )));
    }
    let product = s0.kronecker(&e0);
    let scale = linalg::max_abs(&se0).max(1e-300);
    if linalg::max_abs(&(&se0 - product)) > 1e-8 * scale {
        return Err(QError::InvalidState(
            "initial state is not a product across the system/environment cut".into(),
        ));
    }
    let mutual_info = vn_entropy(&s1, policy)? + vn_entropy(&e1, policy)? - vn_entropy(&se1, policy)?;
    let (ln_e0, _) = linalg::ln_hermitian_floored(&e0, policy.ln_floor);
    let env_relative_entropy = -vn_entropy(&e1, policy)? - re_tr(&e1, &ln_e0);
    let sigma = mutual_info + env_relative_entropy;
    let thermal_shortcut = match thermal_state(h_e, beta) {
        Ok(th) if linalg::trace_distance(th.entries(), &e0) < 1e-8 => {
            let delta_s_s = vn_entropy(&s1, policy)? - vn_entropy(&s0, policy)?;
            let delta_e_e = re_tr(h_e, &e1) - re_tr(h_e, &e0);
            Some(delta_s_s + beta * delta_e_e)
        }
        _ => None,
    };
    Ok(EntropyProduction {
        sigma,
        mutual_info,
        env_relative_entropy,
        thermal_shortcut,
    })
}

/// Entropy-production rate of a Markovian generator at a state:
/// Σ = tr(ℒ[ρ](ln ρ_attractor − ln ρ)) ≥ 0 for strictly Markovian maps.
pub fn spohn_functional(gen: &Generator, rho: &CMat, t: f64) -> Result<f64> {
    spohn_functional_with(gen, rho, t, &NumericPolicy::default())
}

pub fn spohn_functional_with(
    gen: &Generator,
    rho: &CMat,
    t: f64,
    policy: &NumericPolicy,
) -> Result<f64> {
    let ia = match instantaneous_attractor_with(gen, t, policy)? {
        Attractor::Unique { state } => state,
        Attractor::Degenerate { null_dim, .. } => {
            return Err(QError::DegenerateAttractor { null_dim })
        }
    };
    let app = gen.apply(t, rho);
    let (ln_ia, _) = linalg::ln_hermitian_floored(&ia, policy.ln_floor);
    let (ln_rho, _) = linalg::ln_hermitian_floored(rho, policy.ln_floor);
    Ok(re_tr(&app, &(&ln_ia - &ln_rho)))
}

/// Entropy-production rate in the tandem setup, where a steady energy
/// current from the control through the system adds −β Ė_C to the plain
/// relative-entropy contraction toward the thermal reference.
pub fn local_entropy_production_rate(
    gen: &Generator,
    rho: &CMat,
    t: f64,
    rho_thermal: &CMat,
    beta: f64,
    e_c_dot: f64,
) -> Result<f64> {
    local_entropy_production_rate_with(gen, rho, t, rho_thermal, beta, e_c_dot, &NumericPolicy::default())
}

pub fn local_entropy_production_rate_with(
    gen: &Generator,
    rho: &CMat,
    t: f64,
    rho_thermal: &CMat,
    beta: f64,
    e_c_dot: f64,
    policy: &NumericPolicy,
) -> Result<f64> {
    if rho.nrows() != gen.dim() || rho_thermal.nrows() != gen.dim() {
        return Err(QError::LayoutMismatch("state/reference dim mismatch".into()));
    }
    let app = gen.apply(t, rho);
    let (ln_th, _) = linalg::ln_hermitian_floored(rho_thermal, policy.ln_floor);
    let (ln_rho, _) = linalg::ln_hermitian_floored(rho, policy.ln_floor);
    Ok(re_tr(&app, &(&ln_th - &ln_rho)) - beta * e_c_dot)
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct AuditEntry {
    pub approach: Approach,
    pub totals: FluxTotals,
    pub pointwise_residual: f64,
    pub pass: bool,
    /// set when flipping the sign of W or Q would have fixed the budget —
    /// the classic symptom of a convention error
    pub sign_flip_suspected: bool,
}

#[derive(Clone, Debug)]
pub struct CrossCheck {
    pub name: String,
    pub max_residual: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub cross_checks: Vec<CrossCheck>,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass) && self.cross_checks.iter().all(|c| c.pass)
    }
}

/// Audit the integrated first law per approach (|ΔE_S − W − Q| ≤ tol) and
/// the inter-approach identities that are computable from the stored
/// columns. `cross_tol` bounds the regime-dependent relations.
pub fn first_law_audit(flux: &FluxSeries, tol: f64, cross_tol: f64) -> Result<AuditReport> {
    let mut entries = vec![];
    for s in &flux.entries {
        let totals = flux.integrated(s.approach)?;
        let pw = s.pointwise_residual();
        let pass = totals.residual <= tol && pw <= tol;
        let sign_flip_suspected = !pass
            && ((totals.delta_e_s - totals.work + totals.heat).abs() <= tol
                || (totals.delta_e_s + totals.work - totals.heat).abs() <= tol);
        entries.push(AuditEntry {
            approach: s.approach,
            totals,
            pointwise_residual: pw,
            pass,
            sign_flip_suspected,
        });
    }
    let mut cross_checks = vec![];
    if let (Some(ext), Some(scg)) = (
        flux.get(Approach::ExternalOriginal),
        flux.get(Approach::ScGlobal),
    ) {
        if let Some(phi) = &scg.phi {
            let resid = ext
                .q_dot
                .iter()
                .zip(&scg.q_dot)
                .zip(phi)
                .fold(0.0f64, |m, ((qe, qg), p)| m.max((qe - qg - p).abs()));
            cross_checks.push(CrossCheck {
                name: "external heat minus driven-global heat equals interface flux".into(),
                max_residual: resid,
                pass: resid <= cross_tol,
            });
        }
    }
    if let (Some(ext), Some(scg)) = (
        flux.get(Approach::ExternalModified),
        flux.get(Approach::ScGlobal),
    ) {
        let resid = ext
            .e_s_dot
            .iter()
            .zip(&scg.e_s_dot)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        cross_checks.push(CrossCheck {
            name: "modified external energy flux matches driven-global energy flux".into(),
            max_residual: resid,
            pass: resid <= cross_tol,
        });
    }
    if let (Some(dm), Some(loc)) = (
        flux.get(Approach::DynamicalMap),
        flux.get(Approach::AutonomousLocal),
    ) {
        let resid = dm
            .q_dot
            .iter()
            .zip(&loc.q_dot)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        cross_checks.push(CrossCheck {
            name: "dynamical-map heat matches tandem heat under detailed balance".into(),
            max_residual: resid,
            pass: resid <= cross_tol,
        });
    }
    Ok(AuditReport {
        entries,
        cross_checks,
    })
}
