//! Tripartite system/control/environment model declarations, Hamiltonian
//! assembly for the local (tandem S-C, S-E) and global (device-environment)
//! coupling layouts, and validation of the strict-energy-conservation (SEC)
//! commutators that select the thermodynamically consistent bookkeeping.

use crate::error::{QError, Result};
use crate::linalg::{self, cr, CMat, CVec};
use crate::operator::{DensityOperator, HilbertLayout, Operator};
use crate::policy::NumericPolicy;
use num_complex::Complex64;

/// Relative SEC defect ||[a,b]|| / (||a|| ||b||) in the entrywise max norm;
/// zero when either operand vanishes (empty couplings pass trivially).
pub fn sec_defect(a: &CMat, b: &CMat) -> f64 {
    let na = linalg::max_abs(a);
    let nb = linalg::max_abs(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    linalg::max_abs(&(a * b - b * a)) / (na * nb)
}

fn check_hermitian(name: &str, m: &CMat, policy: &NumericPolicy) -> Result<()> {
    let scale = linalg::max_abs(m).max(1e-300);
    let defect = linalg::herm_defect(m) / scale;
    if defect > policy.herm_rel {
        return Err(QError::Invalid(format!(
            "{name} is not Hermitian (relative defect {defect:.3e})"
        )));
    }
    Ok(())
}

/// Projector that removes the top `cut` levels of a truncated subsystem,
/// embedded on a composite space. Used to exclude Fock-truncation edge
/// artifacts from SEC checks.
fn truncation_projector(dims: &[usize], truncated: &[bool], cut: usize) -> CMat {
    let total: usize = dims.iter().product();
    let mut diag = vec![1.0f64; total];
    for (idx, d) in diag.iter_mut().enumerate().take(total) {
        let mut rem = idx;
        for k in (0..dims.len()).rev() {
            let i = rem % dims[k];
            rem /= dims[k];
            if truncated[k] && i + cut >= dims[k] {
                *d = 0.0;
            }
        }
    }
    CMat::from_fn(total, total, |i, j| {
        if i == j {
            cr(diag[i])
        } else {
            linalg::ZERO
        }
    })
}

/// Tandem layout: the environment couples to the primary system only, and
/// both interactions conserve the respective bare-energy sums.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub h_s: CMat,
    pub h_c: CMat,
    pub h_e: CMat,
    /// (S_j, C_j) factor pairs; the assembled sum must be Hermitian.
    pub couplings_sc: Vec<(CMat, CMat)>,
    /// (S_j, E_j) factor pairs.
    pub couplings_se: Vec<(CMat, CMat)>,
    /// Labels of subsystems that are truncated Fock modes; SEC checks drop
    /// their top two levels.
    pub truncated: Vec<String>,
}

impl LocalModel {
    pub fn new(
        h_s: CMat,
        h_c: CMat,
        h_e: CMat,
        couplings_sc: Vec<(CMat, CMat)>,
        couplings_se: Vec<(CMat, CMat)>,
    ) -> Result<Self> {
        let policy = NumericPolicy::default();
        check_hermitian("H_S", &h_s, &policy)?;
        check_hermitian("H_C", &h_c, &policy)?;
        check_hermitian("H_E", &h_e, &policy)?;
        for (s, c) in &couplings_sc {
            if s.nrows() != h_s.nrows() || c.nrows() != h_c.nrows() {
                return Err(QError::LayoutMismatch("S-C coupling factor dims".into()));
            }
        }
        for (s, e) in &couplings_se {
            if s.nrows() != h_s.nrows() || e.nrows() != h_e.nrows() {
                return Err(QError::LayoutMismatch("S-E coupling factor dims".into()));
            }
        }
        let m = LocalModel {
            h_s,
            h_c,
            h_e,
            couplings_sc,
            couplings_se,
            truncated: vec![],
        };
        check_hermitian("assembled H_SC", &m.h_sc(), &policy)?;
        check_hermitian("assembled H_SE", &m.h_se(), &policy)?;
        Ok(m)
    }

    pub fn with_truncated(mut self, labels: &[&str]) -> Self {
        self.truncated = labels.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn dim_s(&self) -> usize {
        self.h_s.nrows()
    }
    pub fn dim_c(&self) -> usize {
        self.h_c.nrows()
    }
    pub fn dim_e(&self) -> usize {
        self.h_e.nrows()
    }

    pub fn layout_s(&self) -> HilbertLayout {
        HilbertLayout::single(self.dim_s(), "S").unwrap()
    }
    pub fn layout_d(&self) -> HilbertLayout {
        HilbertLayout::new(vec![self.dim_s(), self.dim_c()], vec!["S", "C"]).unwrap()
    }
    pub fn layout_full(&self) -> HilbertLayout {
        HilbertLayout::new(
            vec![self.dim_s(), self.dim_c(), self.dim_e()],
            vec!["S", "C", "E"],
        )
        .unwrap()
    }

    /// Assembled S-C interaction on the S (x) C space.
    pub fn h_sc(&self) -> CMat {
        let d = self.dim_s() * self.dim_c();
        let mut m = CMat::zeros(d, d);
        for (s, c) in &self.couplings_sc {
            m += s.kronecker(c);
        }
        m
    }

    /// Assembled S-E interaction on the S (x) E space.
    pub fn h_se(&self) -> CMat {
        let d = self.dim_s() * self.dim_e();
        let mut m = CMat::zeros(d, d);
        for (s, e) in &self.couplings_se {
            m += s.kronecker(e);
        }
        m
    }

    /// Free device Hamiltonian H_S + H_C on S (x) C.
    pub fn h_d_free(&self) -> CMat {
        let is = CMat::identity(self.dim_s(), self.dim_s());
        let ic = CMat::identity(self.dim_c(), self.dim_c());
        self.h_s.kronecker(&ic) + is.kronecker(&self.h_c)
    }

    /// Device Hamiltonian H_S + H_C + H_SC on S (x) C.
    pub fn h_d(&self) -> CMat {
        self.h_d_free() + self.h_sc()
    }

    fn sec_projector_sc(&self) -> Option<CMat> {
        let trunc = [
            self.truncated.iter().any(|l| l == "S"),
            self.truncated.iter().any(|l| l == "C"),
        ];
        if trunc.iter().any(|&t| t) {
            Some(truncation_projector(
                &[self.dim_s(), self.dim_c()],
                &trunc,
                2,
            ))
        } else {
            None
        }
    }

    fn sec_projector_se(&self) -> Option<CMat> {
        let trunc = [
            self.truncated.iter().any(|l| l == "S"),
            self.truncated.iter().any(|l| l == "E"),
        ];
        if trunc.iter().any(|&t| t) {
            Some(truncation_projector(
                &[self.dim_s(), self.dim_e()],
                &trunc,
                2,
            ))
        } else {
            None
        }
    }

    /// Relative SEC defects of the two interactions (after projecting out
    /// truncation edges when a subsystem is a truncated mode).
    pub fn sec_defects(&self) -> (f64, f64) {
        let free_sc = self.h_d_free();
        let h_sc = self.h_sc();
        let sc = match self.sec_projector_sc() {
            Some(p) => {
                let comm = &free_sc * &h_sc - &h_sc * &free_sc;
                let na = linalg::max_abs(&free_sc);
                let nb = linalg::max_abs(&h_sc);
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    linalg::max_abs(&(&p * comm * &p)) / (na * nb)
                }
            }
            None => sec_defect(&free_sc, &h_sc),
        };
        let is = CMat::identity(self.dim_s(), self.dim_s());
        let ie = CMat::identity(self.dim_e(), self.dim_e());
        let free_se = self.h_s.kronecker(&ie) + is.kronecker(&self.h_e);
        let h_se = self.h_se();
        let se = match self.sec_projector_se() {
            Some(p) => {
                let comm = &free_se * &h_se - &h_se * &free_se;
                let na = linalg::max_abs(&free_se);
                let nb = linalg::max_abs(&h_se);
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    linalg::max_abs(&(&p * comm * &p)) / (na * nb)
                }
            }
            None => sec_defect(&free_se, &h_se),
        };
        (sc, se)
    }
}

/// Global layout: system and control form a device with an arbitrary
/// internal coupling; the environment couples to the device as a whole,
/// conserving H_D + H_E.
#[derive(Debug, Clone)]
pub struct GlobalModel {
    pub h_s: CMat,
    pub h_c: CMat,
    pub h_e: CMat,
    /// Device-internal coupling on S (x) C; no SEC requirement.
    pub h_sc_g: CMat,
    /// (device op on S (x) C, environment op) factor pairs.
    pub couplings_de: Vec<(CMat, CMat)>,
}

impl GlobalModel {
    pub fn new(
        h_s: CMat,
        h_c: CMat,
        h_e: CMat,
        h_sc_g: CMat,
        couplings_de: Vec<(CMat, CMat)>,
    ) -> Result<Self> {
        let policy = NumericPolicy::default();
        check_hermitian("H_S", &h_s, &policy)?;
        check_hermitian("H_C", &h_c, &policy)?;
        check_hermitian("H_E", &h_e, &policy)?;
        check_hermitian("H_SC", &h_sc_g, &policy)?;
        if h_sc_g.nrows() != h_s.nrows() * h_c.nrows() {
            return Err(QError::LayoutMismatch("H_SC device coupling dim".into()));
        }
        for (d, e) in &couplings_de {
            if d.nrows() != h_s.nrows() * h_c.nrows() || e.nrows() != h_e.nrows() {
                return Err(QError::LayoutMismatch("D-E coupling factor dims".into()));
            }
        }
        let m = GlobalModel {
            h_s,
            h_c,
            h_e,
            h_sc_g,
            couplings_de,
        };
        check_hermitian("assembled H_DE", &m.h_de(), &policy)?;
        Ok(m)
    }

    /// Reinterpret a tandem model in the device picture: the S-C coupling
    /// becomes the internal device coupling and every S-E pair is promoted to
    /// a device-environment pair (S ⊗ I_C, E).
    pub fn from_local(local: &LocalModel) -> Result<Self> {
        let ic = CMat::identity(local.dim_c(), local.dim_c());
        let couplings_de = local
            .couplings_se
            .iter()
            .map(|(s, e)| (s.kronecker(&ic), e.clone()))
            .collect();
        GlobalModel::new(
            local.h_s.clone(),
            local.h_c.clone(),
            local.h_e.clone(),
            local.h_sc(),
            couplings_de,
        )
    }

    pub fn dim_s(&self) -> usize {
        self.h_s.nrows()
    }
    pub fn dim_c(&self) -> usize {
        self.h_c.nrows()
    }
    pub fn dim_e(&self) -> usize {
        self.h_e.nrows()
    }

    pub fn layout_d(&self) -> HilbertLayout {
        HilbertLayout::new(vec![self.dim_s(), self.dim_c()], vec!["S", "C"]).unwrap()
    }
    pub fn layout_full(&self) -> HilbertLayout {
        HilbertLayout::new(
            vec![self.dim_s(), self.dim_c(), self.dim_e()],
            vec!["S", "C", "E"],
        )
        .unwrap()
    }

    /// Device Hamiltonian H_S + H_C + H_SC on S (x) C.
    pub fn h_d(&self) -> CMat {
        let is = CMat::identity(self.dim_s(), self.dim_s());
        let ic = CMat::identity(self.dim_c(), self.dim_c());
        self.h_s.kronecker(&ic) + is.kronecker(&self.h_c) + &self.h_sc_g
    }

    pub fn h_de(&self) -> CMat {
        let d = self.dim_s() * self.dim_c() * self.dim_e();
        let mut m = CMat::zeros(d, d);
        for (dv, e) in &self.couplings_de {
            m += dv.kronecker(e);
        }
        m
    }

    pub fn sec_defect_de(&self) -> f64 {
        let ie = CMat::identity(self.dim_e(), self.dim_e());
        let id = CMat::identity(self.dim_s() * self.dim_c(), self.dim_s() * self.dim_c());
        let free = self.h_d().kronecker(&ie) + id.kronecker(&self.h_e);
        sec_defect(&free, &self.h_de())
    }
}

/// H^(L) = H_S + H_C + H_SC + H_E + H_SE embedded on S (x) C (x) E.
/// Fails when either SEC commutator exceeds the policy tolerance.
pub fn assemble_local(model: &LocalModel) -> Result<Operator> {
    assemble_local_with(model, &NumericPolicy::default())
}

pub fn assemble_local_with(model: &LocalModel, policy: &NumericPolicy) -> Result<Operator> {
    let (sc, se) = model.sec_defects();
    if sc > policy.sec_rel {
        return Err(QError::SecViolation(format!(
            "[H_S + H_C, H_SC] relative norm {sc:.3e} exceeds {:.1e}",
            policy.sec_rel
        )));
    }
    if se > policy.sec_rel {
        return Err(QError::SecViolation(format!(
            "[H_S + H_E, H_SE] relative norm {se:.3e} exceeds {:.1e}",
            policy.sec_rel
        )));
    }
    let layout = model.layout_full();
    let (ds, dc, de) = (model.dim_s(), model.dim_c(), model.dim_e());
    let (is, ic, ie) = (
        CMat::identity(ds, ds),
        CMat::identity(dc, dc),
        CMat::identity(de, de),
    );
    let mut h = model
        .h_s
        .kronecker(&ic)
        .kronecker(&ie)
        + is.kronecker(&model.h_c).kronecker(&ie)
        + is.kronecker(&ic).kronecker(&model.h_e);
    for (s, c) in &model.couplings_sc {
        h += s.kronecker(c).kronecker(&ie);
    }
    for (s, e) in &model.couplings_se {
        h += s.kronecker(&ic).kronecker(e);
    }
    Operator::hermitian_with(layout, h, policy)
}

/// H^(G) = H_D + H_E + H_DE on S (x) C (x) E, validating only the
/// device-environment SEC commutator.
pub fn assemble_global(model: &GlobalModel) -> Result<Operator> {
    assemble_global_with(model, &NumericPolicy::default())
}

pub fn assemble_global_with(model: &GlobalModel, policy: &NumericPolicy) -> Result<Operator> {
    let de = model.sec_defect_de();
    if de > policy.sec_rel {
        return Err(QError::SecViolation(format!(
            "[H_D + H_E, H_DE] relative norm {de:.3e} exceeds {:.1e}",
            policy.sec_rel
        )));
    }
    let layout = model.layout_full();
    let ie = CMat::identity(model.dim_e(), model.dim_e());
    let id = CMat::identity(
        model.dim_s() * model.dim_c(),
        model.dim_s() * model.dim_c(),
    );
    let h = model.h_d().kronecker(&ie) + id.kronecker(&model.h_e) + model.h_de();
    Operator::hermitian_with(layout, h, policy)
}

/// Energy-conserving unitary channel specification on S (x) C (x) E.
#[derive(Debug, Clone)]
pub struct ThermalOperationSpec {
    pub u: CMat,
    pub h_s: CMat,
    pub h_c: CMat,
    pub h_e: CMat,
    pub rho_e: DensityOperator,
}

#[derive(Debug, Clone)]
pub struct ThermalOpReport {
    /// ||[H_S + H_C + H_E, U]|| / (||H|| ||U||)
    pub commutator_norm: f64,
    pub unitarity_defect: f64,
    pub pass: bool,
}

pub fn validate_thermal_operation(spec: &ThermalOperationSpec) -> Result<ThermalOpReport> {
    validate_thermal_operation_with(spec, &NumericPolicy::default())
}

pub fn validate_thermal_operation_with(
    spec: &ThermalOperationSpec,
    policy: &NumericPolicy,
) -> Result<ThermalOpReport> {
    let (ds, dc, de) = (spec.h_s.nrows(), spec.h_c.nrows(), spec.h_e.nrows());
    let total = ds * dc * de;
    if spec.u.nrows() != total {
        return Err(QError::LayoutMismatch(format!(
            "U is {}x{}, expected {total}",
            spec.u.nrows(),
            spec.u.ncols()
        )));
    }
    let unitarity_defect =
        linalg::max_abs(&(spec.u.adjoint() * &spec.u - CMat::identity(total, total)));
    if unitarity_defect > policy.unitary_tol {
        return Err(QError::Invalid(format!(
            "U is not unitary (defect {unitarity_defect:.3e})"
        )));
    }
    let (is, ic, ie) = (
        CMat::identity(ds, ds),
        CMat::identity(dc, dc),
        CMat::identity(de, de),
    );
    let h_free = spec.h_s.kronecker(&ic).kronecker(&ie)
        + is.kronecker(&spec.h_c).kronecker(&ie)
        + is.kronecker(&ic).kronecker(&spec.h_e);
    let commutator_norm = sec_defect(&h_free, &spec.u);
    Ok(ThermalOpReport {
        commutator_norm,
        unitarity_defect,
        pass: commutator_norm <= policy.sec_rel && unitarity_defect <= policy.unitary_tol,
    })
}

/// Gibbs state e^{-beta h} / Z through the eigendecomposition, stable for
/// large beta (shifted by the ground energy).
pub fn thermal_state(h: &CMat, beta: f64) -> Result<DensityOperator> {
    let policy = NumericPolicy::default();
    check_hermitian("thermal_state input", h, &policy)?;
    if beta < 0.0 {
        return Err(QError::Invalid("negative inverse temperature".into()));
    }
    let (vals, vecs) = linalg::eigh(h);
    let e0 = vals[0];
    let weights: Vec<f64> = vals.iter().map(|e| (-(beta) * (e - e0)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let n = vals.len();
    let d = CMat::from_fn(n, n, |i, j| {
        if i == j {
            cr(weights[i] / z)
        } else {
            linalg::ZERO
        }
    });
    let rho = &vecs * d * vecs.adjoint();
    let layout = HilbertLayout::single(n, "thermal")?;
    DensityOperator::new(Operator::new(layout, rho)?)
}

/// Minimal admissible Fock truncation for a coherent state of magnitude
/// |alpha|: keeps the truncation leakage below 1e-10.
pub fn coherent_truncation_rule(alpha_mag: f64) -> usize {
    let a = alpha_mag.abs();
    (a * a + 10.0 * a + 10.0).ceil() as usize
}

/// Normalized truncated coherent state |alpha> on a Fock space of dimension
/// n_max + 1. Amplitudes are computed in log space so large alpha stays
/// finite.
pub fn coherent_state(alpha: Complex64, n_max: usize) -> Result<DensityOperator> {
    let required = coherent_truncation_rule(alpha.norm());
    if n_max < required {
        return Err(QError::TruncationTooSmall {
            required,
            given: n_max,
        });
    }
    let psi = coherent_amplitudes(alpha, n_max);
    let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if (1.0 - norm2).abs() > 1e-10 {
        return Err(QError::TruncationLeakage {
            leakage: (1.0 - norm2).abs(),
        });
    }
    let psi = psi * cr(1.0 / norm2.sqrt());
    let layout = HilbertLayout::single(n_max + 1, "mode")?;
    DensityOperator::pure(layout, &psi)
}

/// Raw coherent amplitudes c_n = e^{-|a|^2/2} a^n / sqrt(n!) on dimension
/// n_max + 1 (not re-normalized).
pub fn coherent_amplitudes(alpha: Complex64, n_max: usize) -> CVec {
    let a = alpha.norm();
    let phase = if a > 0.0 { alpha / a } else { linalg::ONE };
    let mut psi = CVec::zeros(n_max + 1);
    let mut ln_fact = 0.0f64; // ln(n!)
    for n in 0..=n_max {
        if n > 0 {
            ln_fact += (n as f64).ln();
        }
        let ln_mag = -0.5 * a * a + if a > 0.0 { n as f64 * a.ln() } else { 0.0 } - 0.5 * ln_fact;
        let mag = if a == 0.0 && n > 0 { 0.0 } else { ln_mag.exp() };
        psi[n] = phase.powu(n as u32) * cr(mag);
    }
    psi
}
