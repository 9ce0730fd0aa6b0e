//! Structured-text model files (TOML).
//!
//! A file declares one model of kind `local`, `global`, or `jc`, plus
//! optional bath, rate-schedule, and scenario tables. Matrices are nested
//! row-major arrays of `[re, im]` pairs and are validated against the
//! declared subsystem dimensions; named Hamiltonians must be Hermitian and
//! are rejected with the offending entry coordinates.
//!
//! ```toml
//! kind = "local"
//! beta = 1.0
//!
//! [dims]
//! s = 2
//! c = 1
//! e = 2
//!
//! [operators]
//! h_s = [[[0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-0.5, 0.0]]]
//! h_c = [[[0.0, 0.0]]]
//! h_e = [[[0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-0.5, 0.0]]]
//!
//! [[couplings.se]]
//! a = [[[0.0, 0.0], [0.1, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]  # S factor
//! b = [[[0.0, 0.0], [0.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]]  # E factor
//!
//! [bath]
//! coupling = 0.05
//!
//! [scenario]
//! t_max = 20.0
//! points = 2001
//! ```

use crate::error::{QError, Result};
use crate::generator::{BathSpectrum, KineticSchedule, RateFn, SpectrumKind};
use crate::jc::JCModel;
use crate::linalg::{self, CMat};
use crate::model::{GlobalModel, LocalModel};
use num_complex::Complex64;
use serde::Deserialize;
use std::path::Path;

#[derive(Clone, Debug)]
pub enum ModelKind {
    Local(LocalModel),
    Global(GlobalModel),
    Jc(JCModel),
}

impl ModelKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelKind::Local(_) => "local",
            ModelKind::Global(_) => "global",
            ModelKind::Jc(_) => "jc",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioParams {
    pub t_max: f64,
    pub points: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            t_max: 20.0,
            points: 2001,
            alphas: vec![5.0, 25.0, 100.0],
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelFile {
    pub name: Option<String>,
    pub kind: ModelKind,
    pub beta: f64,
    pub bath: Option<BathSpectrum>,
    pub schedule: KineticSchedule,
    pub scenario: ScenarioParams,
}

type RawMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    kind: String,
    name: Option<String>,
    beta: Option<f64>,
    dims: Option<RawDims>,
    operators: Option<RawOps>,
    couplings: Option<RawCouplings>,
    #[serde(default)]
    truncated: Vec<String>,
    bath: Option<RawBath>,
    schedule: Option<RawSchedule>,
    jc: Option<RawJc>,
    scenario: Option<RawScenario>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDims {
    s: usize,
    c: usize,
    e: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOps {
    h_s: RawMatrix,
    h_c: RawMatrix,
    h_e: RawMatrix,
    /// device-internal coupling on S (x) C; global models only
    h_sc: Option<RawMatrix>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCouplings {
    #[serde(default)]
    sc: Vec<RawPair>,
    #[serde(default)]
    se: Vec<RawPair>,
    #[serde(default)]
    de: Vec<RawPair>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    a: RawMatrix,
    b: RawMatrix,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBath {
    coupling: f64,
    beta: Option<f64>,
    kind: Option<String>,
    cutoff: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    kind: String,
    g0: Option<f64>,
    tau: Option<f64>,
    times: Option<Vec<f64>>,
    values: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJc {
    omega_s: f64,
    omega_c: f64,
    g: f64,
    alpha: f64,
    n_max: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    t_max: Option<f64>,
    points: Option<usize>,
    alphas: Option<Vec<f64>>,
    seed: Option<u64>,
}

fn bad(msg: impl Into<String>) -> QError {
    QError::ModelFile(msg.into())
}

fn to_cmat(name: &str, raw: &RawMatrix) -> Result<CMat> {
    let n = raw.len();
    if n == 0 {
        return Err(bad(format!("matrix '{name}' is empty")));
    }
    for (i, row) in raw.iter().enumerate() {
        if row.len() != n {
            return Err(bad(format!(
                "matrix '{name}' row {i} has {} entries, expected {n} (square)",
                row.len()
            )));
        }
    }
    Ok(CMat::from_fn(n, n, |i, j| {
        Complex64::new(raw[i][j][0], raw[i][j][1])
    }))
}

fn check_dim(name: &str, m: &CMat, dim: usize) -> Result<()> {
    if m.nrows() != dim {
        return Err(bad(format!(
            "matrix '{name}' is {0}x{0}, declared dimension is {dim}",
            m.nrows()
        )));
    }
    Ok(())
}

/// Reject a named Hamiltonian that is not Hermitian, reporting the entry
/// pair with the worst conjugate-symmetry defect.
fn reject_non_hermitian(name: &str, m: &CMat) -> Result<()> {
    let scale = linalg::max_abs(m).max(1e-300);
    let mut worst = (0usize, 0usize, 0.0f64);
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > worst.2 {
                worst = (i, j, d);
            }
        }
    }
    if worst.2 > 1e-12 * scale {
        let (i, j, _) = worst;
        return Err(bad(format!(
            "matrix '{name}' is not Hermitian: entry ({i},{j}) = {}, but entry ({j},{i})* = {}",
            m[(i, j)],
            m[(j, i)].conj()
        )));
    }
    Ok(())
}

fn build_schedule(raw: Option<RawSchedule>) -> Result<KineticSchedule> {
    let raw = match raw {
        Some(r) => r,
        None => return Ok(KineticSchedule::default()),
    };
    match raw.kind.as_str() {
        // plain spectral rates; the bath's KMS asymmetry is the balance
        "flat" | "detailed_balance" => Ok(KineticSchedule::default()),
        "exp_transient" => {
            let g0 = raw
                .g0
                .ok_or_else(|| bad("schedule 'exp_transient' needs g0"))?;
            let tau = raw
                .tau
                .ok_or_else(|| bad("schedule 'exp_transient' needs tau"))?;
            if tau <= 0.0 {
                return Err(bad("schedule tau must be positive"));
            }
            Ok(KineticSchedule::exp_transient(g0, tau))
        }
        "piecewise" => {
            let times = raw
                .times
                .ok_or_else(|| bad("schedule 'piecewise' needs times"))?;
            let values = raw
                .values
                .ok_or_else(|| bad("schedule 'piecewise' needs values"))?;
            if times.len() != values.len() || times.len() < 2 {
                return Err(bad(format!(
                    "piecewise schedule needs matching times/values with >= 2 breakpoints, \
                     got {} and {}",
                    times.len(),
                    values.len()
                )));
            }
            if times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(bad("piecewise schedule times must be strictly increasing"));
            }
            Ok(KineticSchedule {
                envelope: Some(RateFn::PiecewiseLinear { times, values }),
                cross: None,
                lamb_shift: None,
            })
        }
        other => Err(bad(format!(
            "unknown schedule kind '{other}' (expected flat | detailed_balance | \
             exp_transient | piecewise)"
        ))),
    }
}

fn build_bath(raw: Option<RawBath>, default_beta: f64) -> Result<Option<BathSpectrum>> {
    let raw = match raw {
        Some(r) => r,
        None => return Ok(None),
    };
    let beta = raw.beta.unwrap_or(default_beta);
    if raw.coupling < 0.0 {
        return Err(bad(format!("bath coupling {} is negative", raw.coupling)));
    }
    if !(beta >= 0.0) {
        return Err(bad("bath beta must be >= 0"));
    }
    let kind = match raw.kind.as_deref() {
        None | Some("flat") => SpectrumKind::FlatDetailedBalance,
        Some("ohmic") => {
            let cutoff = raw.cutoff.ok_or_else(|| bad("ohmic bath needs a cutoff"))?;
            if cutoff <= 0.0 {
                return Err(bad("ohmic cutoff must be positive"));
            }
            SpectrumKind::Ohmic { cutoff }
        }
        Some(other) => return Err(bad(format!("unknown bath kind '{other}'"))),
    };
    Ok(Some(BathSpectrum {
        beta,
        coupling: raw.coupling,
        kind,
    }))
}

fn build_pairs(
    tag: &str,
    raw: &[RawPair],
    dim_a: usize,
    dim_b: usize,
) -> Result<Vec<(CMat, CMat)>> {
    let mut out = vec![];
    for (k, p) in raw.iter().enumerate() {
        let a = to_cmat(&format!("couplings.{tag}[{k}].a"), &p.a)?;
        let b = to_cmat(&format!("couplings.{tag}[{k}].b"), &p.b)?;
        check_dim(&format!("couplings.{tag}[{k}].a"), &a, dim_a)?;
        check_dim(&format!("couplings.{tag}[{k}].b"), &b, dim_b)?;
        out.push((a, b));
    }
    Ok(out)
}

pub fn parse_model(text: &str) -> Result<ModelFile> {
    // toml's error Display carries "at line L, column C" plus a caret snippet
    let raw: Raw = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
    let beta = raw.beta.unwrap_or(1.0);
    if !(beta >= 0.0) {
        return Err(bad("beta must be >= 0"));
    }
    let schedule = build_schedule(raw.schedule)?;
    let bath = build_bath(raw.bath, beta)?;
    let sc_raw = raw.scenario.unwrap_or_default();
    let defaults = ScenarioParams::default();
    let scenario = ScenarioParams {
        t_max: sc_raw.t_max.unwrap_or(defaults.t_max),
        points: sc_raw.points.unwrap_or(defaults.points),
        alphas: sc_raw.alphas.unwrap_or(defaults.alphas),
        seed: sc_raw.seed.unwrap_or(defaults.seed),
    };
    if scenario.t_max <= 0.0 {
        return Err(bad("scenario t_max must be positive"));
    }
    if scenario.points < 2 {
        return Err(bad("scenario needs at least 2 grid points"));
    }
    let couplings = raw.couplings.unwrap_or_default();
    let kind = match raw.kind.as_str() {
        "local" | "global" => {
            if raw.jc.is_some() {
                return Err(bad("[jc] table is only valid with kind = \"jc\""));
            }
            let dims = raw
                .dims
                .ok_or_else(|| bad("kind = \"local\"/\"global\" needs a [dims] table"))?;
            let ops = raw
                .operators
                .ok_or_else(|| bad("kind = \"local\"/\"global\" needs an [operators] table"))?;
            if dims.s == 0 || dims.c == 0 || dims.e == 0 {
                return Err(bad("subsystem dimensions must be positive"));
            }
            let h_s = to_cmat("h_s", &ops.h_s)?;
            let h_c = to_cmat("h_c", &ops.h_c)?;
            let h_e = to_cmat("h_e", &ops.h_e)?;
            check_dim("h_s", &h_s, dims.s)?;
            check_dim("h_c", &h_c, dims.c)?;
            check_dim("h_e", &h_e, dims.e)?;
            reject_non_hermitian("h_s", &h_s)?;
            reject_non_hermitian("h_c", &h_c)?;
            reject_non_hermitian("h_e", &h_e)?;
            if raw.kind == "local" {
                if ops.h_sc.is_some() {
                    return Err(bad(
                        "operators.h_sc is the global device coupling; local models list \
                         [[couplings.sc]] pairs instead",
                    ));
                }
                if !couplings.de.is_empty() {
                    return Err(bad("couplings.de is only valid for global models"));
                }
                let sc = build_pairs("sc", &couplings.sc, dims.s, dims.c)?;
                let se = build_pairs("se", &couplings.se, dims.s, dims.e)?;
                let model = LocalModel::new(h_s, h_c, h_e, sc, se)
                    .map_err(|e| bad(format!("local model rejected: {e}")))?;
                let labels: Vec<&str> = raw.truncated.iter().map(|s| s.as_str()).collect();
                ModelKind::Local(model.with_truncated(&labels))
            } else {
                if !couplings.sc.is_empty() || !couplings.se.is_empty() {
                    return Err(bad(
                        "couplings.sc / couplings.se are only valid for local models",
                    ));
                }
                let h_sc_raw = ops
                    .h_sc
                    .ok_or_else(|| bad("global models need operators.h_sc"))?;
                let h_sc = to_cmat("h_sc", &h_sc_raw)?;
                check_dim("h_sc", &h_sc, dims.s * dims.c)?;
                reject_non_hermitian("h_sc", &h_sc)?;
                let de = build_pairs("de", &couplings.de, dims.s * dims.c, dims.e)?;
                let model = GlobalModel::new(h_s, h_c, h_e, h_sc, de)
                    .map_err(|e| bad(format!("global model rejected: {e}")))?;
                ModelKind::Global(model)
            }
        }
        "jc" => {
            if raw.dims.is_some() || raw.operators.is_some() {
                return Err(bad(
                    "kind = \"jc\" builds its own operators; drop [dims]/[operators]",
                ));
            }
            let jc = raw.jc.ok_or_else(|| bad("kind = \"jc\" needs a [jc] table"))?;
            let model = JCModel::new(
                jc.omega_s,
                jc.omega_c,
                jc.g,
                Complex64::new(jc.alpha, 0.0),
                (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
                jc.n_max,
            )
            .map_err(|e| bad(format!("jc model rejected: {e}")))?;
            ModelKind::Jc(model)
        }
        other => {
            return Err(bad(format!(
                "unknown model kind '{other}' (expected local | global | jc)"
            )))
        }
    };
    Ok(ModelFile {
        name: raw.name,
        kind,
        beta,
        bath,
        schedule,
        scenario,
    })
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("{}: {e}", path.display())))?;
    parse_model(&text)
}

/// FNV-1a hash of raw file bytes; used to stamp outputs with the model
/// identity.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
