//! Eigenoperator decomposition of free propagators.
//!
//! For a Hamiltonian H with spectrum {eps_n, |phi_n>}, conjugation by the
//! free propagator U = exp(-iHt) maps the dyad |phi_n><phi_m| to
//! exp(-i w t) |phi_n><phi_m| with Bohr frequency w = eps_m - eps_n
//! (Heisenberg convention U' A U). Dyads across distinct levels are the
//! non-invariant eigenoperators; the diagonal generalized Gell-Mann matrices
//! (plus I/sqrt(N)) commute with H and form the invariant sector. Dyads
//! inside a degenerate level are invariant too (w = 0) and are kept in a
//! separate list so the three sets always span the full operator space.

use crate::error::{QError, Result};
use crate::linalg::{self, cr, CMat};
use crate::policy::NumericPolicy;
use std::collections::HashSet;
use std::fmt;

#[derive(Debug, Clone)]
pub struct NonInvariantOp {
    pub op: CMat,
    pub omega: f64,
    /// (n, m) with op = |phi_n><phi_m|.
    pub pair: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct EigenoperatorSet {
    pub non_invariant: Vec<NonInvariantOp>,
    /// Diagonal generalized Gell-Mann operators in the eigenbasis; exactly N
    /// entries, the last is I/sqrt(N), the others traceless.
    pub invariant: Vec<CMat>,
    /// Zero-frequency dyads inside degenerate levels (empty when the
    /// spectrum is nondegenerate).
    pub invariant_offdiag: Vec<NonInvariantOp>,
    /// Source spectrum: ascending eigenvalues and phase-fixed eigenvectors.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
    /// Eigenvector indices grouped into (near-)degenerate levels.
    pub levels: Vec<Vec<usize>>,
    /// True when two distinct transitions share a Bohr frequency within
    /// tolerance (the strict constructor refuses such sets).
    pub bohr_degenerate: bool,
}

impl EigenoperatorSet {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Bohr-frequency collision report for a (tolerant) decomposition.
#[derive(Debug, Clone)]
pub struct DegeneracyReport {
    /// Colliding channel index pairs into `set.non_invariant`.
    pub pairs: Vec<(usize, usize)>,
    pub max_omega: f64,
    /// Transition index pairs ((n,m),(n',m')) for each collision.
    pub transitions: Vec<((usize, usize), (usize, usize))>,
}

impl fmt::Display for DegeneracyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (ta, tb) = self.transitions[0];
        write!(
            f,
            "{} Bohr-frequency collisions (first: transitions {:?} and {:?}); \
             shift the spectrum before building frequency-resolved generators",
            self.pairs.len(),
            ta,
            tb,
        )
    }
}

pub(crate) fn cluster_levels(vals: &[f64], policy: &NumericPolicy) -> Vec<Vec<usize>> {
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let tol = policy.level_rel * scale;
    let mut levels: Vec<Vec<usize>> = vec![];
    for i in 0..vals.len() {
        match levels.last_mut() {
            Some(cluster) if (vals[i] - vals[*cluster.last().unwrap()]).abs() <= tol => {
                cluster.push(i)
            }
            _ => levels.push(vec![i]),
        }
    }
    levels
}

fn dyad(vecs: &CMat, n: usize, m: usize) -> CMat {
    let vn = vecs.column(n);
    let vm = vecs.column(m);
    CMat::from_fn(vecs.nrows(), vecs.nrows(), |i, j| vn[i] * vm[j].conj())
}

/// Diagonal generalized Gell-Mann basis in the given eigenbasis:
/// R_j = sqrt(2/(j(j+1))) (sum_{k<=j} P_k - j P_{j+1}), plus I/sqrt(N).
fn diagonal_gell_mann(vecs: &CMat) -> Vec<CMat> {
    let n = vecs.nrows();
    let mut out = Vec::with_capacity(n);
    for j in 1..n {
        let norm = (2.0 / (j as f64 * (j + 1) as f64)).sqrt();
        let mut m = CMat::zeros(n, n);
        for k in 0..j {
            m += dyad(vecs, k, k);
        }
        m -= dyad(vecs, j, j) * cr(j as f64);
        out.push(m * cr(norm));
    }
    out.push(CMat::identity(n, n) * cr(1.0 / (n as f64).sqrt()));
    out
}

/// Collision scan over a decomposition's non-invariant frequencies.
pub fn degeneracy_report(set: &EigenoperatorSet, policy: &NumericPolicy) -> Option<DegeneracyReport> {
    let max_omega = set
        .non_invariant
        .iter()
        .fold(0.0f64, |m, c| m.max(c.omega.abs()));
    let tol = policy.degeneracy_rel * max_omega.max(1e-300);
    let mut order: Vec<usize> = (0..set.non_invariant.len()).collect();
    order.sort_by(|&a, &b| {
        set.non_invariant[a]
            .omega
            .partial_cmp(&set.non_invariant[b].omega)
            .unwrap()
    });
    let mut pairs = vec![];
    let mut transitions = vec![];
    for w in order.windows(2) {
        if (set.non_invariant[w[1]].omega - set.non_invariant[w[0]].omega).abs() < tol {
            pairs.push((w[0], w[1]));
            transitions.push((
                set.non_invariant[w[0]].pair,
                set.non_invariant[w[1]].pair,
            ));
        }
    }
    if pairs.is_empty() {
        None
    } else {
        Some(DegeneracyReport {
            pairs,
            max_omega,
            transitions,
        })
    }
}

/// Spectral eigenoperator decomposition. Fails when two distinct transitions
/// share a Bohr frequency within tolerance; use [`decompose_tolerant`] plus
/// [`degeneracy_report`] to inspect such spectra anyway.
pub fn decompose(h: &CMat) -> Result<EigenoperatorSet> {
    decompose_with(h, &NumericPolicy::default())
}

pub fn decompose_with(h: &CMat, policy: &NumericPolicy) -> Result<EigenoperatorSet> {
    let set = decompose_tolerant_with(h, policy)?;
    if set.bohr_degenerate {
        let report = degeneracy_report(&set, policy).expect("flag implies report");
        return Err(QError::Degenerate(report.to_string()));
    }
    Ok(set)
}

/// Like [`decompose`] but returns the set even when Bohr frequencies
/// collide (`bohr_degenerate` is set). Non-Hermitian input still panics the
/// strict wrapper, so this validates and errors cleanly instead.
pub fn decompose_tolerant(h: &CMat) -> Result<EigenoperatorSet> {
    decompose_tolerant_with(h, &NumericPolicy::default())
}

pub fn decompose_tolerant_with(h: &CMat, policy: &NumericPolicy) -> Result<EigenoperatorSet> {
    let scale = linalg::max_abs(h).max(1e-300);
    let defect = linalg::herm_defect(h) / scale;
    if defect > policy.herm_rel {
        return Err(QError::NotHermitian {
            defect,
            tol: policy.herm_rel,
        });
    }
    let (vals, vecs) = linalg::eigh(h);
    let levels = cluster_levels(&vals, policy);
    let level_of: Vec<usize> = {
        let mut lo = vec![0; vals.len()];
        for (li, cluster) in levels.iter().enumerate() {
            for &i in cluster {
                lo[i] = li;
            }
        }
        lo
    };
    let mut non_invariant = vec![];
    let mut invariant_offdiag = vec![];
    for n in 0..vals.len() {
        for m in 0..vals.len() {
            if n == m {
                continue;
            }
            if level_of[n] == level_of[m] {
                invariant_offdiag.push(NonInvariantOp {
                    op: dyad(&vecs, n, m),
                    omega: 0.0,
                    pair: (n, m),
                });
            } else {
                non_invariant.push(NonInvariantOp {
                    op: dyad(&vecs, n, m),
                    omega: vals[m] - vals[n],
                    pair: (n, m),
                });
            }
        }
    }
    let invariant = diagonal_gell_mann(&vecs);
    let max_omega = non_invariant
        .iter()
        .fold(0.0f64, |m, c| m.max(c.omega.abs()));
    let tol = policy.degeneracy_rel * max_omega.max(1e-300);
    let mut omegas: Vec<f64> = non_invariant.iter().map(|c| c.omega).collect();
    omegas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let bohr_degenerate = omegas.windows(2).any(|w| (w[1] - w[0]).abs() < tol);
    Ok(EigenoperatorSet {
        non_invariant,
        invariant,
        invariant_offdiag,
        eigenvalues: vals,
        eigenvectors: vecs,
        levels,
        bohr_degenerate,
    })
}

/// Heisenberg conjugation by the free propagator: U'(t) a U(t) with
/// U = exp(-iht). Maps each non-invariant eigenoperator of h to
/// exp(-i w t) times itself.
pub fn free_map(h: &CMat, t: f64, a: &CMat) -> CMat {
    let u = linalg::expm_ih(h, t);
    u.adjoint() * a * u
}

/// Mian-Chowla greedy Sidon sequence starting at 0 (0, 1, 3, 7, 12, ...):
/// all pairwise differences are distinct, so distinct shift multiples never
/// recreate a Bohr collision among originally-equal frequencies.
pub fn sidon_ladder(n: usize) -> Vec<u64> {
    let mut seq: Vec<u64> = vec![];
    let mut diffs: HashSet<u64> = HashSet::new();
    let mut candidate = 0u64;
    while seq.len() < n {
        let ok = seq.iter().all(|&s| !diffs.contains(&(candidate - s)));
        if ok {
            for &s in &seq {
                diffs.insert(candidate - s);
            }
            seq.push(candidate);
        }
        candidate += 1;
    }
    seq
}

/// Separate colliding Bohr frequencies by shifting the k-th eigenvalue by
/// sidon(k) * epsilon. Nondegenerate input is returned unchanged; if the
/// shifted spectrum still collides, reports the minimal epsilon that would
/// separate it.
pub fn lift_degeneracy(h: &CMat, epsilon: f64) -> Result<CMat> {
    lift_degeneracy_with(h, epsilon, &NumericPolicy::default())
}

pub fn lift_degeneracy_with(h: &CMat, epsilon: f64, policy: &NumericPolicy) -> Result<CMat> {
    let set = decompose_tolerant_with(h, policy)?;
    // a fully clustered level (no cross-level transition at all) carries no
    // Bohr collision yet still needs separating before any
    // frequency-resolved construction, e.g. H = 0
    if !set.bohr_degenerate && set.levels.len() == set.dim() {
        return Ok(h.clone());
    }
    if epsilon <= 0.0 {
        return Err(QError::Invalid("epsilon must be positive".into()));
    }
    let n = set.eigenvalues.len();
    let ladder = sidon_ladder(n);
    let mut shifted = h.clone();
    for k in 0..n {
        shifted += dyad(&set.eigenvectors, k, k) * cr(ladder[k] as f64 * epsilon);
    }
    let lifted = decompose_tolerant_with(&shifted, policy)?;
    match degeneracy_report(&lifted, policy) {
        None => Ok(shifted),
        Some(report) => {
            // smallest epsilon that would open the residual collisions,
            // measured against the tolerance band they sit inside
            let tol = policy.degeneracy_rel * report.max_omega.max(1e-300);
            let mut required = 2.0 * epsilon;
            for &(a, b) in &report.pairs {
                let gap =
                    (lifted.non_invariant[a].omega - lifted.non_invariant[b].omega).abs();
                required = required.max(epsilon + 2.0 * (tol - gap).max(0.0));
            }
            Err(QError::LiftTooSmall { epsilon, required })
        }
    }
}

/// One device eigenoperator factored over the S (x) C product structure.
#[derive(Debug, Clone)]
pub struct FactoredEigenoperator {
    /// Index into the device set's non_invariant (or invariant_offdiag) list.
    pub device_index: usize,
    /// System factor: dyad |u_i><u_j| of the system spectrum, relative phase
    /// folded in.
    pub sys: CMat,
    /// Control factor: dyad |w_k><w_l| of the control spectrum.
    pub ctl: CMat,
    pub sys_pair: (usize, usize),
    pub ctl_pair: (usize, usize),
    pub omega_sys: f64,
    pub omega_ctl: f64,
}

#[derive(Debug, Clone)]
pub struct FactoredSet {
    pub factored: Vec<FactoredEigenoperator>,
    /// Factorizations of the zero-frequency intra-level dyads.
    pub offdiag_factored: Vec<FactoredEigenoperator>,
    pub sys_eigenvalues: Vec<f64>,
    pub ctl_eigenvalues: Vec<f64>,
}

fn best_product_match(
    phi: nalgebra::DVectorView<num_complex::Complex64>,
    us: &CMat,
    wc: &CMat,
) -> (usize, usize, num_complex::Complex64) {
    let (ds, dc) = (us.nrows(), wc.nrows());
    let mut best = (0usize, 0usize, linalg::ZERO);
    let mut best_mag = -1.0f64;
    for i in 0..ds {
        for k in 0..dc {
            let mut ov = linalg::ZERO;
            for a in 0..ds {
                for b in 0..dc {
                    ov += (us[(a, i)] * wc[(b, k)]).conj() * phi[a * dc + b];
                }
            }
            if ov.norm() > best_mag {
                best_mag = ov.norm();
                best = (i, k, ov);
            }
        }
    }
    best
}

/// Factor the eigenoperators of a separable device Hamiltonian
/// H_S (x) I + I (x) H_C into local products. The device set may be
/// Bohr-degenerate (separable spectra usually are); it must not mix product
/// eigenvectors inside degenerate levels.
pub fn product_decompose(
    set: &EigenoperatorSet,
    h_s: &CMat,
    h_c: &CMat,
) -> Result<FactoredSet> {
    let (ds, dc) = (h_s.nrows(), h_c.nrows());
    if set.dim() != ds * dc {
        return Err(QError::LayoutMismatch(format!(
            "device dim {} vs {}x{}",
            set.dim(),
            ds,
            dc
        )));
    }
    // separability precondition: the set's spectrum must reassemble the free
    // sum exactly
    let mut h_dev = CMat::zeros(ds * dc, ds * dc);
    for (k, &e) in set.eigenvalues.iter().enumerate() {
        h_dev += dyad(&set.eigenvectors, k, k) * cr(e);
    }
    let free = h_s.kronecker(&CMat::identity(dc, dc))
        + CMat::identity(ds, ds).kronecker(h_c);
    let scale = linalg::max_abs(&free).max(1e-300);
    if linalg::max_abs(&(&h_dev - &free)) / scale > 1e-9 {
        return Err(QError::Invalid(
            "device Hamiltonian is not the separable free sum H_S + H_C".into(),
        ));
    }
    let (es, us) = linalg::eigh(h_s);
    let (ec, wc) = linalg::eigh(h_c);
    let factor_one = |device_index: usize,
                      entry: &NonInvariantOp|
     -> Result<FactoredEigenoperator> {
        let (n, m) = entry.pair;
        let (i, k, ov_a) = best_product_match(set.eigenvectors.column(n), &us, &wc);
        let (j, l, ov_b) = best_product_match(set.eigenvectors.column(m), &us, &wc);
        if ov_a.norm() < 1.0 - 1e-9 || ov_b.norm() < 1.0 - 1e-9 {
            return Err(QError::Invalid(format!(
                "device eigenvector {} is not a product state (overlap {:.6}); \
                 degenerate levels were mixed",
                if ov_a.norm() < 1.0 - 1e-9 { n } else { m },
                ov_a.norm().min(ov_b.norm())
            )));
        }
        let phase = ov_a * ov_b.conj();
        let mut sys = CMat::from_fn(ds, ds, |a, b| us[(a, i)] * us[(b, j)].conj());
        sys *= phase;
        let ctl = CMat::from_fn(dc, dc, |a, b| wc[(a, k)] * wc[(b, l)].conj());
        // verification: the product must reproduce the device dyad
        let recon = sys.kronecker(&ctl);
        if linalg::max_abs(&(&recon - &entry.op)) > 1e-10 {
            return Err(QError::Invalid(format!(
                "factorization of device dyad {:?} failed verification",
                entry.pair
            )));
        }
        Ok(FactoredEigenoperator {
            device_index,
            sys,
            ctl,
            sys_pair: (i, j),
            ctl_pair: (k, l),
            omega_sys: es[j] - es[i],
            omega_ctl: ec[l] - ec[k],
        })
    };
    let mut factored = vec![];
    for (idx, entry) in set.non_invariant.iter().enumerate() {
        factored.push(factor_one(idx, entry)?);
    }
    let mut offdiag_factored = vec![];
    for (idx, entry) in set.invariant_offdiag.iter().enumerate() {
        offdiag_factored.push(factor_one(idx, entry)?);
    }
    Ok(FactoredSet {
        factored,
        offdiag_factored,
        sys_eigenvalues: es,
        ctl_eigenvalues: ec,
    })
}
