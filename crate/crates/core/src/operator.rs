//! Operators and states on finite tensor-product Hilbert spaces.
//!
//! Composite indices are row-major over the subsystem list: for dims
//! `[d0, d1, ...]` the basis index is `(..((i0*d1)+i1)*d2..)`, matching the
//! Kronecker-product convention `(A ⊗ B)[i*dB+k, j*dB+l] = A[i,j] B[k,l]`.

use crate::error::{QError, Result};
use crate::linalg::{self, cr, CMat};
use crate::policy::NumericPolicy;
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct HilbertLayout {
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl HilbertLayout {
    pub fn new(dims: Vec<usize>, labels: Vec<&str>) -> Result<Self> {
        if dims.is_empty() || dims.len() != labels.len() {
            return Err(QError::LayoutMismatch(format!(
                "{} dims vs {} labels",
                dims.len(),
                labels.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(QError::Invalid("zero-dimensional subsystem".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(QError::Invalid(format!("duplicate label '{l}'")));
            }
        }
        Ok(HilbertLayout {
            dims,
            labels: labels.into_iter().map(String::from).collect(),
        })
    }

    pub fn single(dim: usize, label: &str) -> Result<Self> {
        Self::new(vec![dim], vec![label])
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> Vec<&str> {
        self.labels.iter().map(|s| s.as_str()).collect()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| QError::UnknownLabel(label.into()))
    }

    pub fn concat(&self, other: &HilbertLayout) -> Result<HilbertLayout> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let mut labels: Vec<&str> = self.labels();
        labels.extend(other.labels());
        HilbertLayout::new(dims, labels)
    }

    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            out[k] = idx % self.dims[k];
            idx /= self.dims[k];
        }
        out
    }

    pub fn ravel(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (k, &i) in multi.iter().enumerate() {
            idx = idx * self.dims[k] + i;
        }
        idx
    }
}

#[derive(Debug, Clone)]
pub struct Operator {
    pub layout: HilbertLayout,
    pub entries: CMat,
    pub hermitian: bool,
}

impl Operator {
    /// General (possibly non-Hermitian) operator.
    pub fn new(layout: HilbertLayout, entries: CMat) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() != layout.total_dim() {
            return Err(QError::LayoutMismatch(format!(
                "matrix {}x{} vs layout dim {}",
                entries.nrows(),
                entries.ncols(),
                layout.total_dim()
            )));
        }
        Ok(Operator {
            layout,
            entries,
            hermitian: false,
        })
    }

    /// Operator with the Hermitian flag set; validated against the policy.
    pub fn hermitian(layout: HilbertLayout, entries: CMat) -> Result<Self> {
        Self::hermitian_with(layout, entries, &NumericPolicy::default())
    }

    pub fn hermitian_with(
        layout: HilbertLayout,
        entries: CMat,
        policy: &NumericPolicy,
    ) -> Result<Self> {
        let mut op = Self::new(layout, entries)?;
        let scale = linalg::max_abs(&op.entries).max(1e-300);
        let defect = linalg::herm_defect(&op.entries) / scale;
        if defect > policy.herm_rel {
            return Err(QError::NotHermitian {
                defect,
                tol: policy.herm_rel,
            });
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            layout: self.layout.clone(),
            entries: self.entries.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn trace(&self) -> Complex64 {
        linalg::trace(&self.entries)
    }

    /// Embed an operator acting on one subsystem into a larger layout
    /// (identity on everything else).
    pub fn embed(&self, target: &HilbertLayout) -> Result<Operator> {
        if self.layout.dims.len() != 1 {
            return Err(QError::LayoutMismatch(
                "embed expects a single-subsystem operator".into(),
            ));
        }
        let label = &self.layout.labels[0];
        let pos = target.position(label)?;
        if target.dims[pos] != self.layout.dims[0] {
            return Err(QError::LayoutMismatch(format!(
                "subsystem '{label}' has dim {} in target, operator has {}",
                target.dims[pos], self.layout.dims[0]
            )));
        }
        let n = target.total_dim();
        let mut entries = CMat::zeros(n, n);
        for row in 0..n {
            let rm = target.unravel(row);
            for col in 0..n {
                let cm = target.unravel(col);
                if rm
                    .iter()
                    .zip(cm.iter())
                    .enumerate()
                    .all(|(k, (a, b))| k == pos || a == b)
                {
                    entries[(row, col)] = self.entries[(rm[pos], cm[pos])];
                }
            }
        }
        Ok(Operator {
            layout: target.clone(),
            entries,
            hermitian: self.hermitian,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DensityOperator {
    pub op: Operator,
}

impl DensityOperator {
    pub fn new(op: Operator) -> Result<Self> {
        Self::with_policy(op, &NumericPolicy::default())
    }

    pub fn with_policy(op: Operator, policy: &NumericPolicy) -> Result<Self> {
        let tr = linalg::trace(&op.entries);
        if (tr.re - 1.0).abs() > policy.trace_tol || tr.im.abs() > policy.trace_tol {
            return Err(QError::InvalidState(format!(
                "trace {tr} deviates from 1 beyond {:e}",
                policy.trace_tol
            )));
        }
        let scale = linalg::max_abs(&op.entries).max(1e-300);
        if linalg::herm_defect(&op.entries) / scale > policy.herm_rel.max(1e-10) {
            return Err(QError::InvalidState("state is not Hermitian".into()));
        }
        let min_eig = linalg::min_eigenvalue(&op.entries);
        if min_eig < -policy.psd_tol {
            return Err(QError::InvalidState(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        let mut op = op;
        op.hermitian = true;
        Ok(DensityOperator { op })
    }

    /// Pure state from a normalized vector.
    pub fn pure(layout: HilbertLayout, psi: &crate::linalg::CVec) -> Result<Self> {
        let n = psi.len();
        let ent = CMat::from_fn(n, n, |i, j| psi[i] * psi[j].conj());
        Self::new(Operator::new(layout, ent)?)
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.op.layout
    }

    pub fn entries(&self) -> &CMat {
        &self.op.entries
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}

pub fn tensor_product(a: &Operator, b: &Operator) -> Result<Operator> {
    let layout = a.layout.concat(&b.layout)?;
    let entries = a.entries.kronecker(&b.entries);
    Ok(Operator {
        layout,
        entries,
        hermitian: a.hermitian && b.hermitian,
    })
}

/// Matrix-level partial trace over a layout, keeping the listed subsystem
/// positions; output indices follow the order of `keep_pos`.
pub fn partial_trace_mat(m: &CMat, layout: &HilbertLayout, keep_pos: &[usize]) -> Result<CMat> {
    if m.nrows() != layout.total_dim() || m.ncols() != layout.total_dim() {
        return Err(QError::LayoutMismatch(format!(
            "matrix {}x{} vs layout dim {}",
            m.nrows(),
            m.ncols(),
            layout.total_dim()
        )));
    }
    for &k in keep_pos {
        if k >= layout.dims.len() {
            return Err(QError::LayoutMismatch(format!(
                "subsystem position {k} out of range ({} factors)",
                layout.dims.len()
            )));
        }
    }
    let drop_pos: Vec<usize> = (0..layout.dims.len())
        .filter(|k| !keep_pos.contains(k))
        .collect();
    let kept_dims: Vec<usize> = keep_pos.iter().map(|&k| layout.dims[k]).collect();
    let n_out: usize = kept_dims.iter().product();
    let drop_total: usize = drop_pos.iter().map(|&k| layout.dims[k]).product();
    let unravel_kept = |mut idx: usize| -> Vec<usize> {
        let mut out = vec![0usize; kept_dims.len()];
        for k in (0..kept_dims.len()).rev() {
            out[k] = idx % kept_dims[k];
            idx /= kept_dims[k];
        }
        out
    };
    let mut entries = CMat::zeros(n_out, n_out);
    let mut full_row = vec![0usize; layout.dims.len()];
    let mut full_col = vec![0usize; layout.dims.len()];
    for row in 0..n_out {
        let rm = unravel_kept(row);
        for col in 0..n_out {
            let cm = unravel_kept(col);
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..drop_total {
                // decode the traced multi-index
                let mut rem = t;
                for &dp in drop_pos.iter().rev() {
                    full_row[dp] = rem % layout.dims[dp];
                    full_col[dp] = full_row[dp];
                    rem /= layout.dims[dp];
                }
                for (out_k, &kp) in keep_pos.iter().enumerate() {
                    full_row[kp] = rm[out_k];
                    full_col[kp] = cm[out_k];
                }
                acc += m[(layout.ravel(&full_row), layout.ravel(&full_col))];
            }
            entries[(row, col)] = acc;
        }
    }
    Ok(entries)
}

/// Partial trace keeping the listed subsystems (in their original order).
pub fn partial_trace_op(op: &Operator, keep: &[&str]) -> Result<Operator> {
    let layout = &op.layout;
    for l in keep {
        layout.position(l)?;
    }
    let keep_pos: Vec<usize> = (0..layout.dims.len())
        .filter(|&k| keep.contains(&layout.labels[k].as_str()))
        .collect();
    let kept_dims: Vec<usize> = keep_pos.iter().map(|&k| layout.dims[k]).collect();
    let kept_labels: Vec<&str> = keep_pos.iter().map(|&k| layout.labels[k].as_str()).collect();
    let out_layout = if keep_pos.is_empty() {
        HilbertLayout::new(vec![1], vec!["scalar"])?
    } else {
        HilbertLayout::new(kept_dims, kept_labels)?
    };
    let entries = partial_trace_mat(&op.entries, layout, &keep_pos)?;
    Ok(Operator {
        layout: out_layout,
        entries,
        hermitian: op.hermitian,
    })
}

pub fn partial_trace(rho: &DensityOperator, keep: &[&str]) -> Result<DensityOperator> {
    let op = partial_trace_op(&rho.op, keep)?;
    DensityOperator::new(op)
}

pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    if a.layout != b.layout {
        return Err(QError::LayoutMismatch("commutator operands".into()));
    }
    let entries = &a.entries * &b.entries - &b.entries * &a.entries;
    Operator::new(a.layout.clone(), entries)
}

pub fn anticommutator(a: &Operator, b: &Operator) -> Result<Operator> {
    if a.layout != b.layout {
        return Err(QError::LayoutMismatch("anticommutator operands".into()));
    }
    let entries = &a.entries * &b.entries + &b.entries * &a.entries;
    Operator::new(a.layout.clone(), entries)
}

/// U = exp(-i h t) through the Hermitian eigendecomposition.
pub fn matrix_exponential_unitary(h: &Operator, t: f64) -> Result<Operator> {
    let policy = NumericPolicy::default();
    let scale = linalg::max_abs(&h.entries).max(1e-300);
    let defect = linalg::herm_defect(&h.entries) / scale;
    if defect > policy.herm_rel {
        return Err(QError::NotHermitian {
            defect,
            tol: policy.herm_rel,
        });
    }
    let u = linalg::expm_ih(&h.entries, t);
    let unit_defect = linalg::max_abs(&(&u.adjoint() * &u - CMat::identity(h.dim(), h.dim())));
    if unit_defect > policy.unitary_tol {
        return Err(QError::Invalid(format!(
            "propagator unitarity defect {unit_defect:e}"
        )));
    }
    Operator::new(h.layout.clone(), u)
}

/// tr(obs rho). Real to within the policy tolerance when obs is Hermitian.
pub fn expectation(obs: &Operator, rho: &DensityOperator) -> Result<Complex64> {
    if obs.layout != *rho.layout() {
        return Err(QError::LayoutMismatch("expectation operands".into()));
    }
    Ok(linalg::trace_of_product(&obs.entries, rho.entries()))
}

#[allow(unused)]
pub(crate) fn scaled(layout: &HilbertLayout, m: &CMat, s: f64) -> Operator {
    Operator {
        layout: layout.clone(),
        entries: m * cr(s),
        hermitian: false,
    }
}
