/// Single knob record for every numerical tolerance in the crate.
///
/// All matrix norms below are the entrywise max norm; "rel" tolerances are
/// relative to the norms of the operands.
#[derive(Debug, Clone)]
pub struct NumericPolicy {
    /// Hermiticity: ||A - A'||_inf <= herm_rel * ||A||_inf.
    pub herm_rel: f64,
    /// |tr rho - 1| bound for density operators.
    pub trace_tol: f64,
    /// Smallest admissible eigenvalue of a density operator is -psd_tol.
    pub psd_tol: f64,
    /// ||U'U - I||_inf bound for unitaries.
    pub unitary_tol: f64,
    /// Strict-energy-conservation: ||[A,B]||_inf / (||A||_inf ||B||_inf).
    pub sec_rel: f64,
    /// Residuals of eigenoperator relations and dual-form flux identities.
    pub eigen_tol: f64,
    /// Bohr frequencies closer than degeneracy_rel * max|omega| collide.
    pub degeneracy_rel: f64,
    /// Eigenvalues closer than level_rel * max|eps| form one level.
    pub level_rel: f64,
    /// Richardson step-control target per unit time for the RK4 integrator.
    pub integrator_tol: f64,
    /// Abort integration when a state eigenvalue drops below -positivity_abort.
    pub positivity_abort: f64,
    /// Frame/propagator grid self-consistency bound (coarse vs refined).
    pub grid_refine_tol: f64,
    /// Eigenvalue floor applied inside ln of near-singular states.
    pub ln_floor: f64,
    /// Dense full-matrix propagation cap (dimension).
    pub matrix_dim_cap: usize,
    /// Dense state-vector cap (dimension).
    pub vector_dim_cap: usize,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        NumericPolicy {
            herm_rel: 1e-12,
            trace_tol: 1e-10,
            psd_tol: 1e-10,
            unitary_tol: 1e-10,
            sec_rel: 1e-9,
            eigen_tol: 1e-9,
            degeneracy_rel: 1e-8,
            level_rel: 1e-12,
            integrator_tol: 1e-8,
            positivity_abort: 1e-6,
            grid_refine_tol: 1e-6,
            ln_floor: 1e-30,
            matrix_dim_cap: 2048,
            vector_dim_cap: 20_000,
        }
    }
}
