use thiserror::Error;

#[derive(Debug, Error)]
pub enum QError {
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("unknown subsystem label '{0}'")]
    UnknownLabel(String),

    #[error("operator is not Hermitian: relative defect {defect:.3e} exceeds {tol:.3e}")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("not a valid density operator: {0}")]
    InvalidState(String),

    #[error("dimension {dim} exceeds dense cap {cap}; large oscillator models go through the analytic block route")]
    DimensionCap { dim: usize, cap: usize },

    #[error("strict energy conservation violated: {0}")]
    SecViolation(String),

    #[error("degenerate Bohr spectrum: {0}")]
    Degenerate(String),

    #[error("degeneracy lift too small: epsilon {epsilon:.3e} below required {required:.3e}")]
    LiftTooSmall { epsilon: f64, required: f64 },

    #[error("kinetic schedule does not match generator structure: {0}")]
    ScheduleMismatch(String),

    #[error("negative rate {rate:.3e} for channel {channel} rejected in Markovian mode")]
    NegativeRate { rate: f64, channel: String },

    #[error("generator fixed point is degenerate: null space dimension {null_dim}")]
    DegenerateAttractor { null_dim: usize },

    #[error("positivity violated during integration: min eigenvalue {min_eig:.3e} at t={t}")]
    PositivityLoss { min_eig: f64, t: f64 },

    #[error("time grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("phase unwrap failed: jump {jump:.3} rad between t={t0} and t={t1}; refine the grid")]
    PhaseUnwrap { jump: f64, t0: f64, t1: f64 },

    #[error("Fock truncation too small: need n_max >= {required}, got {given}")]
    TruncationTooSmall { required: usize, given: usize },

    #[error("truncation leakage {leakage:.3e} exceeds 1e-8; increase n_max")]
    TruncationLeakage { leakage: f64 },

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, QError>;
