use thiserror::Error;

/// Crate-wide error type. Variants map onto the failure modes of the
/// individual subsystems; the CLI turns config errors into exit code 2
/// and everything else into exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frequency vector is not admissible: {0}")]
    InvalidFrequencies(String),

    #[error("resonance degeneracy: |m . omega| = {value:e} below tolerance for m = {index:?}")]
    ResonanceDegeneracy { index: Vec<i64>, value: f64 },

    #[error("eigenvalue simplicity violated: gap {gap:e} below tolerance {tol:e}")]
    DegenerateEigenvalues { gap: f64, tol: f64 },

    #[error("operator has {found} negative eigenvalue(s); at least {required} required")]
    TooFewBoundStates { found: usize, required: usize },

    #[error("potential does not decay at the boundary: max |V| = {max_v:e} on the outer region")]
    PotentialNotDecaying { max_v: f64 },

    #[error("eigenvector does not vanish at the boundary: |phi| = {value:e}")]
    BoundaryContamination { value: f64 },

    #[error("resolvent shift {shift} is too close to the spectrum (distance {distance:e})")]
    NearResonantShift { shift: f64, distance: f64 },

    #[error("fixed-point iteration did not converge within {max_iter} iterations (residual {residual:e}); amplitude likely exceeds the profile radius")]
    ProfileRadiusExceeded { max_iter: usize, residual: f64 },

    #[error("profile coefficients are stale: base point differs from |z|^2 by {drift:e}")]
    StaleCoefficients { drift: f64 },

    #[error("limiting-absorption ladder unstable for m = {index:?} (relative jump {jump:.3}); refine the grid or enlarge the domain")]
    UnresolvedResonance { index: Vec<i64>, jump: f64 },

    #[error("embedded energy must be positive, got {0}")]
    NotEmbedded(f64),

    #[error("modulation Newton iteration diverged (residual {residual:e})")]
    ModulationDiverged { residual: f64 },

    #[error("field amplitude blew up: max |u| = {max_u:e} exceeds guard {guard:e}")]
    Instability { max_u: f64, guard: f64 },

    #[error("simplified FGR condition fails numerically for m = {index:?} (leading quadratic coefficient {value:e})")]
    FgrSimplifiedFailure { index: Vec<i64>, value: f64 },

    #[error("upstream check failed: {0}")]
    PipelineGate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
