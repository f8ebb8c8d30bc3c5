use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("projection did not converge after {iterations} cycles (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("shrinkage {delta} exceeds the maximum shrinkage {max} of the set")]
    EmptyShrunkSet { delta: f64, max: f64 },

    #[error("exact sharpness enumeration needs {subsets} row subsets (cap {cap})")]
    EnumerationTooLarge { subsets: u128, cap: u128 },

    #[error("point {point:?} lies outside the utility domain [{lo}, {hi}] in coordinate {coord}")]
    DomainViolation {
        point: Vec<f64>,
        coord: usize,
        lo: f64,
        hi: f64,
    },

    #[error("invalid utility model: {0}")]
    InvalidModel(String),

    #[error("constant certification failed: {0}")]
    CertificationFailure(String),

    #[error("price response solver failed: {0}")]
    SolverFailure(String),

    #[error("price response {point:?} is on the domain boundary; the exact Jacobian is undefined")]
    BoundaryResponse { point: Vec<f64> },

    #[error("invalid constants: {0}")]
    InvalidConstants(String),

    #[error("initial demand target is not inside the required shrunk set (depth {depth:e} < {required:e})")]
    UnsafeInitialization { depth: f64, required: f64 },

    #[error("initialization probe for user {user} left the interior (depth {depth:e})")]
    ProbeViolation { user: usize, depth: f64 },

    #[error(
        "Jacobian estimate of user {user} at t={t} has sigma_min {sigma_min:e} < {threshold:e}"
    )]
    SingularJacobianEstimate {
        user: usize,
        t: usize,
        sigma_min: f64,
        threshold: f64,
    },

    #[error("safety margin violated at t={t}: {what}")]
    SafetyMarginViolation { t: usize, what: String },

    #[error("trace and central solution disagree on the instance ({trace} vs {central})")]
    InstanceMismatch { trace: String, central: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),

    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file {path}: {reason}")]
    Parse { path: String, reason: String },
}
