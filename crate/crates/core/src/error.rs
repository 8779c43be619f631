use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmcError {
    #[error("lag must be non-negative, got {0}")]
    NegativeLag(f64),
    #[error("value {value} outside admissible range {range}")]
    OutOfRange { value: f64, range: String },
    #[error("grid size must be a power of two >= 2, got {0}")]
    InvalidGrid(usize),
    #[error("circulant embedding not positive semidefinite: eigenvalue {min} < -{tol} (max {max})")]
    NotEmbeddable { min: f64, max: f64, tol: f64 },
    #[error("gamma must lie in [0, sqrt 2), got {0}")]
    InvalidGamma(f64),
    #[error("interval endpoint {0} is not on the grid")]
    MisalignedInterval(f64),
    #[error("frequency cutoff {n_max} exceeds G/8 = {limit}")]
    Nyquist { n_max: usize, limit: usize },
    #[error("level {level} too deep: {reason}")]
    TooDeep { level: u32, reason: String },
    #[error("no feasible exponents: tau = {tau} >= D_gamma = {d_gamma}")]
    NoFeasibleExponents { tau: f64, d_gamma: f64 },
    #[error("exponents infeasible: theta = {theta} <= 0")]
    InfeasibleExponents { theta: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = GmcError> = std::result::Result<T, E>;

pub(crate) fn out_of_range(value: f64, range: impl Into<String>) -> GmcError {
    GmcError::OutOfRange { value, range: range.into() }
}
