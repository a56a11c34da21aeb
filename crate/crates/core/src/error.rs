use thiserror::Error;

/// Errors raised by the protocol engines, the optimizer and the figure drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QffcrError {
    #[error("parameter `{field}` = {value} is outside its legal range {range}")]
    Domain {
        field: &'static str,
        value: f64,
        range: String,
    },

    #[error("{engine} engine supports at most {max} qubits, got {n}")]
    Dimension {
        engine: &'static str,
        n: usize,
        max: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("binomial coefficient C({n}, {k}) does not fit in 64 bits")]
    Overflow { n: usize, k: usize },

    #[error("degenerate {what}: |value| = {magnitude:e} is below {threshold:e}")]
    Degenerate {
        what: &'static str,
        magnitude: f64,
        threshold: f64,
    },

    #[error("realized {metric} = {value} lies outside its physical range")]
    Unphysical { metric: &'static str, value: f64 },

    #[error("state is not Hermitian (max deviation {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("no grid point satisfies the constraint: {0}")]
    ConstraintInfeasible(String),

    #[error("identity check failed: {0}")]
    Identity(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),
}

impl QffcrError {
    /// Errors that mark a single parameter point as infeasible rather than
    /// aborting a sweep.
    pub fn is_point_infeasible(&self) -> bool {
        matches!(
            self,
            QffcrError::Degenerate { .. } | QffcrError::Unphysical { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, QffcrError>;
