use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("spectral parameter must lie in the upper half plane (Im z = {0})")]
    NotUpperHalfPlane(f64),
    #[error("fixed-point solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("density is not normalized: total mass {mass} (tolerance {tolerance:e})")]
    NotNormalized { mass: f64, tolerance: f64 },
    #[error("energy {0} is at or outside the spectral edge")]
    OutsideBulk(f64),
    #[error("collision: gap {gap:e} below floor {floor:e}")]
    Collision { gap: f64, floor: f64 },
    #[error("eigensolver failure: {0}")]
    Eigensolver(String),
    #[error("degenerate eigenvalue: gap {0:e}")]
    Degenerate(f64),
    #[error("schedule rejected: {0}")]
    Schedule(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("singular configuration: {0}")]
    Singular(String),
    #[error("mismatched records: {0}")]
    Mismatch(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Collision { .. }
                | Error::Eigensolver(_)
                | Error::Degenerate(_)
                | Error::Singular(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
