use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported dimension {0} (only 1 and 2 are supported)")]
    UnsupportedDimension(usize),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("ellipticity violated at node {node}: smallest value {value:e}")]
    EllipticityViolated { node: usize, value: f64 },
    #[error("coefficient profile is not periodic: {0}")]
    NonPeriodic(String),
    #[error("cells of radius {radius} leave node {node} uncovered")]
    CoverFails { radius: f64, node: usize },
    #[error("{nodes} nodes exceed the dense eigensolver cap of {cap}")]
    SizeCap { nodes: usize, cap: usize },
    #[error("operator is not positive semidefinite: eigenvalue {0:e}")]
    NotSemidefinite(f64),
    #[error("observation set is empty")]
    EmptySet,
    #[error("fractal depth {depth} is under-resolved: finest interval {finest:e} < 2h = {two_h:e}")]
    UnderResolved { depth: usize, finest: f64, two_h: f64 },
    #[error("frequency cutoff {mu} exceeds the largest discrete frequency {max}")]
    CutoffAboveSpectrum { mu: f64, max: f64 },
    #[error("spectral subspace at cutoff {0} is empty")]
    EmptySubspace(f64),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("time set: {0}")]
    InvalidTimeSet(String),
    #[error("impulse schedule violates the spacing ratio at index {index}: gap {gap:e} < {tau} x {previous:e}")]
    ScheduleTooFast { index: usize, gap: f64, previous: f64, tau: f64 },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("vector length {got} does not match {expected} grid nodes")]
    LengthMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
