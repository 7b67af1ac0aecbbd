use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("width {0} is not a power of two")]
    WidthNotPowerOfTwo(usize),
    #[error("hash degree must be at least 2, got {0}")]
    DegreeTooSmall(usize),
    #[error("expected a {expected} hash family")]
    WrongHashKind { expected: &'static str },
    #[error("edge sets do not match: {0}")]
    EdgeMismatch(String),
    #[error("sketch configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("scale factor {0} outside [0, 1]")]
    ScaleOutOfRange(f64),
    #[error("no estimates to combine")]
    NoEstimates,
    #[error("invalid join graph: {0}")]
    InvalidGraph(String),
    #[error("columns have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("empty partition")]
    EmptyPartition,
    #[error("join attribute {0} has no incident edge")]
    NoIncidentEdge(usize),
    #[error("no sketch materialized for the requested edge subset")]
    MissingSubset,
    #[error("relation has {0} attributes; at most 64 are supported")]
    TooManyAttributes(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid predicate: {0}")]
    InvalidPredicate(String),
}
