use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("epsilon {eps} exceeds the grid limit 1/(2*sqrt({dim})) = {limit}")]
    EpsTooLarge { eps: f64, dim: usize, limit: f64 },

    #[error("epsilon {0} outside (0, 1/2]")]
    EpsOutOfRange(f64),

    #[error("grid of {count} points exceeds the enumeration cap {cap}")]
    DimTooLargeForEnumeration { count: u128, cap: usize },

    #[error("no witness hyperplane for point pair ({0}, {1})")]
    MissingWitness(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension must be at least 1")]
    ZeroDimension,

    #[error("point norm {0} lies outside the unit ball")]
    OutsideUnitBall(f64),

    #[error("hyperplane weights have zero norm")]
    ZeroNormal,

    #[error("hyperplane bias {0} outside [-1, 1]")]
    BiasOutOfRange(f64),

    #[error("empty sequence")]
    EmptySequence,

    #[error("all labels are negative and every region vector is realized")]
    AllNegativeLabels,

    #[error("label vector length {labels} does not match point count {points}")]
    LabelCountMismatch { labels: usize, points: usize },

    #[error("signal rows are not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("requested {k} signals in dimension {d}")]
    KExceedsD { k: usize, d: usize },

    #[error("round {round} exceeds horizon {horizon}")]
    HorizonExceeded { round: usize, horizon: usize },

    #[error("expert class of size {count} exceeds cap {cap}")]
    ClassTooLarge { count: u128, cap: u128 },

    #[error("no experts supplied")]
    EmptyExpertSet,

    #[error("region vector length {got} does not match {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("network has {0} output neurons, expected one")]
    MultiOutput(usize),

    #[error("network has no hidden layer")]
    NoHiddenLayer,

    #[error("network has {got} hidden layers, expected {expected}")]
    DepthMismatch { expected: usize, got: usize },

    #[error("output weight {index} is negative; canonicalize first")]
    NotCanonical { index: usize },

    #[error("pruning failed at layer {layer} neuron {neuron} after {retries} attempts")]
    PruneFailed { layer: usize, neuron: usize, retries: usize },

    #[error("lower-bound audit failed: {0}")]
    AuditFailed(String),

    #[error("label {0} is not binary")]
    NonBinaryLabel(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed document: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
