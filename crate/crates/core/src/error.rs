use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // field
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} is too large; products must fit 64-bit intermediates (p < 2^31)")]
    ModulusTooLarge(u64),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    // sharing
    #[error("invalid shareholder set: {0}")]
    BadShareholders(String),
    #[error("id {0} is not a member of the shareholder set")]
    NotMember(u64),
    #[error("polynomial degree {tau} is invalid for {holders} shareholders")]
    BadDegree { tau: usize, holders: usize },
    #[error("share map keys do not match the shareholder set")]
    KeySetMismatch,
    #[error("{got} shares cannot reconstruct a degree-{tau} secret")]
    TooFewShares { got: usize, tau: usize },

    // fixed point
    #[error("value {value} outside the encodable range |x| < {limit}")]
    OutOfRange { value: f64, limit: f64 },

    // topology
    #[error("graph is not connected")]
    DisconnectedGraph,
    #[error("bad parameters: {0}")]
    BadParameters(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    // consensus
    #[error("no finite iteration count exists: contraction radius {0} >= 1")]
    NoFiniteK(f64),
    #[error("weights must be positive and sum to 1 (sum = {0})")]
    BadWeights(f64),

    // protocol
    #[error("learner {receiver} is missing the share bundle from learner {sender}")]
    MissingBundle { sender: usize, receiver: usize },
    #[error("round {round}: learner {learner} coordinate {coord} has |theta| = {value}, above the admissible {limit}")]
    RangeViolation {
        round: usize,
        learner: usize,
        coord: usize,
        value: f64,
        limit: f64,
    },
    #[error("learner {0} has no neighbors in this round")]
    IsolatedLearner(usize),
    #[error("iteration count violated: {0}")]
    IterationBound(String),
    #[error("prime bound violated: {0}")]
    PrimeBound(String),
    #[error("invalid configuration: {0}")]
    Config(String),

    // privacy
    #[error("transcript is incomplete: {0}")]
    TranscriptIncomplete(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
