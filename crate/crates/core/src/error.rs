use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("block index {index} out of range for partition with {blocks} blocks")]
    BlockOutOfRange { index: usize, blocks: usize },
    #[error("a merger needs at least two distinct blocks, got {0}")]
    TooFewBlocks(usize),
    #[error("size must be positive")]
    ZeroSize,
    #[error("restriction to [{0}] leaves no elements")]
    EmptyRestriction(u32),
    #[error("double factorial undefined for {0}")]
    DoubleFactorialDomain(i64),
    #[error("enumeration of {size} labels exceeds the cap of {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("tree syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("increasing condition violated: child {child} under parent {parent}")]
    NotIncreasing { parent: u32, child: u32 },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("node is not a child of the given parent")]
    NotAChild,
    #[error("rate index out of range: need 2 <= k <= b, got b={b}, k={k}")]
    RateRange { b: usize, k: usize },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("all merger rates vanish for b={0}")]
    ZeroRates(usize),
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("n={n} outside the supported range {lo}..={hi}")]
    OracleRange { n: usize, lo: usize, hi: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
}

pub type Result<T> = std::result::Result<T, Error>;
