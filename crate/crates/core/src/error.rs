//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count {0} outside supported range {min}..={max}",
        min = crate::state::MIN_QUBITS, max = crate::state::MAX_QUBITS)]
    QubitCount(usize),

    #[error("qubit count {0} must be even")]
    OddQubitCount(usize),

    #[error("invalid qubit pair ({a}, {b}) on {n} qubits")]
    QubitIndex { a: usize, b: usize, n: usize },

    #[error("amplitude vector length {0} is not 2^n for a supported n")]
    AmplitudeLength(usize),

    #[error("state norm² = {0}, expected 1")]
    NotNormalized(f64),

    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { expected: usize, got: usize },

    #[error("bitstring length {got} does not match qubit count {expected}")]
    BitstringLength { expected: usize, got: usize },

    #[error("invalid bitstring character {0:?}")]
    BitstringChar(char),

    #[error("instance already has peaking layers attached")]
    PeakingAlreadyAttached,

    #[error("layer {layer} has {got} gates, expected {expected}")]
    GateCount {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),

    #[error("exponential fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("exponential fit requires positive values, got {0}")]
    NonPositiveValue(f64),

    #[error("brute-force search supports at most 4 qubits, got {0}")]
    BruteForceTooLarge(usize),

    #[error("peaking construction does not reduce to a single layer: {0}")]
    StructuralFailure(String),

    #[error("{path}:{line}: {msg}")]
    CircuitFile {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
