use thiserror::Error;

use crate::statevec::GateKind;

pub type Result<T> = std::result::Result<T, QcbmError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QcbmError {
    #[error("{requested} qubits exceeds the qubit cap of {cap}")]
    Capacity { requested: usize, cap: usize },

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("gate {0:?} is parameterized and needs an angle")]
    MissingAngle(GateKind),

    #[error("gate {0:?} takes no angle")]
    UnexpectedAngle(GateKind),

    #[error("gate {0:?} has no generator")]
    NotParameterized(GateKind),

    #[error("qubit {qubit} out of range for {n_qubits} qubits")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("register shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("invalid hierarchy stage: {0}")]
    InvalidSchedule(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("covariance matrix is not symmetric positive-definite")]
    NotPositiveDefinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {field}: {message}")]
    Config { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl QcbmError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        QcbmError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for QcbmError {
    fn from(e: std::io::Error) -> Self {
        QcbmError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for QcbmError {
    fn from(e: serde_json::Error) -> Self {
        QcbmError::Io(e.to_string())
    }
}

impl From<csv::Error> for QcbmError {
    fn from(e: csv::Error) -> Self {
        QcbmError::Io(e.to_string())
    }
}
