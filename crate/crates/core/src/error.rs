use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension must be between 1 and {max}, got {dim}")]
    BadDimension { dim: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite entry in input")]
    NonFinite,

    #[error("trace must be 1, got {0}")]
    BadTrace(f64),

    #[error("operator is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),

    #[error("qubit operation needs dimension 2, got {0}")]
    NotQubit(usize),

    #[error("Bloch vector length {0} exceeds 1")]
    OutsideBlochBall(f64),

    #[error("partition function is undefined at infinite beta")]
    InfiniteBeta,

    #[error("not full rank (min eigenvalue {0:e})")]
    NotFullRank(f64),

    #[error("invalid probability vector: {0}")]
    BadProbabilities(String),

    #[error(
        "not objective: conditional states {i} and {j} of subenvironment {subenv} overlap ({overlap:e})"
    )]
    NotObjective {
        subenv: usize,
        i: usize,
        j: usize,
        overlap: f64,
    },

    #[error("Kraus operators are not trace preserving (deviation {0:e})")]
    NotTracePreserving(f64),

    #[error("not a strict partial thermalization: ||A|| = {0}")]
    NotStrictContraction(f64),

    #[error("affine map leaves the Bloch ball: {0}")]
    NotBallPreserving(String),

    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),

    #[error("environment dimension {d_e} is smaller than system dimension {d_s}")]
    EnvironmentTooSmall { d_s: usize, d_e: usize },

    #[error("bin {0} of the partition is empty")]
    EmptyBin(usize),

    #[error("oracle scale exceeded: {0}")]
    OracleScaleExceeded(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
