use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite entry encountered")]
    NonFinite,
    #[error("matrix is not hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("payload is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("explicit scheme unstable: alpha = {alpha} exceeds 0.5")]
    Unstable { alpha: f64 },
    #[error("Peclet condition violated: chi = {chi} > alpha = {alpha} and Gamma = {gamma} <= 0")]
    Peclet { alpha: f64, chi: f64, gamma: f64 },
    #[error("Neumann series diverges: series argument norm {norm} >= 1")]
    Divergent { norm: f64 },
    #[error("zero-probability post-selection (p = {p:.3e})")]
    ZeroProbability { p: f64 },
    #[error("no post-selected shots")]
    EmptyPostSelection,
    #[error("layout needs {requested} qubits, cap is {cap}")]
    QubitCap { requested: usize, cap: usize },
    #[error("term count {terms} exceeds ceiling {ceiling}")]
    TermCeiling { terms: u128, ceiling: u128 },
    #[error("infeasible plan: {0}")]
    Infeasible(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Infeasible,
    Ceiling,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::QubitCap { .. } | Error::TermCeiling { .. } => ErrorClass::Ceiling,
            Error::Unstable { .. }
            | Error::Peclet { .. }
            | Error::Divergent { .. }
            | Error::Infeasible(_)
            | Error::ZeroProbability { .. }
            | Error::EmptyPostSelection
            | Error::Singular => ErrorClass::Infeasible,
            _ => ErrorClass::Input,
        }
    }
}
