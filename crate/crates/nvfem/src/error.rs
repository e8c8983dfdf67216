//! Error type shared across the crate.

use std::fmt;

/// Errors produced by mesh construction, space building, assembly and solvers.
#[derive(Debug)]
pub enum Error {
    /// A caller-supplied argument was out of range or malformed.
    InvalidArgument(String),
    /// Polynomial degree outside the supported set {1, 2}.
    UnsupportedDegree(usize),
    /// A requested option is not available in this configuration
    /// (e.g. mass lumping with quadratic elements).
    UnsupportedOption(String),
    /// Vector or matrix dimensions do not match the operator.
    DimensionMismatch { expected: usize, got: usize },
    /// Problem too large for a dense fallback path.
    DenseGuardExceeded { size: usize, limit: usize },
    /// The system has no interior unknowns to solve for.
    DegenerateSystem(String),
    /// An iterative solver failed to reach the requested tolerance.
    /// Carries the best iterate found so callers can inspect it.
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
    /// A fixed-point iteration did not stagnate within its iteration cap.
    /// `history` holds the successive-difference norms seen so far.
    FixedPointStalled { history: Vec<f64> },
    /// Unknown benchmark problem identifier.
    UnknownProblem(String),
    /// I/O failure reading or writing meshes and matrices.
    Io(std::io::Error),
    /// Malformed text input (mesh files, matrix files).
    Parse(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::UnsupportedDegree(p) => {
                write!(f, "unsupported polynomial degree {p} (expected 1 or 2)")
            }
            Error::UnsupportedOption(msg) => write!(f, "unsupported option: {msg}"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::DenseGuardExceeded { size, limit } => {
                write!(f, "dense guard exceeded: size {size} > limit {limit}")
            }
            Error::DegenerateSystem(msg) => write!(f, "degenerate system: {msg}"),
            Error::NonConvergence {
                iterations,
                residual,
                ..
            } => write!(
                f,
                "solver did not converge after {iterations} iterations (relative residual {residual:.3e})"
            ),
            Error::FixedPointStalled { history } => write!(
                f,
                "fixed point did not stagnate within {} iterations",
                history.len()
            ),
            Error::UnknownProblem(id) => write!(f, "unknown problem id: {id}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
