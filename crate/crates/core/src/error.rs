use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller supplied an argument outside the documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Grid too small (or not a power of two) for an alias-free Nemytskii product.
    #[error("dealiasing violation: grid size {m} is not admissible for cutoff n = {n} (need a power of two >= {required})")]
    Dealiasing { m: usize, n: usize, required: usize },

    /// Mode cutoffs of two states disagree.
    #[error("mode cutoff mismatch: {left} vs {right}")]
    CutoffMismatch { left: usize, right: usize },

    /// A series or envelope left the representable range of f64.
    #[error("range error: {0}")]
    Range(String),

    /// The integrator produced a non-finite value.
    #[error("non-finite state at step {step} (t = {t}); the time step is too large for this nonlinearity")]
    NonFinite { step: u64, t: f64 },

    /// Declared bounds of a nonlinearity are contradicted by observation.
    #[error("nonlinearity bounds inconsistent: {0}")]
    SpecInconsistency(String),

    /// A check was requested outside the regime in which its inequality is stated.
    #[error("check not applicable: {0}")]
    Inapplicable(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed measure file: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
