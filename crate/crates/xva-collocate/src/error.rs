//! Error type shared by every module of the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the engine.
///
/// The CLI maps these onto exit codes: input problems ([`Error::Validation`],
/// [`Error::Domain`], [`Error::Config`]) exit with code 2, numerical problems
/// ([`Error::Solver`], [`Error::Numerical`]) with code 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on arguments or market data was violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// A query outside the supported domain (e.g. discounting past the end
    /// of the curve; no extrapolation is performed).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration file could not be read or failed field-level checks.
    #[error("config error: {0}")]
    Config(String),

    /// An iterative solver did not converge; carries the worst residual seen.
    #[error("solver failure: {what} (worst residual {residual:e})")]
    Solver { what: String, residual: f64 },

    /// A numerically meaningless or unattainable result (degenerate
    /// truncation, undefined relative-error metric, loss of positive
    /// definiteness, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Filesystem problems while reading configs or writing reports.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI should report for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Domain(_) | Error::Config(_) | Error::Io(_) => 2,
            Error::Solver { .. } | Error::Numerical(_) => 3,
        }
    }
}
