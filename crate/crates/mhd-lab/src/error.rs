use thiserror::Error;

/// Errors produced by the library.
///
/// The CLI maps these onto the exit-code contract: configuration problems
/// exit 2, loss of numerical validity exits 3, I/O failures exit 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid or run configuration. Carries every violation found,
    /// not just the first.
    #[error("configuration error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    /// Two fields on different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// An operation precondition was violated (zero-mode, parity, support…).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Advective CFL bound exceeded.
    #[error("CFL violation at t={t}: dt={dt} exceeds bound; suggested dt <= {suggested}")]
    CflViolation { t: f64, dt: f64, suggested: f64 },

    /// NaN or blow-up guard tripped; the simulation is no longer valid.
    #[error("numerical validity lost: {0}")]
    Diverged(String),

    /// Support leaked past the window where the truncated operator is exact.
    #[error("windowed truncation invalid: {0}")]
    TruncationInvalid(String),

    /// Sample-based operation needs uniform spacing or more samples.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// Requested functional is definition-empty (e.g. e1 with s < 2).
    #[error("definition-empty: {0}")]
    DefinitionEmpty(String),

    /// Malformed snapshot or record file.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    /// Exit code for the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::GridMismatch(_) | Error::Precondition(_) => 2,
            Error::CflViolation { .. } | Error::Diverged(_) | Error::TruncationInvalid(_) => 3,
            Error::Io(_) => 4,
            _ => 2,
        }
    }
}
