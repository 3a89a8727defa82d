//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by modeling, design construction, and estimation.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The observed series cannot support a fit (e.g. all zeros).
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// Too few events or rows to build a usable design.
    #[error("insufficient design: {0}")]
    InsufficientDesign(String),

    /// Complete separation in the propensity model.
    #[error("complete separation on covariate `{covariate}`")]
    Separation { covariate: String },

    /// A linear system required by an estimator is singular.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// One estimation arm has no usable rows.
    #[error("insufficient arm: {0}")]
    InsufficientArm(String),

    /// The moderator design matrix is singular.
    #[error("collinear moderators: {0}")]
    CollinearModerators(String),

    /// A region is missing from the population table.
    #[error("missing population for region `{0}`")]
    MissingPopulation(String),

    /// A data file could not be parsed.
    #[error("ingest error in {path}: {detail}")]
    Ingest { path: String, detail: String },

    /// Run configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for input problems, 3 for
    /// estimation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::MissingPopulation(_)
            | Error::Ingest { .. }
            | Error::Config(_)
            | Error::Io(_) => 2,
            Error::DegenerateFit(_)
            | Error::InsufficientDesign(_)
            | Error::Separation { .. }
            | Error::RankDeficient(_)
            | Error::InsufficientArm(_)
            | Error::CollinearModerators(_) => 3,
        }
    }
}
