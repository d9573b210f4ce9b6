use thiserror::Error;

/// Errors raised while configuring or running a design analysis.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("history is empty")]
    EmptyHistory,

    #[error("null-support violation: observed reward has zero likelihood under the null")]
    NullSupportViolation,

    #[error("prior incompatible with minimum effect: no replication met the effect filter")]
    NoEffectReplications,

    #[error("no design meets power constraint within T_max")]
    NoFeasibleDesign,

    #[error("history was not produced by the exact runner (entry with {0} draws)")]
    NotExactHistory(u32),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
