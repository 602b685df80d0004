use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid reward matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid strategy profile: {0}")]
    InvalidProfile(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("agent protocol violation: {0}")]
    Protocol(&'static str),

    #[error("enumeration of {count} assignments exceeds the limit of {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("no perfect matching exists in {0}")]
    NoPerfectMatching(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
