use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network parameters: {0}")]
    InvalidParams(String),

    #[error("pair {m} is not matched to sub-channel {k}")]
    NotMatched { k: usize, m: usize },

    #[error("pair {m} is already matched to sub-channel {k}")]
    AlreadyMatched { k: usize, m: usize },

    #[error("water-filling for pair {pair} has no usable channel (all first-hop gains are zero)")]
    DegenerateWaterfill { pair: usize },

    #[error("exhaustive search refused: K*N = {cells} exceeds the limit of {limit}")]
    SearchTooLarge { cells: usize, limit: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T> = std::result::Result<T, Error>;
