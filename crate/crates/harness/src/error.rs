use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("locator '{locator}' matched {found} nodes, expected exactly one")]
    Locator { locator: String, found: usize },

    #[error("train/test sets overlap on {0:?}")]
    Disjointness(String),

    #[error("outcome list is empty")]
    EmptyOutcomes,

    #[error("invalid scenario: {0}")]
    BadScenario(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Sim(#[from] agentsim::Error),

    #[error(transparent)]
    Gcg(#[from] gcg::Error),

    #[error(transparent)]
    Lm(#[from] microlm::Error),
}

impl Error {
    pub fn io(path: impl std::fmt::Display, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_string(),
            source,
        }
    }

    pub fn json(path: impl std::fmt::Display, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.to_string(),
            source,
        }
    }
}
