use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("html parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unknown element id '{0}' on the current page")]
    UnknownBid(String),

    #[error("element '{0}' is not fillable")]
    NotFillable(String),

    #[error("tab is closed")]
    TabClosed,

    #[error("url '{0}' is not a known page")]
    UnknownUrl(String),

    #[error("injection marker found {found} times, expected exactly one")]
    MarkerCount { found: usize },

    #[error(transparent)]
    Lm(#[from] microlm::Error),
}
