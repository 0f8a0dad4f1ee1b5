use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("allowed token mask is empty")]
    EmptyMask,

    #[error("top_k {k} exceeds the {allowed} allowed tokens")]
    KTooLarge { k: usize, allowed: usize },

    #[error("invalid config: {0}")]
    BadConfig(String),

    #[error("context '{label}': assembled length {len} exceeds context window {max}")]
    Overlength {
        label: String,
        len: usize,
        max: usize,
    },

    #[error("context '{label}': unresolved placeholder '{{{placeholder}}}'")]
    UnresolvedPlaceholder { placeholder: String, label: String },

    #[error("context '{label}': resolved target is empty")]
    EmptyTarget { label: String },

    #[error("duplicate context label '{0}'")]
    DuplicateLabel(String),

    #[error("context set is empty")]
    EmptyContextSet,

    #[error("literal trigger token {0:?} is outside the allowed mask")]
    LiteralOutsideMask(String),

    #[error(transparent)]
    Lm(#[from] microlm::Error),
}
