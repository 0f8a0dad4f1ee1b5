use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input length {len} exceeds context length {max}")]
    Overlength { len: usize, max: usize },

    #[error("invalid token id {id} for vocab of size {vocab}")]
    InvalidTokenId { id: u32, vocab: usize },

    #[error("target span {start}..{end} out of bounds for input of length {len}")]
    SpanOutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("target span length {span} does not match target length {target}")]
    SpanTargetMismatch { span: usize, target: usize },

    #[error("trigger span {trig_start}..{trig_end} overlaps target span {targ_start}..{targ_end}")]
    SpanOverlap {
        trig_start: usize,
        trig_end: usize,
        targ_start: usize,
        targ_end: usize,
    },

    #[error("non-finite gradient encountered")]
    NonFiniteGradient,

    #[error("training diverged: loss became non-finite at step {step}")]
    Diverged { step: usize },

    #[error("training did not improve mean corpus loss ({before:.6} -> {after:.6})")]
    NoImprovement { before: f64, after: f64 },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
