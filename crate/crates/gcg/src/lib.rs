//! Discrete trigger search: single-context and universal multi-context
//! greedy coordinate gradient (GCG) with flexible trigger placement.
//!
//! One optimization step sums the one-hot input gradients over every
//! context, keeps the top-k most promising substitutions per trigger
//! position, samples a batch of single-substitution candidates, re-ranks
//! them by exact total loss, and greedily keeps the winner. The search
//! stops once greedy decoding of every training context emits the resolved
//! target verbatim, which is the quantity the attack metrics ultimately
//! measure.

mod candidates;
mod config;
mod context;
mod error;
mod mask;
mod optimizer;
mod retokenize;

pub use candidates::{sample_candidates, top_k_substitutions};
pub use config::{EvalBatch, GcgConfig, InitMode, LossChoice};
pub use context::{ContextSet, PromptContext, TargetSpec, Trigger};
pub use error::Error;
pub use mask::{allowed_token_mask, MaskPolicy, TokenMask};
pub use optimizer::{
    evaluate_candidates, gcg_step, init_trigger, optimize_trigger, GcgState, PreparedContexts,
    TriggerResult,
};
pub use retokenize::{check_retokenization, Retokenization};

pub type Result<T> = std::result::Result<T, Error>;
