use microlm::LossKind;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Objective selector as it appears in config files. Carlini-Wagner uses
/// the default margin of zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossChoice {
    CrossEntropy,
    CarliniWagner,
}

impl From<LossChoice> for LossKind {
    fn from(c: LossChoice) -> LossKind {
        match c {
            LossChoice::CrossEntropy => LossKind::CrossEntropy,
            LossChoice::CarliniWagner => LossKind::CarliniWagner { kappa: 0.0 },
        }
    }
}

/// Trigger initialization. `target_string` tokenizes the first context's
/// resolved target and pads or truncates to the configured length;
/// `literal` tokenizes the given string verbatim (its tokenized length
/// overrides `trigger_len`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Random,
    TargetString,
    Literal(String),
}

/// Candidate evaluation schedule. All contexts are evaluated every
/// iteration; desk-scale context counts make exactness affordable and
/// keep the loss history monotone-comparable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalBatch {
    #[default]
    AllContexts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcgConfig {
    pub search_width: usize,
    pub top_k: usize,
    pub max_iterations: usize,
    pub loss_kind: LossChoice,
    pub init_mode: InitMode,
    pub trigger_len: usize,
    pub seed: u64,
    #[serde(default)]
    pub eval_batch: EvalBatch,
}

impl Default for GcgConfig {
    fn default() -> Self {
        Self {
            search_width: 128,
            top_k: 64,
            max_iterations: 500,
            loss_kind: LossChoice::CrossEntropy,
            init_mode: InitMode::TargetString,
            trigger_len: 16,
            seed: 0,
            eval_batch: EvalBatch::AllContexts,
        }
    }
}

impl GcgConfig {
    pub fn validate(&self, allowed_tokens: usize) -> Result<(), Error> {
        if self.search_width < 1 {
            return Err(Error::BadConfig("search_width must be >= 1".into()));
        }
        if self.trigger_len < 1 {
            return Err(Error::BadConfig("trigger_len must be >= 1".into()));
        }
        if self.top_k < 1 || self.top_k > allowed_tokens {
            return Err(Error::KTooLarge {
                k: self.top_k,
                allowed: allowed_tokens,
            });
        }
        Ok(())
    }
}
