use std::collections::BTreeMap;

use microlm::{TokenSeq, Vocab};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::mask::TokenMask;

/// The attacker-controlled token span being optimized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    pub ids: TokenSeq,
    /// Detokenization of `ids`; what actually lands in the page HTML.
    pub text: String,
}

impl Trigger {
    pub fn from_ids(ids: TokenSeq, vocab: &Vocab) -> Result<Self, Error> {
        let text = vocab.detokenize(&ids)?;
        Ok(Self { ids, text })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn satisfies_mask(&self, mask: &TokenMask) -> bool {
        self.ids.iter().all(|&id| mask.contains(id))
    }
}

/// One compiled prompt cleaved at the injection point: everything before
/// the trigger and everything after it, both already tokenized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub pre: TokenSeq,
    pub post: TokenSeq,
    pub label: String,
    /// Per-context template bindings (credentials, sink ids, ...).
    #[serde(default)]
    pub bindings: BTreeMap<String, String>,
}

impl PromptContext {
    pub fn new(pre: TokenSeq, post: TokenSeq, label: impl Into<String>) -> Self {
        Self {
            pre,
            post,
            label: label.into(),
            bindings: BTreeMap::new(),
        }
    }

    pub fn with_bindings(mut self, bindings: BTreeMap<String, String>) -> Self {
        self.bindings = bindings;
        self
    }

    /// Full input for a given trigger and resolved target:
    /// `pre || trigger || post || target`, with the trigger and target
    /// span positions alongside.
    pub fn assemble(
        &self,
        trigger: &TokenSeq,
        target: &TokenSeq,
    ) -> (TokenSeq, std::ops::Range<usize>, std::ops::Range<usize>) {
        let full = TokenSeq::concat(&[&self.pre, trigger, &self.post, target]);
        let trig_start = self.pre.len();
        let targ_start = trig_start + trigger.len() + self.post.len();
        (
            full,
            trig_start..trig_start + trigger.len(),
            targ_start..targ_start + target.len(),
        )
    }
}

/// The `n` prompts a universal trigger must satisfy simultaneously.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSet {
    contexts: Vec<PromptContext>,
}

impl ContextSet {
    pub fn new(contexts: Vec<PromptContext>) -> Result<Self, Error> {
        if contexts.is_empty() {
            return Err(Error::EmptyContextSet);
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &contexts {
            if !seen.insert(c.label.clone()) {
                return Err(Error::DuplicateLabel(c.label.clone()));
            }
        }
        Ok(Self { contexts })
    }

    pub fn singleton(context: PromptContext) -> Self {
        Self {
            contexts: vec![context],
        }
    }

    pub fn n(&self) -> usize {
        self.contexts.len()
    }

    pub fn contexts(&self) -> &[PromptContext] {
        &self.contexts
    }
}

/// Target output: a literal string or a template with `{placeholder}`
/// slots filled from each context's bindings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub template: String,
}

impl TargetSpec {
    pub fn literal(s: impl Into<String>) -> Self {
        Self { template: s.into() }
    }

    /// Substitute `{name}` slots from the context's bindings.
    pub fn resolve(&self, ctx: &PromptContext) -> Result<String, Error> {
        let mut out = String::with_capacity(self.template.len());
        let mut rest = self.template.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let Some(close) = after.find('}') else {
                // unmatched brace: treat literally
                out.push('{');
                rest = after;
                continue;
            };
            let name = &after[..close];
            match ctx.bindings.get(name) {
                Some(value) => out.push_str(value),
                None => {
                    return Err(Error::UnresolvedPlaceholder {
                        placeholder: name.to_string(),
                        label: ctx.label.clone(),
                    })
                }
            }
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        if out.is_empty() {
            return Err(Error::EmptyTarget {
                label: ctx.label.clone(),
            });
        }
        Ok(out)
    }

    pub fn resolve_ids(&self, ctx: &PromptContext, vocab: &Vocab) -> Result<TokenSeq, Error> {
        let text = self.resolve(ctx)?;
        let ids = vocab.tokenize(&text);
        if ids.is_empty() {
            return Err(Error::EmptyTarget {
                label: ctx.label.clone(),
            });
        }
        Ok(ids)
    }
}
