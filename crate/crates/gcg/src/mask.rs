use microlm::{TokenId, Vocab};
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Token filter for trigger positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Printable ASCII only, no specials, and none of `<` `>` `&` so the
    /// trigger embeds into HTML without altering markup.
    PrintableAsciiNonSpecial,
}

/// Sorted set of token ids a trigger may use.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenMask {
    allowed: Vec<TokenId>,
}

impl TokenMask {
    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.allowed
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.allowed.binary_search(&id).is_ok()
    }

    #[cfg(test)]
    pub(crate) fn from_ids(mut ids: Vec<TokenId>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Self { allowed: ids }
    }
}

fn html_safe_printable(bytes: &[u8]) -> bool {
    bytes
        .iter()
        .all(|&b| (0x20..=0x7e).contains(&b) && b != b'<' && b != b'>' && b != b'&')
}

/// Scan the vocab for tokens a trigger may contain.
pub fn allowed_token_mask(vocab: &Vocab, policy: MaskPolicy) -> Result<TokenMask, Error> {
    let MaskPolicy::PrintableAsciiNonSpecial = policy;
    let mut allowed = Vec::new();
    for id in 0..vocab.size() as TokenId {
        if vocab.is_special(id) {
            continue;
        }
        let bytes = vocab.token_bytes(id).expect("dense ids");
        if !bytes.is_empty() && html_safe_printable(bytes) {
            allowed.push(id);
        }
    }
    if allowed.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(TokenMask { allowed })
}
