use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::vocab::{TokenId, Vocab};

/// A sequence of token ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(pub Vec<TokenId>);

impl TokenSeq {
    pub fn new(ids: Vec<TokenId>) -> Self {
        Self(ids)
    }

    pub fn concat(parts: &[&TokenSeq]) -> Self {
        let mut ids = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for part in parts {
            ids.extend_from_slice(part);
        }
        Self(ids)
    }

    pub fn validate(&self, vocab_size: usize) -> Result<(), Error> {
        for &id in &self.0 {
            if id as usize >= vocab_size {
                return Err(Error::InvalidTokenId {
                    id,
                    vocab: vocab_size,
                });
            }
        }
        Ok(())
    }
}

impl Deref for TokenSeq {
    type Target = [TokenId];
    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for TokenSeq {
    fn from(ids: Vec<TokenId>) -> Self {
        Self(ids)
    }
}

impl FromIterator<TokenId> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl Vocab {
    /// Deterministic greedy longest-match tokenization with byte fallback.
    ///
    /// At every position the longest vocab token matching the remaining
    /// bytes is taken; the single-byte tier guarantees progress. Bytes not
    /// covered by any token (hand-built vocabs without fallback) are
    /// dropped.
    pub fn tokenize(&self, text: &str) -> TokenSeq {
        let bytes = text.as_bytes();
        let mut ids = Vec::new();
        let mut pos = 0;
        while pos < bytes.len() {
            match self.longest_match(bytes, pos) {
                Some((id, len)) => {
                    ids.push(id);
                    pos += len;
                }
                None => pos += 1,
            }
        }
        TokenSeq(ids)
    }

    /// Concatenation of token byte strings. Inverts `tokenize` on
    /// printable-ASCII input. Errors on ids outside the vocab; byte
    /// sequences that are not UTF-8 (only reachable by adversarial id
    /// lists) are decoded lossily.
    pub fn detokenize(&self, seq: &TokenSeq) -> Result<String, Error> {
        let mut bytes = Vec::new();
        for &id in seq.iter() {
            bytes.extend_from_slice(self.token_bytes(id)?);
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}
