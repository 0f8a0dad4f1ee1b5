use std::collections::{BTreeSet, HashMap};

use crate::error::Error;

pub type TokenId = u32;

pub const PAD_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;

const SPECIAL_STRINGS: [&str; 3] = ["<pad>", "<bos>", "<eos>"];

/// Upper bound on learned-token length, in bytes.
pub const MAX_MERGE_LEN: usize = 10;

/// Token alphabet: three reserved specials, 256 single-byte tokens, and
/// multi-byte tokens learned by pair frequency from a corpus.
///
/// IDs are dense `0..V`. Special tokens never match during tokenization
/// and never appear in allowed trigger masks. The single-byte tier makes
/// every byte string tokenizable (`byte_fallback`).
#[derive(Clone, Debug)]
pub struct Vocab {
    tokens: Vec<Vec<u8>>,
    special: BTreeSet<TokenId>,
    byte_fallback: bool,
    lookup: HashMap<Vec<u8>, TokenId>,
    max_token_len: usize,
}

impl Vocab {
    /// Specials plus the 256 single-byte tokens; no learned merges.
    pub fn base() -> Self {
        let mut tokens: Vec<Vec<u8>> = SPECIAL_STRINGS
            .iter()
            .map(|s| s.as_bytes().to_vec())
            .collect();
        for b in 0u16..256 {
            tokens.push(vec![b as u8]);
        }
        let special = [PAD_ID, BOS_ID, EOS_ID].into_iter().collect();
        Self::assemble(tokens, special, true)
    }

    /// Arbitrary token list for tests and toy instances. `special` ids are
    /// excluded from matching; `byte_fallback` only holds if the caller
    /// included all single bytes.
    pub fn from_tokens(
        tokens: Vec<Vec<u8>>,
        special: BTreeSet<TokenId>,
        byte_fallback: bool,
    ) -> Self {
        Self::assemble(tokens, special, byte_fallback)
    }

    /// Learn a vocab of `target_size` tokens from `corpus` by iterated
    /// most-frequent-pair merging on top of [`Vocab::base`].
    ///
    /// The double-quote and newline bytes never participate in merges:
    /// quotes delimit node names in serialized accessibility trees and
    /// newlines delimit prompt sections, so keeping them atomic keeps
    /// token boundaries stable exactly where prompts are assembled from
    /// parts. Merged tokens are capped at [`MAX_MERGE_LEN`] bytes so a
    /// small repetitive corpus cannot collapse whole template lines into
    /// single tokens. Ties on pair frequency break toward the
    /// lexicographically smallest merged bytes.
    pub fn learn(corpus: &[String], target_size: usize) -> Self {
        let base = Self::base();
        let floor = base.tokens.len();
        let target = target_size.max(floor);

        let mut docs: Vec<Vec<TokenId>> = corpus
            .iter()
            .map(|doc| doc.bytes().map(|b| floor as TokenId - 256 + b as TokenId).collect())
            .collect();
        // byte b has id 3 + b
        debug_assert_eq!(floor, 259);

        let mut tokens = base.tokens;
        while tokens.len() < target {
            let mut counts: HashMap<(TokenId, TokenId), usize> = HashMap::new();
            for doc in &docs {
                for pair in doc.windows(2) {
                    counts.entry((pair[0], pair[1])).and_modify(|c| *c += 1).or_insert(1);
                }
            }
            let mut best: Option<((TokenId, TokenId), Vec<u8>, usize)> = None;
            for (&(a, b), &count) in &counts {
                if count < 2 {
                    continue;
                }
                let ta = &tokens[a as usize];
                let tb = &tokens[b as usize];
                if [ta, tb]
                    .iter()
                    .any(|t| t.contains(&b'"') || t.contains(&b'\n'))
                {
                    continue;
                }
                if ta.len() + tb.len() > MAX_MERGE_LEN {
                    continue;
                }
                let mut merged = ta.clone();
                merged.extend_from_slice(tb);
                let better = match &best {
                    None => true,
                    Some((_, best_bytes, best_count)) => {
                        count > *best_count || (count == *best_count && merged < *best_bytes)
                    }
                };
                if better {
                    best = Some(((a, b), merged, count));
                }
            }
            let Some(((a, b), merged, _)) = best else { break };
            let new_id = tokens.len() as TokenId;
            tokens.push(merged);
            for doc in &mut docs {
                let mut out = Vec::with_capacity(doc.len());
                let mut i = 0;
                while i < doc.len() {
                    if i + 1 < doc.len() && doc[i] == a && doc[i + 1] == b {
                        out.push(new_id);
                        i += 2;
                    } else {
                        out.push(doc[i]);
                        i += 1;
                    }
                }
                *doc = out;
            }
        }

        let special = [PAD_ID, BOS_ID, EOS_ID].into_iter().collect();
        Self::assemble(tokens, special, true)
    }

    fn assemble(tokens: Vec<Vec<u8>>, special: BTreeSet<TokenId>, byte_fallback: bool) -> Self {
        let mut lookup = HashMap::new();
        let mut max_token_len = 1;
        for (id, bytes) in tokens.iter().enumerate() {
            let id = id as TokenId;
            if special.contains(&id) {
                continue;
            }
            max_token_len = max_token_len.max(bytes.len());
            // first definition wins so ids stay stable under duplicates
            lookup.entry(bytes.clone()).or_insert(id);
        }
        Self {
            tokens,
            special,
            byte_fallback,
            lookup,
            max_token_len,
        }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        self.special.contains(&id)
    }

    pub fn special_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.special.iter().copied()
    }

    pub fn byte_fallback(&self) -> bool {
        self.byte_fallback
    }

    pub fn token_bytes(&self, id: TokenId) -> Result<&[u8], Error> {
        self.tokens
            .get(id as usize)
            .map(|v| v.as_slice())
            .ok_or(Error::InvalidTokenId {
                id,
                vocab: self.tokens.len(),
            })
    }

    /// Display form of a token (lossy outside UTF-8).
    pub fn token_str(&self, id: TokenId) -> Result<String, Error> {
        Ok(String::from_utf8_lossy(self.token_bytes(id)?).into_owned())
    }

    pub fn all_tokens(&self) -> &[Vec<u8>] {
        &self.tokens
    }

    /// Longest token that matches `bytes` starting at `pos`, with its id.
    /// Specials never match. Returns `None` only when no single-byte token
    /// covers the position (possible for hand-built vocabs without
    /// fallback; such bytes are skipped by `tokenize`).
    pub(crate) fn longest_match(&self, bytes: &[u8], pos: usize) -> Option<(TokenId, usize)> {
        let cap = self.max_token_len.min(bytes.len() - pos);
        for len in (1..=cap).rev() {
            if let Some(&id) = self.lookup.get(&bytes[pos..pos + len]) {
                return Some((id, len));
            }
        }
        None
    }
}
