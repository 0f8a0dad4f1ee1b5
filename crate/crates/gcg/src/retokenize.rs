use microlm::{TokenSeq, Vocab};
use serde::{Deserialize, Serialize};

use crate::context::{PromptContext, Trigger};
use crate::error::Error;

/// Result of comparing token-level assembly against string-level
/// re-tokenization of the same prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Retokenization {
    Consistent,
    Mismatch {
        /// First token index at which the two sequences diverge.
        first_divergence: usize,
        assembled_len: usize,
        retokenized_len: usize,
    },
}

/// Token-level concatenation `pre || trigger || post` is what the
/// optimizer scores; a real page serves text, which the agent framework
/// re-tokenizes as one string. This check surfaces any divergence between
/// the two (token merges across the injection boundary, or trigger token
/// sequences that re-tokenize differently). Leading special tokens in
/// `pre` are prompt scaffolding with no text form and are skipped.
pub fn check_retokenization(
    trigger: &Trigger,
    context: &PromptContext,
    vocab: &Vocab,
) -> Result<Retokenization, Error> {
    let text_start = context
        .pre
        .iter()
        .position(|&id| !vocab.is_special(id))
        .unwrap_or(context.pre.len());
    let pre = TokenSeq(context.pre[text_start..].to_vec());
    let assembled = TokenSeq::concat(&[&pre, &trigger.ids, &context.post]);
    let text = format!(
        "{}{}{}",
        vocab.detokenize(&pre)?,
        trigger.text,
        vocab.detokenize(&context.post)?
    );
    let retokenized = vocab.tokenize(&text);

    if assembled.0 == retokenized.0 {
        return Ok(Retokenization::Consistent);
    }
    let first_divergence = assembled
        .iter()
        .zip(retokenized.iter())
        .position(|(a, b)| a != b)
        .unwrap_or_else(|| assembled.len().min(retokenized.len()));
    Ok(Retokenization::Mismatch {
        first_divergence,
        assembled_len: assembled.len(),
        retokenized_len: retokenized.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use microlm::TokenSeq;
    use std::collections::BTreeSet;

    fn char_vocab() -> Vocab {
        let mut tokens = vec![b"<pad>".to_vec(), b"<bos>".to_vec(), b"<eos>".to_vec()];
        for ch in b'a'..=b'z' {
            tokens.push(vec![ch]);
        }
        let special: BTreeSet<u32> = [0, 1, 2].into_iter().collect();
        Vocab::from_tokens(tokens, special, false)
    }

    fn id_of(vocab: &Vocab, s: &str) -> u32 {
        vocab.tokenize(s)[0]
    }

    #[test]
    fn empty_trigger_is_consistent() {
        let vocab = char_vocab();
        let pre = vocab.tokenize("abc");
        let post = vocab.tokenize("xyz");
        let ctx = PromptContext::new(pre, post, "c");
        let trig = Trigger::from_ids(TokenSeq(vec![]), &vocab).unwrap();
        assert_eq!(
            check_retokenization(&trig, &ctx, &vocab).unwrap(),
            Retokenization::Consistent
        );
    }

    #[test]
    fn single_char_tokens_are_always_consistent() {
        let vocab = char_vocab();
        let ctx = PromptContext::new(vocab.tokenize("hello"), vocab.tokenize("world"), "c");
        let trig = Trigger::from_ids(TokenSeq(vec![id_of(&vocab, "q"), id_of(&vocab, "z")]), &vocab)
            .unwrap();
        assert_eq!(
            check_retokenization(&trig, &ctx, &vocab).unwrap(),
            Retokenization::Consistent
        );
    }

    #[test]
    fn boundary_merge_is_reported_at_the_right_offset() {
        // vocab with a merged token "ab": a trigger ending in "a" followed
        // by post starting with "b" re-tokenizes into the merge.
        let mut tokens = vec![b"<pad>".to_vec(), b"<bos>".to_vec(), b"<eos>".to_vec()];
        for ch in b'a'..=b'f' {
            tokens.push(vec![ch]);
        }
        tokens.push(b"ab".to_vec()); // id 9
        let special: BTreeSet<u32> = [0, 1, 2].into_iter().collect();
        let vocab = Vocab::from_tokens(tokens, special, false);

        let pre = vocab.tokenize("cc"); // [c, c]
        let post_ids = TokenSeq(vec![id_of(&vocab, "b"), id_of(&vocab, "c")]);
        let ctx = PromptContext::new(pre, post_ids, "c");
        let trig = Trigger::from_ids(TokenSeq(vec![id_of(&vocab, "a")]), &vocab).unwrap();

        // assembled: [c, c, a, b, c]; retokenized "ccabc": [c, c, ab, c]
        let got = check_retokenization(&trig, &ctx, &vocab).unwrap();
        assert_eq!(
            got,
            Retokenization::Mismatch {
                first_divergence: 2,
                assembled_len: 5,
                retokenized_len: 4,
            }
        );
    }
}
