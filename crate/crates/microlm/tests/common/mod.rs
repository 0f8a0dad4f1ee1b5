#![allow(dead_code)]

use std::collections::BTreeSet;

use microlm::{ModelConfig, ModelParams, Scalar, Vocab};

/// Vocab of the 3 specials plus one single-byte token per ASCII letter in
/// `alphabet` (no fallback); handy for toy instances.
pub fn letters_vocab(alphabet: &str) -> Vocab {
    let mut tokens: Vec<Vec<u8>> = vec![b"<pad>".to_vec(), b"<bos>".to_vec(), b"<eos>".to_vec()];
    for ch in alphabet.chars() {
        tokens.push(ch.to_string().into_bytes());
    }
    let special: BTreeSet<u32> = [0, 1, 2].into_iter().collect();
    Vocab::from_tokens(tokens, special, false)
}

pub fn tiny_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        vocab_size,
        dim: 32,
        layers: 2,
        heads: 4,
        context_len: 64,
        tied_head: true,
    }
}

pub fn tiny_params<F: Scalar>(vocab: Vocab, seed: u64) -> ModelParams<F> {
    let config = tiny_config(vocab.size());
    ModelParams::init_random(config, vocab, seed)
}

/// A small agent-flavored corpus used by tokenizer and training tests.
pub fn mini_corpus() -> Vec<String> {
    let actions = [
        "click('12')",
        "click('7')",
        "fill('4', 'hello world')",
        "scroll(0, -120)",
        "tab_close()",
        "report_infeasible('cannot do that')",
        "send_msg_to_user('done')",
        "noop()",
    ];
    let mut docs = Vec::new();
    for (i, act) in actions.iter().enumerate() {
        docs.push(format!(
            "Goal: do task {i}\n[1] link \"home\"\n[2] button \"go\"\nAnswer: {act}"
        ));
        docs.push(format!(
            "Goal: another task {i}\n[3] textbox \"name\"\nAnswer: {act}"
        ));
    }
    docs
}
