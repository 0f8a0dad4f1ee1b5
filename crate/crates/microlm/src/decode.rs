use crate::error::Error;
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::tokenizer::TokenSeq;
use crate::vocab::TokenId;

/// Deterministic argmax decoding; ties break toward the lowest token id.
///
/// Generates up to `max_new` tokens after `prefix`. A token in `stop` ends
/// decoding and is not emitted. An empty prefix decodes nothing.
pub fn greedy_decode<F: Scalar>(
    params: &ModelParams<F>,
    prefix: &[TokenId],
    max_new: usize,
    stop: Option<&[TokenId]>,
) -> Result<TokenSeq, Error> {
    if max_new == 0 || prefix.is_empty() {
        return Ok(TokenSeq::default());
    }
    let total = prefix.len() + max_new;
    if total > params.config.context_len {
        return Err(Error::Overlength {
            len: total,
            max: params.config.context_len,
        });
    }

    let d = params.config.dim;
    let mut cache = params.new_cache();
    let hidden = params.forward_hidden(&mut cache, prefix)?;
    let mut last = hidden[hidden.len() - d..].to_vec();

    let mut out = Vec::new();
    for _ in 0..max_new {
        let logits = params.logit_row(&last);
        let mut best = 0usize;
        for (j, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = j;
            }
        }
        let tok = best as TokenId;
        if stop.map_or(false, |s| s.contains(&tok)) {
            break;
        }
        out.push(tok);
        if out.len() == max_new {
            break;
        }
        let hidden = params.forward_hidden(&mut cache, &[tok])?;
        last = hidden;
    }
    Ok(TokenSeq(out))
}
