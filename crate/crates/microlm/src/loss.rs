use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{LogitMatrix, ModelParams};
use crate::scalar::Scalar;
use crate::tokenizer::TokenSeq;
use crate::vocab::TokenId;

/// Objective used for trigger optimization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LossKind {
    CrossEntropy,
    /// Per-position hinge on logit margins; gradient vanishes once every
    /// target token leads the runner-up by at least `kappa`.
    CarliniWagner { kappa: f64 },
}

/// Softmax of one logit row (numerically stable).
pub fn softmax_probs<F: Scalar>(row: &[F]) -> Vec<F> {
    let mut max = F::neg_infinity();
    for &v in row {
        if v > max {
            max = v;
        }
    }
    let mut out: Vec<F> = row.iter().map(|&v| (v - max).exp()).collect();
    let mut denom = F::zero();
    for &v in &out {
        denom += v;
    }
    let inv = denom.recip();
    for v in out.iter_mut() {
        *v *= inv;
    }
    out
}

fn validate_span<F: Scalar>(
    logits: &LogitMatrix<F>,
    span: &Range<usize>,
    target: &[TokenId],
) -> Result<(), Error> {
    if span.start < 1 || span.end > logits.rows || span.start > span.end {
        return Err(Error::SpanOutOfBounds {
            start: span.start,
            end: span.end,
            len: logits.rows,
        });
    }
    if span.len() != target.len() {
        return Err(Error::SpanTargetMismatch {
            span: span.len(),
            target: target.len(),
        });
    }
    for &id in target {
        if id as usize >= logits.vocab {
            return Err(Error::InvalidTokenId {
                id,
                vocab: logits.vocab,
            });
        }
    }
    Ok(())
}

pub(crate) fn ce_row<F: Scalar>(row: &[F], target: TokenId) -> F {
    // -log softmax(row)[target] via logsumexp
    let mut max = F::neg_infinity();
    for &v in row {
        if v > max {
            max = v;
        }
    }
    let mut sum = F::zero();
    for &v in row {
        sum += (v - max).exp();
    }
    max + sum.ln() - row[target as usize]
}

pub(crate) fn cw_row<F: Scalar>(row: &[F], target: TokenId, kappa: f64) -> F {
    let zy = row[target as usize];
    let mut zmax = F::neg_infinity();
    for (j, &v) in row.iter().enumerate() {
        if j as TokenId != target && v > zmax {
            zmax = v;
        }
    }
    let margin = zmax - zy;
    let floor = F::from_f64(-kappa);
    if margin > floor {
        margin
    } else {
        floor
    }
}

/// Negative log probability of `target` at the positions `target_span` of
/// the sequence the logits were computed for: `-sum_t log p(target_t)`,
/// where position `t` is predicted by logit row `t-1`.
pub fn loss_ce<F: Scalar>(
    logits: &LogitMatrix<F>,
    target_span: Range<usize>,
    target: &TokenSeq,
) -> Result<F, Error> {
    validate_span(logits, &target_span, target)?;
    let mut loss = F::zero();
    for (t, &id) in target.iter().enumerate() {
        loss += ce_row(logits.row(target_span.start + t - 1), id);
    }
    Ok(loss)
}

/// Margin loss: `sum_t max(max_{j != y_t} z_j - z_{y_t}, -kappa)`.
pub fn loss_cw<F: Scalar>(
    logits: &LogitMatrix<F>,
    target_span: Range<usize>,
    target: &TokenSeq,
    kappa: f64,
) -> Result<F, Error> {
    validate_span(logits, &target_span, target)?;
    let mut loss = F::zero();
    for (t, &id) in target.iter().enumerate() {
        loss += cw_row(logits.row(target_span.start + t - 1), id, kappa);
    }
    Ok(loss)
}

pub fn span_loss<F: Scalar>(
    logits: &LogitMatrix<F>,
    target_span: Range<usize>,
    target: &TokenSeq,
    kind: LossKind,
) -> Result<F, Error> {
    match kind {
        LossKind::CrossEntropy => loss_ce(logits, target_span, target),
        LossKind::CarliniWagner { kappa } => loss_cw(logits, target_span, target, kappa),
    }
}

impl<F: Scalar> ModelParams<F> {
    /// Loss of a target that occupies the trailing positions of a suffix
    /// whose final-normed rows are `hidden` (as returned by
    /// [`ModelParams::forward_hidden`]). The row predicting `target[0]`
    /// must itself be part of the suffix, i.e. the suffix must contain at
    /// least one position before the target.
    ///
    /// This is the candidate-evaluation fast path: only the `|target|`
    /// logit rows that enter the loss are materialized.
    pub fn trailing_target_loss(
        &self,
        hidden: &[F],
        target: &[TokenId],
        kind: LossKind,
    ) -> Result<F, Error> {
        let d = self.config.dim;
        let rows = hidden.len() / d;
        if target.is_empty() || rows < target.len() + 1 {
            return Err(Error::SpanTargetMismatch {
                span: rows,
                target: target.len(),
            });
        }
        let first_pred_row = rows - target.len() - 1;
        let mut loss = F::zero();
        for (t, &id) in target.iter().enumerate() {
            if id as usize >= self.config.vocab_size {
                return Err(Error::InvalidTokenId {
                    id,
                    vocab: self.config.vocab_size,
                });
            }
            let r = first_pred_row + t;
            let row = self.logit_row(&hidden[r * d..(r + 1) * d]);
            loss += match kind {
                LossKind::CrossEntropy => ce_row(&row, id),
                LossKind::CarliniWagner { kappa } => cw_row(&row, id, kappa),
            };
        }
        Ok(loss)
    }
}
