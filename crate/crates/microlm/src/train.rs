use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::grad::{backward, forward_tape, ParamGrads};
use crate::loss::softmax_probs;
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::vocab::{TokenId, BOS_ID, EOS_ID};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.95;
const ADAM_EPS: f64 = 1e-8;
const CLIP_NORM: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub steps: usize,
    pub initial_mean_loss: f64,
    pub final_mean_loss: f64,
}

struct AdamState<F: Scalar> {
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

fn flatten_params<F: Scalar>(p: &mut ModelParams<F>) -> Vec<&mut Vec<F>> {
    let mut out: Vec<&mut Vec<F>> = vec![&mut p.tok_emb, &mut p.pos_emb];
    for l in &mut p.layers {
        out.push(&mut l.ln1_g);
        out.push(&mut l.wq);
        out.push(&mut l.wk);
        out.push(&mut l.wv);
        out.push(&mut l.wo);
        out.push(&mut l.ln2_g);
        out.push(&mut l.w_fc1);
        out.push(&mut l.w_fc2);
    }
    out.push(&mut p.lnf_g);
    if let Some(h) = p.head.as_mut() {
        out.push(h);
    }
    out
}

fn flatten_grads<F: Scalar>(g: &ParamGrads<F>) -> Vec<&Vec<F>> {
    let mut out: Vec<&Vec<F>> = vec![&g.tok_emb, &g.pos_emb];
    for l in &g.layers {
        out.push(&l.ln1_g);
        out.push(&l.wq);
        out.push(&l.wk);
        out.push(&l.wv);
        out.push(&l.wo);
        out.push(&l.ln2_g);
        out.push(&l.w_fc1);
        out.push(&l.w_fc2);
    }
    out.push(&g.lnf_g);
    if let Some(h) = g.head.as_ref() {
        out.push(h);
    }
    out
}

fn doc_to_ids<F: Scalar>(params: &ModelParams<F>, doc: &str) -> Vec<TokenId> {
    let mut ids = vec![BOS_ID];
    ids.extend_from_slice(&params.vocab.tokenize(doc));
    ids.push(EOS_ID);
    ids.truncate(params.config.context_len);
    ids
}

/// Mean next-token cross entropy over a tokenized corpus (per prediction).
fn mean_corpus_loss<F: Scalar>(params: &ModelParams<F>, docs: &[Vec<TokenId>]) -> Result<f64, Error> {
    let mut total = 0.0;
    let mut count = 0usize;
    for ids in docs {
        if ids.len() < 2 {
            continue;
        }
        let tape = forward_tape(params, ids)?;
        let d = params.config.dim;
        for t in 0..ids.len() - 1 {
            let row = params.logit_row(&tape.hidden[t * d..(t + 1) * d]);
            total += crate::loss::ce_row(&row, ids[t + 1]).to_f64();
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}

/// One-document-per-step Adam training, deterministic given `seed`.
///
/// Returns updated parameters and a loss report; training must strictly
/// lower the mean corpus loss unless `steps == 0`, otherwise it is an
/// error. Divergence (non-finite step loss) is an error.
pub fn train_lm<F: Scalar>(
    params: ModelParams<F>,
    corpus: &[String],
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<(ModelParams<F>, TrainReport), Error> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let docs: Vec<Vec<TokenId>> = corpus.iter().map(|d| doc_to_ids(&params, d)).collect();
    if steps == 0 {
        let loss = mean_corpus_loss(&params, &docs)?;
        return Ok((
            params,
            TrainReport {
                steps: 0,
                initial_mean_loss: loss,
                final_mean_loss: loss,
            },
        ));
    }

    let initial_mean_loss = mean_corpus_loss(&params, &docs)?;
    let mut params = params;
    params.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut adam = {
        let slots = flatten_params(&mut params);
        AdamState {
            m: slots.iter().map(|s| vec![F::zero(); s.len()]).collect(),
            v: slots.iter().map(|s| vec![F::zero(); s.len()]).collect(),
        }
    };

    let d = params.config.dim;
    for step in 1..=steps {
        let idx = (rng.next_u64() % docs.len() as u64) as usize;
        let ids = &docs[idx];
        if ids.len() < 2 {
            continue;
        }
        let tape = forward_tape(&params, ids)?;
        let n_pred = ids.len() - 1;
        let inv = F::from_f64(1.0 / n_pred as f64);
        let mut step_loss = F::zero();
        let mut dlogits = Vec::with_capacity(n_pred);
        for t in 0..n_pred {
            let row = params.logit_row(&tape.hidden[t * d..(t + 1) * d]);
            step_loss += crate::loss::ce_row(&row, ids[t + 1]) * inv;
            let mut dl = softmax_probs(&row);
            dl[ids[t + 1] as usize] -= F::one();
            for g in dl.iter_mut() {
                *g *= inv;
            }
            dlogits.push((t, dl));
        }
        if !step_loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        let (grads, _) = backward(&params, &tape, &dlogits, true);
        let grads = grads.expect("param grads requested");

        // global-norm clip, then Adam with bias correction
        let flat_g = flatten_grads(&grads);
        let mut sq = 0.0f64;
        for g in &flat_g {
            for &x in g.iter() {
                let x = x.to_f64();
                sq += x * x;
            }
        }
        let norm = sq.sqrt();
        let clip = if norm > CLIP_NORM { CLIP_NORM / norm } else { 1.0 };
        let bc1 = 1.0 - BETA1.powi(step as i32);
        let bc2 = 1.0 - BETA2.powi(step as i32);

        let slots = flatten_params(&mut params);
        for (slot_i, (slot, g)) in slots.into_iter().zip(flat_g).enumerate() {
            let m = &mut adam.m[slot_i];
            let v = &mut adam.v[slot_i];
            for i in 0..slot.len() {
                let gi = g[i].to_f64() * clip;
                let mi = BETA1 * m[i].to_f64() + (1.0 - BETA1) * gi;
                let vi = BETA2 * v[i].to_f64() + (1.0 - BETA2) * gi * gi;
                m[i] = F::from_f64(mi);
                v[i] = F::from_f64(vi);
                let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + ADAM_EPS);
                slot[i] = F::from_f64(slot[i].to_f64() - update);
            }
        }
    }

    let final_mean_loss = mean_corpus_loss(&params, &docs)?;
    if !(final_mean_loss < initial_mean_loss) {
        return Err(Error::NoImprovement {
            before: initial_mean_loss,
            after: final_mean_loss,
        });
    }
    Ok((
        params,
        TrainReport {
            steps,
            initial_mean_loss,
            final_mean_loss,
        },
    ))
}
