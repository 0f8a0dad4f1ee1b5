//! Hand-written reverse-mode differentiation.
//!
//! `forward_tape` replays the forward pass over a full sequence while
//! recording every intermediate needed by `backward`: per-layer norm
//! statistics, q/k/v, attention weights, MLP pre-activations, and the
//! residual stream at each stage. `backward` then propagates a set of
//! logit-row gradients down to parameter gradients (for training) and to
//! the input embedding rows (the one-hot gradient used for candidate
//! ranking).

use std::ops::Range;

use crate::error::Error;
use crate::loss::{softmax_probs, LossKind};
use crate::model::{gelu, gelu_deriv, matvec, rmsnorm_into, ModelParams};
use crate::scalar::Scalar;
use crate::tokenizer::TokenSeq;
use crate::vocab::TokenId;

/// `d(loss)/d(one-hot input)` restricted to the trigger positions: a
/// `trigger_len x vocab` matrix. The linearized score of substituting
/// token `j` at trigger position `i` is `g[i][j] - g[i][current_i]`.
#[derive(Clone, Debug)]
pub struct GradSlice<F: Scalar> {
    pub trigger_len: usize,
    pub vocab: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> GradSlice<F> {
    pub fn zeros(trigger_len: usize, vocab: usize) -> Self {
        Self {
            trigger_len,
            vocab,
            data: vec![F::zero(); trigger_len * vocab],
        }
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.vocab..(i + 1) * self.vocab]
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.vocab + j]
    }

    pub fn add_assign(&mut self, other: &GradSlice<F>) {
        assert_eq!(self.trigger_len, other.trigger_len);
        assert_eq!(self.vocab, other.vocab);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Element-wise sum of per-context gradient slices (the multi-context
/// objective is a plain sum of per-context losses).
pub fn sum_grad_slices<F: Scalar>(slices: &[GradSlice<F>]) -> GradSlice<F> {
    assert!(!slices.is_empty());
    let mut acc = GradSlice::zeros(slices[0].trigger_len, slices[0].vocab);
    for s in slices {
        acc.add_assign(s);
    }
    acc
}

/// Parameter gradients, same shapes as [`ModelParams`]. With a tied head
/// the head gradient accumulates into `tok_emb`.
pub struct ParamGrads<F: Scalar> {
    pub tok_emb: Vec<F>,
    pub pos_emb: Vec<F>,
    pub layers: Vec<LayerGrads<F>>,
    pub lnf_g: Vec<F>,
    pub head: Option<Vec<F>>,
}

pub struct LayerGrads<F: Scalar> {
    pub ln1_g: Vec<F>,
    pub wq: Vec<F>,
    pub wk: Vec<F>,
    pub wv: Vec<F>,
    pub wo: Vec<F>,
    pub ln2_g: Vec<F>,
    pub w_fc1: Vec<F>,
    pub w_fc2: Vec<F>,
}

struct LayerTape<F: Scalar> {
    x_in: Vec<F>,   // T*d residual stream entering the layer
    ln1_ri: Vec<F>, // T
    n1: Vec<F>,     // T*d
    q: Vec<F>,      // T*d
    k: Vec<F>,      // T*d
    v: Vec<F>,      // T*d
    att: Vec<F>,    // heads * T * T, row-major per head, causal rows
    y: Vec<F>,      // T*d head-concatenated attention output (pre-Wo)
    x_mid: Vec<F>,  // T*d after attention residual
    ln2_ri: Vec<F>, // T
    n2: Vec<F>,     // T*d
    a1: Vec<F>,     // T*ff pre-GELU
    g1: Vec<F>,     // T*ff post-GELU
}

pub struct Tape<F: Scalar> {
    ids: Vec<TokenId>,
    layers: Vec<LayerTape<F>>,
    x_final: Vec<F>, // T*d residual stream after the last layer
    lnf_ri: Vec<F>,  // T
    /// Final-normed hidden rows, `T*d`.
    pub hidden: Vec<F>,
}

impl<F: Scalar> Tape<F> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Backward through `out = (x * ri) .* gain` for one row.
fn rmsnorm_backward<F: Scalar>(
    d_out: &[F],
    x: &[F],
    ri: F,
    gain: &[F],
    d_x: &mut [F],
    mut d_gain: Option<&mut [F]>,
) {
    let d = x.len();
    let n = F::from_f64(d as f64);
    let mut dot = F::zero();
    for i in 0..d {
        let dxh = d_out[i] * gain[i];
        dot += dxh * x[i];
    }
    let coef = ri * ri * ri / n;
    for i in 0..d {
        let dxh = d_out[i] * gain[i];
        d_x[i] += ri * dxh - coef * dot * x[i];
        if let Some(dg) = d_gain.as_deref_mut() {
            dg[i] += d_out[i] * x[i] * ri;
        }
    }
}

/// Forward pass over a full sequence, recording the tape.
pub fn forward_tape<F: Scalar>(params: &ModelParams<F>, ids: &[TokenId]) -> Result<Tape<F>, Error> {
    let cfg = &params.config;
    let d = cfg.dim;
    let ff = cfg.ff_dim();
    let hd = cfg.head_dim();
    let t_len = ids.len();
    if t_len > cfg.context_len {
        return Err(Error::Overlength {
            len: t_len,
            max: cfg.context_len,
        });
    }
    for &id in ids {
        if id as usize >= cfg.vocab_size {
            return Err(Error::InvalidTokenId {
                id,
                vocab: cfg.vocab_size,
            });
        }
    }
    let scale = F::from_f64(1.0 / (hd as f64).sqrt());

    let mut x = vec![F::zero(); t_len * d];
    for (t, &id) in ids.iter().enumerate() {
        let emb = &params.tok_emb[id as usize * d..(id as usize + 1) * d];
        let pe = &params.pos_emb[t * d..(t + 1) * d];
        for i in 0..d {
            x[t * d + i] = emb[i] + pe[i];
        }
    }

    let mut layers = Vec::with_capacity(cfg.layers);
    for layer in &params.layers {
        let x_in = x.clone();
        let mut ln1_ri = vec![F::zero(); t_len];
        let mut n1 = vec![F::zero(); t_len * d];
        let mut q = vec![F::zero(); t_len * d];
        let mut k = vec![F::zero(); t_len * d];
        let mut v = vec![F::zero(); t_len * d];
        for t in 0..t_len {
            ln1_ri[t] = rmsnorm_into(
                &x_in[t * d..(t + 1) * d],
                &layer.ln1_g,
                &mut n1[t * d..(t + 1) * d],
            );
            matvec(&layer.wq, &n1[t * d..(t + 1) * d], &mut q[t * d..(t + 1) * d], d, d);
            matvec(&layer.wk, &n1[t * d..(t + 1) * d], &mut k[t * d..(t + 1) * d], d, d);
            matvec(&layer.wv, &n1[t * d..(t + 1) * d], &mut v[t * d..(t + 1) * d], d, d);
        }

        let mut att = vec![F::zero(); cfg.heads * t_len * t_len];
        let mut y = vec![F::zero(); t_len * d];
        for h in 0..cfg.heads {
            let qo = h * hd;
            let att_h = &mut att[h * t_len * t_len..(h + 1) * t_len * t_len];
            for t in 0..t_len {
                let qh = &q[t * d + qo..t * d + qo + hd];
                let row = &mut att_h[t * t_len..t * t_len + t + 1];
                let mut max = F::neg_infinity();
                for (s, slot) in row.iter_mut().enumerate() {
                    let kh = &k[s * d + qo..s * d + qo + hd];
                    let mut dot = F::zero();
                    for j in 0..hd {
                        dot += qh[j] * kh[j];
                    }
                    let sc = dot * scale;
                    *slot = sc;
                    if sc > max {
                        max = sc;
                    }
                }
                let mut denom = F::zero();
                for slot in row.iter_mut() {
                    let e = (*slot - max).exp();
                    *slot = e;
                    denom += e;
                }
                let inv = denom.recip();
                for slot in row.iter_mut() {
                    *slot *= inv;
                }
                let yh = &mut y[t * d + qo..t * d + qo + hd];
                for s in 0..=t {
                    let w = att_h[t * t_len + s];
                    let vh = &v[s * d + qo..s * d + qo + hd];
                    for j in 0..hd {
                        yh[j] += w * vh[j];
                    }
                }
            }
        }

        let mut x_mid = vec![F::zero(); t_len * d];
        for t in 0..t_len {
            let mut proj = vec![F::zero(); d];
            matvec(&layer.wo, &y[t * d..(t + 1) * d], &mut proj, d, d);
            for i in 0..d {
                x_mid[t * d + i] = x_in[t * d + i] + proj[i];
            }
        }

        let mut ln2_ri = vec![F::zero(); t_len];
        let mut n2 = vec![F::zero(); t_len * d];
        let mut a1 = vec![F::zero(); t_len * ff];
        let mut g1 = vec![F::zero(); t_len * ff];
        for t in 0..t_len {
            ln2_ri[t] = rmsnorm_into(
                &x_mid[t * d..(t + 1) * d],
                &layer.ln2_g,
                &mut n2[t * d..(t + 1) * d],
            );
            matvec(
                &layer.w_fc1,
                &n2[t * d..(t + 1) * d],
                &mut a1[t * ff..(t + 1) * ff],
                ff,
                d,
            );
            for i in 0..ff {
                g1[t * ff + i] = gelu(a1[t * ff + i]);
            }
            let mut proj = vec![F::zero(); d];
            matvec(&layer.w_fc2, &g1[t * ff..(t + 1) * ff], &mut proj, d, ff);
            for i in 0..d {
                x[t * d + i] = x_mid[t * d + i] + proj[i];
            }
        }

        layers.push(LayerTape {
            x_in,
            ln1_ri,
            n1,
            q,
            k,
            v,
            att,
            y,
            x_mid,
            ln2_ri,
            n2,
            a1,
            g1,
        });
    }

    let x_final = x.clone();
    let mut lnf_ri = vec![F::zero(); t_len];
    let mut hidden = vec![F::zero(); t_len * d];
    for t in 0..t_len {
        lnf_ri[t] = rmsnorm_into(
            &x_final[t * d..(t + 1) * d],
            &params.lnf_g,
            &mut hidden[t * d..(t + 1) * d],
        );
    }

    Ok(Tape {
        ids: ids.to_vec(),
        layers,
        x_final,
        lnf_ri,
        hidden,
    })
}

impl<F: Scalar> ParamGrads<F> {
    fn zeros(params: &ModelParams<F>) -> Self {
        Self {
            tok_emb: vec![F::zero(); params.tok_emb.len()],
            pos_emb: vec![F::zero(); params.pos_emb.len()],
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    ln1_g: vec![F::zero(); l.ln1_g.len()],
                    wq: vec![F::zero(); l.wq.len()],
                    wk: vec![F::zero(); l.wk.len()],
                    wv: vec![F::zero(); l.wv.len()],
                    wo: vec![F::zero(); l.wo.len()],
                    ln2_g: vec![F::zero(); l.ln2_g.len()],
                    w_fc1: vec![F::zero(); l.w_fc1.len()],
                    w_fc2: vec![F::zero(); l.w_fc2.len()],
                })
                .collect(),
            lnf_g: vec![F::zero(); params.lnf_g.len()],
            head: params.head.as_ref().map(|h| vec![F::zero(); h.len()]),
        }
    }
}

/// Propagate logit-row gradients back to the input embedding rows and,
/// optionally, parameter gradients. `dlogit_rows` holds `(row, dlogit)`
/// pairs; rows absent from it carry zero gradient.
pub(crate) fn backward<F: Scalar>(
    params: &ModelParams<F>,
    tape: &Tape<F>,
    dlogit_rows: &[(usize, Vec<F>)],
    want_param_grads: bool,
) -> (Option<ParamGrads<F>>, Vec<F>) {
    let cfg = &params.config;
    let d = cfg.dim;
    let ff = cfg.ff_dim();
    let hd = cfg.head_dim();
    let t_len = tape.ids.len();
    let scale = F::from_f64(1.0 / (hd as f64).sqrt());

    let mut grads = want_param_grads.then(|| ParamGrads::zeros(params));

    // logits -> final hidden rows (and head / tied-embedding grads)
    let mut dh = vec![F::zero(); t_len * d];
    let head_w = params.head_weights();
    for (row, dl) in dlogit_rows {
        let t = *row;
        debug_assert!(t < t_len);
        for j in 0..cfg.vocab_size {
            let g = dl[j];
            if g == F::zero() {
                continue;
            }
            let wrow = &head_w[j * d..(j + 1) * d];
            for i in 0..d {
                dh[t * d + i] += g * wrow[i];
            }
            if let Some(gr) = grads.as_mut() {
                let target = if params.head.is_some() {
                    gr.head.as_mut().expect("untied head grads")
                } else {
                    &mut gr.tok_emb
                };
                let h_row = &tape.hidden[t * d..(t + 1) * d];
                for i in 0..d {
                    target[j * d + i] += g * h_row[i];
                }
            }
        }
    }

    // final norm
    let mut dx = vec![F::zero(); t_len * d];
    for t in 0..t_len {
        rmsnorm_backward(
            &dh[t * d..(t + 1) * d],
            &tape.x_final[t * d..(t + 1) * d],
            tape.lnf_ri[t],
            &params.lnf_g,
            &mut dx[t * d..(t + 1) * d],
            grads.as_mut().map(|g| g.lnf_g.as_mut_slice()),
        );
    }

    for (li, layer) in params.layers.iter().enumerate().rev() {
        let lt = &tape.layers[li];

        // MLP branch: x_out = x_mid + W2 * gelu(W1 * rms(x_mid))
        let mut d_x_mid = dx.clone(); // residual path
        for t in 0..t_len {
            let d_out = &dx[t * d..(t + 1) * d];
            let g1 = &lt.g1[t * ff..(t + 1) * ff];
            let a1 = &lt.a1[t * ff..(t + 1) * ff];
            let mut d_g1 = vec![F::zero(); ff];
            for j in 0..d {
                let g = d_out[j];
                if g == F::zero() {
                    continue;
                }
                let wrow = &layer.w_fc2[j * ff..(j + 1) * ff];
                for i in 0..ff {
                    d_g1[i] += g * wrow[i];
                }
                if let Some(gr) = grads.as_mut() {
                    let wg = &mut gr.layers[li].w_fc2[j * ff..(j + 1) * ff];
                    for i in 0..ff {
                        wg[i] += g * g1[i];
                    }
                }
            }
            let mut d_a1 = vec![F::zero(); ff];
            for i in 0..ff {
                d_a1[i] = d_g1[i] * gelu_deriv(a1[i]);
            }
            let n2 = &lt.n2[t * d..(t + 1) * d];
            let mut d_n2 = vec![F::zero(); d];
            for j in 0..ff {
                let g = d_a1[j];
                if g == F::zero() {
                    continue;
                }
                let wrow = &layer.w_fc1[j * d..(j + 1) * d];
                for i in 0..d {
                    d_n2[i] += g * wrow[i];
                }
                if let Some(gr) = grads.as_mut() {
                    let wg = &mut gr.layers[li].w_fc1[j * d..(j + 1) * d];
                    for i in 0..d {
                        wg[i] += g * n2[i];
                    }
                }
            }
            rmsnorm_backward(
                &d_n2,
                &lt.x_mid[t * d..(t + 1) * d],
                lt.ln2_ri[t],
                &layer.ln2_g,
                &mut d_x_mid[t * d..(t + 1) * d],
                grads.as_mut().map(|g| g.layers[li].ln2_g.as_mut_slice()),
            );
        }

        // attention branch: x_mid = x_in + Wo * y
        let mut d_x_in = d_x_mid.clone(); // residual path
        let mut d_y = vec![F::zero(); t_len * d];
        for t in 0..t_len {
            let d_out = &d_x_mid[t * d..(t + 1) * d];
            let y_row = &lt.y[t * d..(t + 1) * d];
            for j in 0..d {
                let g = d_out[j];
                if g == F::zero() {
                    continue;
                }
                let wrow = &layer.wo[j * d..(j + 1) * d];
                for i in 0..d {
                    d_y[t * d + i] += g * wrow[i];
                }
                if let Some(gr) = grads.as_mut() {
                    let wg = &mut gr.layers[li].wo[j * d..(j + 1) * d];
                    for i in 0..d {
                        wg[i] += g * y_row[i];
                    }
                }
            }
        }

        let mut d_q = vec![F::zero(); t_len * d];
        let mut d_k = vec![F::zero(); t_len * d];
        let mut d_v = vec![F::zero(); t_len * d];
        for h in 0..cfg.heads {
            let qo = h * hd;
            let att_h = &lt.att[h * t_len * t_len..(h + 1) * t_len * t_len];
            for t in 0..t_len {
                let d_yh = &d_y[t * d + qo..t * d + qo + hd];
                let row = &att_h[t * t_len..t * t_len + t + 1];
                // d_att and softmax backward fused per row
                let mut d_att = vec![F::zero(); t + 1];
                let mut inner = F::zero();
                for s in 0..=t {
                    let vh = &lt.v[s * d + qo..s * d + qo + hd];
                    let mut dot = F::zero();
                    for j in 0..hd {
                        dot += d_yh[j] * vh[j];
                    }
                    d_att[s] = dot;
                    inner += row[s] * dot;
                    // d_v accumulation
                    let w = row[s];
                    let dv = &mut d_v[s * d + qo..s * d + qo + hd];
                    for j in 0..hd {
                        dv[j] += w * d_yh[j];
                    }
                }
                let qh = &lt.q[t * d + qo..t * d + qo + hd];
                for s in 0..=t {
                    let d_score = row[s] * (d_att[s] - inner) * scale;
                    if d_score == F::zero() {
                        continue;
                    }
                    let kh = &lt.k[s * d + qo..s * d + qo + hd];
                    let dq = &mut d_q[t * d + qo..t * d + qo + hd];
                    for j in 0..hd {
                        dq[j] += d_score * kh[j];
                    }
                    let dk = &mut d_k[s * d + qo..s * d + qo + hd];
                    for j in 0..hd {
                        dk[j] += d_score * qh[j];
                    }
                }
            }
        }

        // q/k/v projections back to n1, then ln1 back to x_in
        for t in 0..t_len {
            let n1 = &lt.n1[t * d..(t + 1) * d];
            let mut d_n1 = vec![F::zero(); d];
            for (w, dvec, gsel) in [
                (&layer.wq, &d_q, 0),
                (&layer.wk, &d_k, 1),
                (&layer.wv, &d_v, 2),
            ] {
                for j in 0..d {
                    let g = dvec[t * d + j];
                    if g == F::zero() {
                        continue;
                    }
                    let wrow = &w[j * d..(j + 1) * d];
                    for i in 0..d {
                        d_n1[i] += g * wrow[i];
                    }
                    if let Some(gr) = grads.as_mut() {
                        let lg = &mut gr.layers[li];
                        let wg = match gsel {
                            0 => &mut lg.wq,
                            1 => &mut lg.wk,
                            _ => &mut lg.wv,
                        };
                        let wg = &mut wg[j * d..(j + 1) * d];
                        for i in 0..d {
                            wg[i] += g * n1[i];
                        }
                    }
                }
            }
            rmsnorm_backward(
                &d_n1,
                &lt.x_in[t * d..(t + 1) * d],
                lt.ln1_ri[t],
                &layer.ln1_g,
                &mut d_x_in[t * d..(t + 1) * d],
                grads.as_mut().map(|g| g.layers[li].ln1_g.as_mut_slice()),
            );
        }

        dx = d_x_in;
    }

    // input embeddings
    if let Some(gr) = grads.as_mut() {
        for (t, &id) in tape.ids.iter().enumerate() {
            let src = &dx[t * d..(t + 1) * d];
            let te = &mut gr.tok_emb[id as usize * d..(id as usize + 1) * d];
            let pe = &mut gr.pos_emb[t * d..(t + 1) * d];
            for i in 0..d {
                te[i] += src[i];
                pe[i] += src[i];
            }
        }
    }

    (grads, dx)
}

/// Build the loss gradient at the logit rows that predict the target span.
pub(crate) fn dlogit_rows_for_target<F: Scalar>(
    params: &ModelParams<F>,
    tape: &Tape<F>,
    target_span: &Range<usize>,
    target: &[TokenId],
    kind: LossKind,
) -> Vec<(usize, Vec<F>)> {
    let d = params.config.dim;
    let mut rows = Vec::with_capacity(target.len());
    for (t, &id) in target.iter().enumerate() {
        let row_idx = target_span.start + t - 1;
        let logit_row = params.logit_row(&tape.hidden[row_idx * d..(row_idx + 1) * d]);
        let dl = match kind {
            LossKind::CrossEntropy => {
                let mut dl = softmax_probs(&logit_row);
                dl[id as usize] -= F::one();
                dl
            }
            LossKind::CarliniWagner { kappa } => {
                let mut dl = vec![F::zero(); logit_row.len()];
                let zy = logit_row[id as usize];
                let mut best = F::neg_infinity();
                let mut best_j = 0usize;
                for (j, &z) in logit_row.iter().enumerate() {
                    if j != id as usize && z > best {
                        best = z;
                        best_j = j;
                    }
                }
                if best - zy > F::from_f64(-kappa) {
                    dl[best_j] = F::one();
                    dl[id as usize] = -F::one();
                }
                dl
            }
        };
        rows.push((row_idx, dl));
    }
    rows
}

/// Exact gradient of the chosen loss with respect to the one-hot input
/// rows at the trigger positions.
pub fn grad_wrt_onehot<F: Scalar>(
    params: &ModelParams<F>,
    full_input: &TokenSeq,
    trigger_span: Range<usize>,
    target_span: Range<usize>,
    target: &TokenSeq,
    loss_kind: LossKind,
) -> Result<GradSlice<F>, Error> {
    let len = full_input.len();
    if trigger_span.end > len || trigger_span.start > trigger_span.end {
        return Err(Error::SpanOutOfBounds {
            start: trigger_span.start,
            end: trigger_span.end,
            len,
        });
    }
    if target_span.start < 1 || target_span.end > len || target_span.start > target_span.end {
        return Err(Error::SpanOutOfBounds {
            start: target_span.start,
            end: target_span.end,
            len,
        });
    }
    if target_span.len() != target.len() {
        return Err(Error::SpanTargetMismatch {
            span: target_span.len(),
            target: target.len(),
        });
    }
    if trigger_span.start < target_span.end && target_span.start < trigger_span.end {
        return Err(Error::SpanOverlap {
            trig_start: trigger_span.start,
            trig_end: trigger_span.end,
            targ_start: target_span.start,
            targ_end: target_span.end,
        });
    }

    let tape = forward_tape(params, full_input)?;
    let dlogits = dlogit_rows_for_target(params, &tape, &target_span, target, loss_kind);
    let (_, d_input) = backward(params, &tape, &dlogits, false);

    let d = params.config.dim;
    let v = params.config.vocab_size;
    let mut slice = GradSlice::zeros(trigger_span.len(), v);
    for (i, pos) in trigger_span.clone().enumerate() {
        let dx_row = &d_input[pos * d..(pos + 1) * d];
        let out = &mut slice.data[i * v..(i + 1) * v];
        matvec(&params.tok_emb, dx_row, out, v, d);
    }
    if !slice.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    Ok(slice)
}
