use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scalar::Scalar;
use crate::vocab::{TokenId, Vocab};

pub(crate) const RMS_EPS: f64 = 1e-5;

/// Hyperparameters of the decoder-only transformer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub context_len: usize,
    pub tied_head: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 512,
            dim: 64,
            layers: 2,
            heads: 4,
            context_len: 1024,
            tied_head: true,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn ff_dim(&self) -> usize {
        4 * self.dim
    }
}

/// One transformer block: pre-norm attention and pre-norm MLP, no biases.
/// Projection matrices are row-major `[out][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<F: Scalar> {
    pub ln1_g: Vec<F>,
    pub wq: Vec<F>,
    pub wk: Vec<F>,
    pub wv: Vec<F>,
    pub wo: Vec<F>,
    pub ln2_g: Vec<F>,
    pub w_fc1: Vec<F>,
    pub w_fc2: Vec<F>,
}

/// Full parameter set. Immutable after load or training; forward, loss,
/// and gradient calls borrow it shared.
#[derive(Clone, Debug)]
pub struct ModelParams<F: Scalar> {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub seed: u64,
    /// Token embedding, `[vocab_size][dim]`. Doubles as the LM head when
    /// `config.tied_head`.
    pub tok_emb: Vec<F>,
    /// Learned absolute position embedding, `[context_len][dim]`.
    pub pos_emb: Vec<F>,
    pub layers: Vec<LayerParams<F>>,
    pub lnf_g: Vec<F>,
    /// Untied LM head, `[vocab_size][dim]`; `None` when tied.
    pub head: Option<Vec<F>>,
}

/// Per-position rows of unnormalized scores over the vocab.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMatrix<F: Scalar> {
    pub rows: usize,
    pub vocab: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> LogitMatrix<F> {
    pub fn row(&self, t: usize) -> &[F] {
        &self.data[t * self.vocab..(t + 1) * self.vocab]
    }
}

/// Attention keys/values accumulated so far, per layer. Cloning a cache
/// forks the sequence; extending it appends positions.
#[derive(Clone, Debug)]
pub struct KvCache<F: Scalar> {
    pub(crate) k: Vec<Vec<F>>,
    pub(crate) v: Vec<Vec<F>>,
    pub(crate) len: usize,
}

impl<F: Scalar> KvCache<F> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

pub(crate) fn rmsnorm_into<F: Scalar>(x: &[F], gain: &[F], out: &mut [F]) -> F {
    let n = F::from_f64(x.len() as f64);
    let mut ms = F::zero();
    for &v in x {
        ms += v * v;
    }
    ms = ms / n;
    let ri = (ms + F::from_f64(RMS_EPS)).sqrt().recip();
    for i in 0..x.len() {
        out[i] = x[i] * ri * gain[i];
    }
    ri
}

/// `out[j] = sum_i w[j*in_dim + i] * x[i]` for `j in 0..out_dim`.
pub(crate) fn matvec<F: Scalar>(w: &[F], x: &[F], out: &mut [F], out_dim: usize, in_dim: usize) {
    for j in 0..out_dim {
        let row = &w[j * in_dim..(j + 1) * in_dim];
        let mut acc = F::zero();
        for i in 0..in_dim {
            acc += row[i] * x[i];
        }
        out[j] = acc;
    }
}

pub(crate) fn gelu<F: Scalar>(x: F) -> F {
    // tanh approximation; smooth, so finite-difference checks are clean
    let c = F::from_f64(0.7978845608028654); // sqrt(2/pi)
    let a = F::from_f64(0.044715);
    let u = c * (x + a * x * x * x);
    F::from_f64(0.5) * x * (F::one() + u.tanh())
}

pub(crate) fn gelu_deriv<F: Scalar>(x: F) -> F {
    let c = F::from_f64(0.7978845608028654);
    let a = F::from_f64(0.044715);
    let half = F::from_f64(0.5);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let sech2 = F::one() - t * t;
    half * (F::one() + t) + half * x * sech2 * c * (F::one() + F::from_f64(3.0) * a * x * x)
}

fn normal_f64(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 / (9_007_199_254_740_992.0 + 1.0);
    let u2 = (rng.next_u64() >> 11) as f64 / 9_007_199_254_740_992.0;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_matrix<F: Scalar>(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<F> {
    (0..n).map(|_| F::from_f64(normal_f64(rng) * std)).collect()
}

impl<F: Scalar> ModelParams<F> {
    /// Seeded Gaussian init (std 0.02, residual projections scaled by
    /// `1/sqrt(2*layers)`), norm gains at one. Bit-reproducible per seed.
    pub fn init_random(config: ModelConfig, vocab: Vocab, seed: u64) -> Self {
        assert_eq!(
            config.vocab_size,
            vocab.size(),
            "config vocab_size must match vocab"
        );
        assert_eq!(config.dim % config.heads, 0, "dim must divide by heads");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let resid_std = 0.02 / ((2 * config.layers) as f64).sqrt();
        let tok_emb = random_matrix(&mut rng, config.vocab_size * d, 0.02);
        let pos_emb = random_matrix(&mut rng, config.context_len * d, 0.02);
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                ln1_g: vec![F::one(); d],
                wq: random_matrix(&mut rng, d * d, 0.02),
                wk: random_matrix(&mut rng, d * d, 0.02),
                wv: random_matrix(&mut rng, d * d, 0.02),
                wo: random_matrix(&mut rng, d * d, resid_std),
                ln2_g: vec![F::one(); d],
                w_fc1: random_matrix(&mut rng, config.ff_dim() * d, 0.02),
                w_fc2: random_matrix(&mut rng, d * config.ff_dim(), resid_std),
            })
            .collect();
        let lnf_g = vec![F::one(); d];
        let head = if config.tied_head {
            None
        } else {
            Some(random_matrix(&mut rng, config.vocab_size * d, 0.02))
        };
        Self {
            config,
            vocab,
            seed,
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            head,
        }
    }

    pub fn head_weights(&self) -> &[F] {
        self.head.as_deref().unwrap_or(&self.tok_emb)
    }

    pub fn param_count(&self) -> usize {
        let mut n = self.tok_emb.len() + self.pos_emb.len() + self.lnf_g.len();
        for l in &self.layers {
            n += l.ln1_g.len()
                + l.wq.len()
                + l.wk.len()
                + l.wv.len()
                + l.wo.len()
                + l.ln2_g.len()
                + l.w_fc1.len()
                + l.w_fc2.len();
        }
        n + self.head.as_ref().map_or(0, |h| h.len())
    }

    /// Convert parameters to another precision (used to switch between
    /// `f32` optimization runs and `f64` gradient checks).
    pub fn convert<G: Scalar>(&self) -> ModelParams<G> {
        let conv = |v: &[F]| -> Vec<G> { v.iter().map(|&x| G::from_f64(x.to_f64())).collect() };
        ModelParams {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            seed: self.seed,
            tok_emb: conv(&self.tok_emb),
            pos_emb: conv(&self.pos_emb),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_g: conv(&l.ln1_g),
                    wq: conv(&l.wq),
                    wk: conv(&l.wk),
                    wv: conv(&l.wv),
                    wo: conv(&l.wo),
                    ln2_g: conv(&l.ln2_g),
                    w_fc1: conv(&l.w_fc1),
                    w_fc2: conv(&l.w_fc2),
                })
                .collect(),
            lnf_g: conv(&self.lnf_g),
            head: self.head.as_ref().map(|h| conv(h)),
        }
    }

    pub fn new_cache(&self) -> KvCache<F> {
        KvCache {
            k: vec![Vec::new(); self.config.layers],
            v: vec![Vec::new(); self.config.layers],
            len: 0,
        }
    }

    /// Embedding row for a token id (input path only, position excluded).
    pub fn embedding_row(&self, id: TokenId) -> &[F] {
        let d = self.config.dim;
        &self.tok_emb[id as usize * d..(id as usize + 1) * d]
    }

    /// Run the model over `ids`, appending to `cache`, and return the
    /// final-normed hidden rows (`ids.len() * dim`) for the new positions.
    ///
    /// Every forward in the crate funnels through this routine, position
    /// by position, so a cached continuation is bit-identical to a full
    /// re-run: position `t` always attends over keys `0..=t` in the same
    /// order.
    pub fn forward_hidden(&self, cache: &mut KvCache<F>, ids: &[TokenId]) -> Result<Vec<F>, Error> {
        let cfg = &self.config;
        let d = cfg.dim;
        let hd = cfg.head_dim();
        let total = cache.len + ids.len();
        if total > cfg.context_len {
            return Err(Error::Overlength {
                len: total,
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
        let mut hidden = Vec::with_capacity(ids.len() * d);
        let mut x = vec![F::zero(); d];
        let mut n = vec![F::zero(); d];
        let mut q = vec![F::zero(); d];
        let mut attn_y = vec![F::zero(); d];
        let mut proj = vec![F::zero(); d];
        let mut ff = vec![F::zero(); cfg.ff_dim()];
        let mut scores = vec![F::zero(); total];

        for (i, &id) in ids.iter().enumerate() {
            let pos = cache.len + i;
            let emb = &self.tok_emb[id as usize * d..(id as usize + 1) * d];
            let pe = &self.pos_emb[pos * d..(pos + 1) * d];
            for j in 0..d {
                x[j] = emb[j] + pe[j];
            }

            for (li, layer) in self.layers.iter().enumerate() {
                rmsnorm_into(&x, &layer.ln1_g, &mut n);
                matvec(&layer.wq, &n, &mut q, d, d);
                let k_start = cache.k[li].len();
                cache.k[li].resize(k_start + d, F::zero());
                cache.v[li].resize(k_start + d, F::zero());
                matvec(&layer.wk, &n, &mut cache.k[li][k_start..], d, d);
                matvec(&layer.wv, &n, &mut cache.v[li][k_start..], d, d);

                // causal attention over positions 0..=pos, per head
                let keys = &cache.k[li];
                let vals = &cache.v[li];
                let t_ctx = pos + 1;
                for h in 0..cfg.heads {
                    let qo = h * hd;
                    let qh = &q[qo..qo + hd];
                    let scores = &mut scores[..t_ctx];
                    let mut max = F::neg_infinity();
                    for s in 0..t_ctx {
                        let kh = &keys[s * d + qo..s * d + qo + hd];
                        let mut dot = F::zero();
                        for j in 0..hd {
                            dot += qh[j] * kh[j];
                        }
                        let sc = dot * scale;
                        scores[s] = sc;
                        if sc > max {
                            max = sc;
                        }
                    }
                    let mut denom = F::zero();
                    for s in 0..t_ctx {
                        let e = (scores[s] - max).exp();
                        scores[s] = e;
                        denom += e;
                    }
                    let inv = denom.recip();
                    let yh = &mut attn_y[qo..qo + hd];
                    for j in 0..hd {
                        yh[j] = F::zero();
                    }
                    for s in 0..t_ctx {
                        let w = scores[s] * inv;
                        let vh = &vals[s * d + qo..s * d + qo + hd];
                        for j in 0..hd {
                            yh[j] += w * vh[j];
                        }
                    }
                }
                matvec(&layer.wo, &attn_y, &mut proj, d, d);
                for j in 0..d {
                    x[j] += proj[j];
                }

                rmsnorm_into(&x, &layer.ln2_g, &mut n);
                matvec(&layer.w_fc1, &n, &mut ff, cfg.ff_dim(), d);
                for v in ff.iter_mut() {
                    *v = gelu(*v);
                }
                matvec(&layer.w_fc2, &ff, &mut proj, d, cfg.ff_dim());
                for j in 0..d {
                    x[j] += proj[j];
                }
            }

            let base = hidden.len();
            hidden.resize(base + d, F::zero());
            rmsnorm_into(&x, &self.lnf_g, &mut hidden[base..]);
        }
        cache.len = total;
        Ok(hidden)
    }

    /// Logit row for one final-normed hidden row.
    pub fn logit_row(&self, h: &[F]) -> Vec<F> {
        let d = self.config.dim;
        let w = self.head_weights();
        let mut out = vec![F::zero(); self.config.vocab_size];
        matvec(w, h, &mut out, self.config.vocab_size, d);
        out
    }

    /// Causal decoder output for a whole input: position `t`'s row depends
    /// only on ids `0..=t`.
    pub fn forward_logits(&self, input: &[TokenId]) -> Result<LogitMatrix<F>, Error> {
        let mut cache = self.new_cache();
        let hidden = self.forward_hidden(&mut cache, input)?;
        let d = self.config.dim;
        let v = self.config.vocab_size;
        let mut data = vec![F::zero(); input.len() * v];
        for t in 0..input.len() {
            matvec(
                self.head_weights(),
                &hidden[t * d..(t + 1) * d],
                &mut data[t * v..(t + 1) * v],
                v,
                d,
            );
        }
        Ok(LogitMatrix {
            rows: input.len(),
            vocab: v,
            data,
        })
    }
}
