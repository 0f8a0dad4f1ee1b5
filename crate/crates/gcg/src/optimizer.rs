use std::time::Instant;

use microlm::{
    grad_wrt_onehot, greedy_decode, sum_grad_slices, GradSlice, KvCache, LossKind, ModelParams,
    Scalar, TokenId, TokenSeq,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{sample_candidates, top_k_substitutions};
use crate::config::{GcgConfig, InitMode};
use crate::context::{ContextSet, PromptContext, TargetSpec, Trigger};
use crate::error::Error;
use crate::mask::{allowed_token_mask, MaskPolicy, TokenMask};

/// Outcome of a trigger optimization run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TriggerResult {
    pub best_trigger: Trigger,
    pub best_loss: f64,
    /// True iff greedy decoding of `pre || trigger || post` emits the
    /// resolved target verbatim for every training context.
    pub success: bool,
    pub iterations_used: usize,
    pub wall_clock_seconds: f64,
    /// Best-so-far total loss after init and after each iteration;
    /// non-increasing by construction.
    pub loss_history: Vec<f64>,
}

/// Per-context state reused across iterations: the key/value cache for
/// everything before the trigger, plus the token pieces assembled around
/// each candidate.
pub struct PreparedContexts<'a, F: Scalar> {
    params: &'a ModelParams<F>,
    items: Vec<PreparedContext<F>>,
    kind: LossKind,
}

struct PreparedContext<F: Scalar> {
    label: String,
    pre: TokenSeq,
    post: TokenSeq,
    target: TokenSeq,
    /// Cache over `pre` minus its final token, so every logit row the
    /// loss needs lives in the suffix forward.
    cache: KvCache<F>,
    suffix_head: Vec<TokenId>,
}

impl<'a, F: Scalar> PreparedContexts<'a, F> {
    pub fn new(
        params: &'a ModelParams<F>,
        contexts: &ContextSet,
        target: &TargetSpec,
        trigger_len: usize,
        kind: LossKind,
    ) -> Result<Self, Error> {
        let mut items = Vec::with_capacity(contexts.n());
        for ctx in contexts.contexts() {
            let resolved = target.resolve_ids(ctx, &params.vocab)?;
            let total = ctx.pre.len() + trigger_len + ctx.post.len() + resolved.len();
            if total > params.config.context_len {
                return Err(Error::Overlength {
                    label: ctx.label.clone(),
                    len: total,
                    max: params.config.context_len,
                });
            }
            let split = ctx.pre.len().saturating_sub(1);
            let mut cache = params.new_cache();
            if split > 0 {
                params.forward_hidden(&mut cache, &ctx.pre[..split])?;
            }
            items.push(PreparedContext {
                label: ctx.label.clone(),
                pre: ctx.pre.clone(),
                post: ctx.post.clone(),
                target: resolved,
                cache,
                suffix_head: ctx.pre[split..].to_vec(),
            });
        }
        Ok(Self {
            params,
            items,
            kind,
        })
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|c| c.label.as_str())
    }

    pub fn targets(&self) -> impl Iterator<Item = &TokenSeq> {
        self.items.iter().map(|c| &c.target)
    }

    /// Exact total loss of one candidate: the sum over contexts of the
    /// loss of `pre || candidate || post` against the resolved target.
    fn total_loss(&self, candidate: &TokenSeq) -> Result<f64, Error> {
        let mut total = 0.0;
        for item in &self.items {
            let mut suffix = Vec::with_capacity(
                item.suffix_head.len() + candidate.len() + item.post.len() + item.target.len(),
            );
            suffix.extend_from_slice(&item.suffix_head);
            suffix.extend_from_slice(candidate);
            suffix.extend_from_slice(&item.post);
            suffix.extend_from_slice(&item.target);
            let mut cache = item.cache.clone();
            let hidden = self.params.forward_hidden(&mut cache, &suffix)?;
            let loss = self
                .params
                .trailing_target_loss(&hidden, &item.target, self.kind)?;
            total += loss.to_f64();
        }
        Ok(total)
    }

    /// Summed one-hot gradient over all contexts at the current trigger.
    fn summed_grad(&self, trigger: &Trigger) -> Result<GradSlice<F>, Error> {
        let per_context: Result<Vec<GradSlice<F>>, Error> = self
            .items
            .par_iter()
            .map(|item| {
                let ctx = PromptContext::new(item.pre.clone(), item.post.clone(), &item.label);
                let (full, trig_span, targ_span) = ctx.assemble(&trigger.ids, &item.target);
                grad_wrt_onehot(
                    self.params,
                    &full,
                    trig_span,
                    targ_span,
                    &item.target,
                    self.kind,
                )
                .map_err(Error::from)
            })
            .collect();
        Ok(sum_grad_slices(&per_context?))
    }

    /// True iff greedy decoding reproduces the target for every context.
    fn decodes_target(&self, trigger: &Trigger) -> Result<bool, Error> {
        for item in &self.items {
            let prompt = TokenSeq::concat(&[&item.pre, &trigger.ids, &item.post]);
            let out = greedy_decode(self.params, &prompt, item.target.len(), None)?;
            if out.0 != item.target.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Exact total losses for a batch of candidates, in input order. The
/// fan-out across candidates is parallel; each candidate's per-context
/// sum runs in a fixed order, so results are schedule-independent.
pub fn evaluate_candidates<F: Scalar>(
    params: &ModelParams<F>,
    contexts: &ContextSet,
    target: &TargetSpec,
    candidates: &[Trigger],
    kind: LossKind,
) -> Result<Vec<f64>, Error> {
    let max_len = candidates.iter().map(|c| c.len()).max().unwrap_or(0);
    let prepared = PreparedContexts::new(params, contexts, target, max_len, kind)?;
    evaluate_prepared(&prepared, candidates)
}

fn evaluate_prepared<F: Scalar>(
    prepared: &PreparedContexts<'_, F>,
    candidates: &[Trigger],
) -> Result<Vec<f64>, Error> {
    candidates
        .par_iter()
        .map(|c| prepared.total_loss(&c.ids))
        .collect()
}

/// Mutable search state threaded through [`gcg_step`].
#[derive(Clone, Debug)]
pub struct GcgState {
    pub current: Trigger,
    pub current_loss: f64,
    pub best: Trigger,
    pub best_loss: f64,
}

impl GcgState {
    fn new(initial: Trigger, loss: f64) -> Self {
        Self {
            current: initial.clone(),
            current_loss: loss,
            best: initial,
            best_loss: loss,
        }
    }
}

/// One GCG iteration: summed gradients at the current trigger, top-k
/// candidate lists per position, uniform single-substitution sampling,
/// exact re-ranking, and a greedy move to the batch argmin (ties toward
/// the lowest candidate index). Best-so-far only improves.
pub fn gcg_step<F: Scalar>(
    state: &mut GcgState,
    prepared: &PreparedContexts<'_, F>,
    mask: &TokenMask,
    config: &GcgConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(), Error> {
    let grad = prepared.summed_grad(&state.current)?;
    let lists = top_k_substitutions(&grad, &state.current, config.top_k, mask)?;
    let candidates = sample_candidates(
        &state.current,
        &lists,
        config.search_width,
        rng,
        &prepared.params.vocab,
    )?;
    let losses = evaluate_prepared(prepared, &candidates)?;

    let mut winner = 0usize;
    for (i, &loss) in losses.iter().enumerate() {
        if loss < losses[winner] {
            winner = i;
        }
    }
    state.current = candidates[winner].clone();
    state.current_loss = losses[winner];
    if state.current_loss < state.best_loss {
        state.best = state.current.clone();
        state.best_loss = state.current_loss;
    }
    Ok(())
}

/// Build the starting trigger for a run.
pub fn init_trigger<F: Scalar>(
    params: &ModelParams<F>,
    contexts: &ContextSet,
    target: &TargetSpec,
    config: &GcgConfig,
    mask: &TokenMask,
    rng: &mut ChaCha8Rng,
) -> Result<Trigger, Error> {
    use rand::RngCore;
    let vocab = &params.vocab;
    let pad_id = {
        let seq = vocab.tokenize("!");
        *seq.first().expect("'!' must tokenize")
    };
    let ids = match &config.init_mode {
        InitMode::Random => (0..config.trigger_len)
            .map(|_| mask.ids()[(rng.next_u64() % mask.len() as u64) as usize])
            .collect::<Vec<_>>(),
        InitMode::TargetString => {
            // tokenized resolved target of the first context, truncated or
            // padded with "!" to the configured length; tokens outside the
            // mask are replaced the same way
            let first = &contexts.contexts()[0];
            let resolved = target.resolve_ids(first, vocab)?;
            let mut ids: Vec<TokenId> = resolved
                .iter()
                .map(|&t| if mask.contains(t) { t } else { pad_id })
                .collect();
            ids.truncate(config.trigger_len);
            while ids.len() < config.trigger_len {
                ids.push(pad_id);
            }
            ids
        }
        InitMode::Literal(text) => {
            let ids = vocab.tokenize(text);
            if ids.is_empty() {
                return Err(Error::BadConfig("literal trigger is empty".into()));
            }
            for &t in ids.iter() {
                if !mask.contains(t) {
                    return Err(Error::LiteralOutsideMask(vocab.token_str(t)?));
                }
            }
            ids.0
        }
    };
    Ok(Trigger::from_ids(TokenSeq(ids), vocab)?)
}

/// Full GCG run over a context set (single-context and universal are the
/// same loop; a singleton set reduces to the single-context objective).
/// Deterministic in `(params, contexts, target, config)` except for the
/// reported wall-clock time.
pub fn optimize_trigger<F: Scalar>(
    params: &ModelParams<F>,
    contexts: &ContextSet,
    target: &TargetSpec,
    config: &GcgConfig,
) -> Result<TriggerResult, Error> {
    let start = Instant::now();
    let mask = allowed_token_mask(&params.vocab, MaskPolicy::PrintableAsciiNonSpecial)?;
    config.validate(mask.len())?;
    let kind: LossKind = config.loss_kind.into();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let initial = init_trigger(params, contexts, target, config, &mask, &mut rng)?;
    let prepared = PreparedContexts::new(params, contexts, target, initial.len(), kind)?;

    let initial_loss = prepared.total_loss(&initial.ids)?;
    let mut state = GcgState::new(initial, initial_loss);
    let mut history = vec![state.best_loss];
    let mut success = prepared.decodes_target(&state.best)?;
    let mut iterations = 0usize;

    while !success && iterations < config.max_iterations {
        let prev_best = state.best_loss;
        gcg_step(&mut state, &prepared, &mask, config, &mut rng)?;
        iterations += 1;
        history.push(state.best_loss);
        if state.best_loss < prev_best {
            success = prepared.decodes_target(&state.best)?;
        }
    }

    Ok(TriggerResult {
        best_trigger: state.best,
        best_loss: state.best_loss,
        success,
        iterations_used: iterations,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        loss_history: history,
    })
}
