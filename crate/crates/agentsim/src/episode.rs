//! The agent loop: compile a prompt from the live page, decode a
//! response, run it through the syntactic filter, and mutate the browser.

use microlm::{greedy_decode, ModelParams, Scalar, TokenSeq, BOS_ID, EOS_ID};
use serde::{Deserialize, Serialize};

use crate::actions::{parse_action, Action};
use crate::axtree::{build_axtree, serialize_axtree};
use crate::browser::{apply_action, BrowserState};
use crate::dom::parse_html;
use crate::error::Error;
use crate::prompt::PromptTemplate;

/// Response budget per step, in tokens. Long enough for a reasoning
/// prefix plus one action call.
pub const MAX_RESPONSE_TOKENS: usize = 48;

/// Outcome of one prompt/decode/parse/apply cycle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub prompt_tokens: usize,
    pub response: String,
    /// `None` is the syntactic-filter rejection (NotAnAction).
    pub parsed: Option<Action>,
    pub applied: bool,
    /// Browser error for a parsed-but-unappliable action.
    pub apply_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<StepRecord>,
    pub final_state: BrowserState,
}

impl Trace {
    pub fn ended_with_message(&self) -> bool {
        !self.final_state.message_log.is_empty()
    }
}

fn episode_ending(action: &Action) -> bool {
    matches!(
        action,
        Action::TabClose | Action::ReportInfeasible { .. } | Action::SendMsgToUser { .. }
    )
}

/// One cycle of the loop. The prompt is compiled from the current page,
/// the response is greedily decoded, and a parsed action is applied;
/// a NotAnAction response or a failed apply leaves the state unchanged
/// but is recorded.
pub fn agent_step<F: Scalar>(
    params: &ModelParams<F>,
    state: &mut BrowserState,
    goal: &str,
    template: &PromptTemplate,
) -> Result<StepRecord, Error> {
    if !state.tab_open {
        return Err(Error::TabClosed);
    }
    let tree = build_axtree(&parse_html(state.current_html())?);
    let prompt = template.render(goal, &serialize_axtree(&tree));

    let mut prefix = vec![BOS_ID];
    prefix.extend_from_slice(&params.vocab.tokenize(&format!("{prompt}\n")));
    let out = greedy_decode(params, &prefix, MAX_RESPONSE_TOKENS, Some(&[EOS_ID]))?;
    let response = params.vocab.detokenize(&TokenSeq(out.0))?;

    let parsed = parse_action(&response);
    let (applied, apply_error) = match &parsed {
        Some(action) => match apply_action(state, action) {
            Ok(()) => (true, None),
            Err(e) => (false, Some(e.to_string())),
        },
        None => (false, None),
    };
    Ok(StepRecord {
        prompt_tokens: prefix.len(),
        response,
        parsed,
        applied,
        apply_error,
    })
}

/// Run the loop until an episode-ending action, a closed tab, or
/// `max_steps`; the trace is fully deterministic in its inputs.
pub fn run_episode_from_state<F: Scalar>(
    params: &ModelParams<F>,
    mut state: BrowserState,
    goal: &str,
    max_steps: usize,
    template: &PromptTemplate,
) -> Result<Trace, Error> {
    assert!(max_steps >= 1, "max_steps must be at least 1");
    let mut steps = Vec::new();
    for _ in 0..max_steps {
        let record = agent_step(params, &mut state, goal, template)?;
        let done = record
            .parsed
            .as_ref()
            .map(|a| record.applied && episode_ending(a))
            .unwrap_or(false);
        steps.push(record);
        if done || !state.tab_open {
            break;
        }
    }
    Ok(Trace {
        steps,
        final_state: state,
    })
}

/// Single-page convenience wrapper around [`run_episode_from_state`].
pub fn run_episode<F: Scalar>(
    params: &ModelParams<F>,
    site_html: &str,
    goal: &str,
    max_steps: usize,
    template: &PromptTemplate,
    sink_bids: &[String],
) -> Result<Trace, Error> {
    let state = BrowserState::single_page("page:start", site_html, sink_bids);
    run_episode_from_state(params, state, goal, max_steps, template)
}
