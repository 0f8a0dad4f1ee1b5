use std::collections::BTreeSet;

use agentsim::{
    agent_step, parse_action, run_episode, Action, BrowserState, PromptTemplate,
};
use microlm::{ModelConfig, ModelParams, Vocab};
use proptest::prelude::*;

/// Single-token-per-action vocab plus enough characters to tokenize a
/// prompt; paired with a model rigged so one chosen token always wins.
fn forced_model(forced_text: &str) -> ModelParams<f64> {
    let mut tokens = vec![b"<pad>".to_vec(), b"<bos>".to_vec(), b"<eos>".to_vec()];
    for b in 0x20u8..0x7f {
        tokens.push(vec![b]);
    }
    tokens.push(b"\n".to_vec());
    tokens.push(forced_text.as_bytes().to_vec());
    let forced_id = (tokens.len() - 1) as u32;
    let special: BTreeSet<u32> = [0, 1, 2].into_iter().collect();
    let vocab = Vocab::from_tokens(tokens, special, false);

    let v = vocab.size();
    let d = 8;
    let config = ModelConfig {
        vocab_size: v,
        dim: d,
        layers: 1,
        heads: 1,
        context_len: 2048,
        tied_head: false,
    };
    let mut params: ModelParams<f64> = ModelParams::init_random(config, vocab, 0);
    params.pos_emb.iter_mut().for_each(|x| *x = 0.0);
    for row in 0..v {
        for i in 0..d {
            params.tok_emb[row * d + i] = if i == 0 { 1.0 } else { 0.0 };
        }
    }
    for l in &mut params.layers {
        for slot in [
            &mut l.wq, &mut l.wk, &mut l.wv, &mut l.wo, &mut l.w_fc1, &mut l.w_fc2,
        ] {
            slot.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    let head = params.head.as_mut().unwrap();
    head.iter_mut().for_each(|x| *x = 0.0);
    head[forced_id as usize * d] = 1.0;
    params
}

#[test]
fn forced_tab_close_model_closes_the_tab() {
    let params = forced_model("tab_close()");
    let mut state = BrowserState::single_page("page:x", "<button>Go</button>", &[]);
    let template = PromptTemplate::v1();
    let record = agent_step(&params, &mut state, "do anything", &template).unwrap();
    assert_eq!(record.parsed, Some(Action::TabClose));
    assert!(record.applied);
    assert!(!state.tab_open);
}

#[test]
fn not_an_action_response_leaves_state_unchanged() {
    let params = forced_model("um, unsure!");
    let mut state = BrowserState::single_page("page:x", "<button>Go</button>", &[]);
    let before = state.clone();
    let template = PromptTemplate::v1();
    let record = agent_step(&params, &mut state, "do anything", &template).unwrap();
    assert_eq!(record.parsed, None);
    assert!(!record.applied);
    assert_eq!(state, before);
}

#[test]
fn episode_ends_on_first_message_action() {
    let params = forced_model("report_infeasible('No cheating in chess!')");
    let template = PromptTemplate::v1();
    let trace = run_episode(
        &params,
        "<h1>Chess</h1><button>Play</button>",
        "win this game",
        5,
        &template,
        &[],
    )
    .unwrap();
    assert_eq!(trace.steps.len(), 1);
    assert_eq!(
        trace.final_state.message_log,
        vec!["No cheating in chess!".to_string()]
    );
}

#[test]
fn max_steps_one_gives_single_step_trace() {
    let params = forced_model("scroll(0, -100)");
    let template = PromptTemplate::v1();
    let trace = run_episode(&params, "<p>page</p>", "scroll around", 1, &template, &[]).unwrap();
    assert_eq!(trace.steps.len(), 1);
    assert_eq!(trace.final_state.event_log.len(), 1);
}

#[test]
fn episode_traces_are_deterministic() {
    let params = forced_model("noop()");
    let template = PromptTemplate::v1();
    let page = "<h1>Static</h1><a href='/x'>link</a>";
    let a = run_episode(&params, page, "g", 3, &template, &[]).unwrap();
    let b = run_episode(&params, page, "g", 3, &template, &[]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.steps.len(), 3); // noop never ends the episode early
}

fn arg_string() -> impl Strategy<Value = String> {
    // printable ASCII without quotes; the grammar cannot round-trip
    // arguments holding both quote characters
    proptest::string::string_regex("[ -!#-&(-~]{0,12}").unwrap()
}

fn action_strategy() -> impl Strategy<Value = Action> {
    prop_oneof![
        arg_string().prop_map(|bid| Action::Click { bid }),
        (arg_string(), arg_string()).prop_map(|(bid, text)| Action::Fill { bid, text }),
        (-500i64..500, -500i64..500).prop_map(|(dx, dy)| Action::Scroll { dx, dy }),
        arg_string().prop_map(|url| Action::Goto { url }),
        Just(Action::TabClose),
        arg_string().prop_map(|msg| Action::ReportInfeasible { msg }),
        arg_string().prop_map(|msg| Action::SendMsgToUser { msg }),
        Just(Action::Noop),
    ]
}

proptest! {
    #[test]
    fn serialization_round_trips_through_the_parser(action in action_strategy()) {
        let serialized = action.to_string();
        prop_assert_eq!(parse_action(&serialized), Some(action));
    }

    #[test]
    fn parser_never_panics_on_arbitrary_input(s in "\\PC{0,80}") {
        let _ = parse_action(&s);
    }
}
