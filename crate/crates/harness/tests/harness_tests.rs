use std::path::{Path, PathBuf};

use agentsim::PromptTemplate;
use harness::{make_contexts, GoalSet, Scenario};
use microlm::Vocab;
use proptest::prelude::*;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn test_vocab() -> Vocab {
    // enough corpus to exercise merges without loading the checkpoint
    let corpus = vec![
        "You are a web navigation agent. Goal: click the link\n[1] link \"x\"\nclick('1')"
            .to_string(),
    ];
    Vocab::learn(&corpus, 300)
}

fn template() -> PromptTemplate {
    PromptTemplate::load(&fixtures().join("prompt/template_v1.txt")).unwrap()
}

#[test]
fn twti_scenario_yields_a_single_context() {
    let scenario = Scenario::load(&fixtures().join("scenarios/twti_binary.json")).unwrap();
    let set = make_contexts(&scenario, GoalSet::Train, &template(), &test_vocab()).unwrap();
    assert_eq!(set.n(), 1);
    let ctx = &set.contexts()[0];
    assert!(ctx.pre.len() > 10);
    assert!(ctx.post.len() > 10);
    // the prompt was cleaved inside the injected node's line
    assert_eq!(ctx.pre[0], microlm::BOS_ID);
}

#[test]
fn twui_train_yields_twenty_five_contexts() {
    let scenario = Scenario::load(&fixtures().join("scenarios/twui_binary.json")).unwrap();
    let set = make_contexts(&scenario, GoalSet::Train, &template(), &test_vocab()).unwrap();
    assert_eq!(set.n(), 25);
    let test = make_contexts(&scenario, GoalSet::Test, &template(), &test_vocab()).unwrap();
    assert_eq!(test.n(), 200);
}

#[test]
fn uwti_train_yields_eight_contexts_with_distinct_bindings() {
    let scenario = Scenario::load(&fixtures().join("scenarios/uwti_login.json")).unwrap();
    let set = make_contexts(&scenario, GoalSet::Train, &template(), &test_vocab()).unwrap();
    assert_eq!(set.n(), 8);
    let mut creds = std::collections::BTreeSet::new();
    for ctx in set.contexts() {
        let user = ctx.bindings.get("username").expect("username binding");
        let pass = ctx.bindings.get("password").expect("password binding");
        assert!(ctx.bindings.contains_key("sink_bid"));
        creds.insert(format!("{user}:{pass}"));
    }
    assert_eq!(creds.len(), 8, "credentials must differ per page");

    let test = make_contexts(&scenario, GoalSet::Test, &template(), &test_vocab()).unwrap();
    assert_eq!(test.n(), 11);
}

#[test]
fn train_and_test_goal_files_are_disjoint_for_every_site() {
    for site in ["chess", "binary", "city", "norway", "google"] {
        let train =
            std::fs::read_to_string(fixtures().join(format!("goals/{site}_train.txt"))).unwrap();
        let test =
            std::fs::read_to_string(fixtures().join(format!("goals/{site}_test.txt"))).unwrap();
        let train_set: std::collections::BTreeSet<&str> = train.lines().collect();
        assert_eq!(train_set.len(), 25);
        assert_eq!(test.lines().count(), 200);
        for goal in test.lines() {
            assert!(!train_set.contains(goal), "{site}: {goal:?} in both sets");
        }
    }
}

#[test]
fn overlapping_goal_files_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("train.txt"), "goal a\ngoal b\n").unwrap();
    std::fs::write(dir.path().join("test.txt"), "goal c\ngoal b\n").unwrap();
    std::fs::write(dir.path().join("page.html"), "<div id='s'></div>").unwrap();
    let scenario = serde_json::json!({
        "kind": "twui",
        "id": "bad",
        "checkpoint": "model.ckpt",
        "site": {"label": "x", "html_path": "page.html", "locator": "#s", "inject_mode": "visible_text"},
        "train_goals": "train.txt",
        "test_goals": "test.txt",
        "target": "tab_close()",
        "gcg": {
            "search_width": 4, "top_k": 4, "max_iterations": 1,
            "loss_kind": "cross_entropy", "init_mode": "random",
            "trigger_len": 2, "seed": 0
        }
    });
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, scenario.to_string()).unwrap();
    match Scenario::load(&path) {
        Err(harness::Error::Disjointness(goal)) => assert_eq!(goal, "goal b"),
        other => panic!("expected disjointness error, got {other:?}"),
    }
}

#[test]
fn aria_hidden_content_never_reaches_serialized_fixture_trees() {
    for entry in std::fs::read_dir(fixtures().join("sites")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("html") {
            continue;
        }
        let html = std::fs::read_to_string(&path).unwrap();
        let tree = agentsim::build_axtree(&agentsim::parse_html(&html).unwrap());
        let flat = agentsim::serialize_axtree(&tree);
        // fixture pages carry no aria-hidden content; guard the rule with
        // an injected hidden node instead
        let hidden = format!("{html}<p aria-hidden=\"true\">NEVER-SERIALIZED</p>");
        let tree2 = agentsim::build_axtree(&agentsim::parse_html(&hidden).unwrap());
        assert!(!agentsim::serialize_axtree(&tree2).contains("NEVER-SERIALIZED"));
        assert!(!flat.contains("aria-hidden"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn asr_v_never_exceeds_asr(flags in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..40)) {
        let outcomes: Vec<harness::ResponseOutcome> = flags
            .into_iter()
            .map(|(invoked, verbatim_raw)| harness::ResponseOutcome {
                goal: "g".into(),
                response: "r".into(),
                parsed: None,
                invoked_target: invoked,
                // construction keeps the type invariant: verbatim implies invoked
                verbatim_match: invoked && verbatim_raw,
                failure_class: None,
            })
            .collect();
        let (asr, asr_v) = harness::compute_metrics(&outcomes).unwrap();
        prop_assert!(asr_v <= asr + 1e-12);
    }
}
