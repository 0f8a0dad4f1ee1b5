//! Scenario runners for the three attack shapes.

use std::collections::BTreeMap;

use agentsim::{parse_action, run_episode_from_state, Action, BrowserState, PromptTemplate};
use gcg::{
    check_retokenization, optimize_trigger, Retokenization, TargetSpec, Trigger,
    TriggerResult,
};
use microlm::{greedy_decode, ModelParams, Scalar, TokenSeq, EOS_ID};
use rayon::prelude::*;

use crate::contexts::{
    context_for_page, load_html, make_contexts, render_goal_template, GoalSet,
};
use crate::error::Error;
use crate::inject::inject_trigger;
use crate::metrics::{
    analyze_failures, compute_metrics, detect_exfiltration, Leak, ResponseOutcome,
    DEFAULT_COT_PREFIXES,
};
use crate::report::{EvalReport, Timing, TriggerInfo};
use crate::scenario::{read_goals, read_labels, LoginPage, Scenario, TwtiScenario, TwuiScenario, UwtiScenario};
use crate::sweep::SweepRow;

/// Response budget for test-set decodes: room for a reasoning prefix plus
/// one action call.
const EVAL_MAX_NEW: usize = 48;

/// Outcome of a single-pair run: the optimization result, the sweep row
/// it contributes, and the end-to-end checks on the injected page.
#[derive(Clone, Debug)]
pub struct TwtiRun {
    pub result: TriggerResult,
    pub row: SweepRow,
    /// The target action was applied during an episode on the page with
    /// the real trigger text embedded (the string path, not the token
    /// path the optimizer scores).
    pub episode_target_hit: bool,
    /// Token-level assembly and string re-tokenization agreed.
    pub retokenization_consistent: bool,
}

fn trigger_info(trigger: &Trigger) -> TriggerInfo {
    TriggerInfo {
        text: trigger.text.clone(),
        ids: trigger.ids.0.clone(),
    }
}

/// Optimize on the single (site, goal) pair and verify end to end with a
/// browser episode on the injected page.
pub fn run_twti<F: Scalar>(
    params: &ModelParams<F>,
    scenario: &TwtiScenario,
    template: &PromptTemplate,
) -> Result<TwtiRun, Error> {
    let contexts = make_contexts(
        &Scenario::Twti(scenario.clone()),
        GoalSet::Train,
        template,
        &params.vocab,
    )?;
    let target = TargetSpec::literal(&scenario.target);
    let result = optimize_trigger(params, &contexts, &target, &scenario.gcg)?;

    let target_action = parse_action(&scenario.target).ok_or_else(|| {
        Error::BadScenario(format!("target '{}' is not a valid action", scenario.target))
    })?;

    let html = load_html(&scenario.site.html_path)?;
    let injected = inject_trigger(
        &html,
        &scenario.site.locator,
        &result.best_trigger.text,
        scenario.site.inject_mode,
    )?;
    let state = BrowserState::single_page("page:start", &injected, &[]);
    let trace = run_episode_from_state(
        params,
        state,
        &scenario.goal,
        scenario.episode_max_steps,
        template,
    )?;
    let episode_target_hit = trace
        .final_state
        .event_log
        .iter()
        .any(|a| *a == target_action);

    let retokenization_consistent = contexts.contexts().iter().all(|ctx| {
        matches!(
            check_retokenization(&result.best_trigger, ctx, &params.vocab),
            Ok(Retokenization::Consistent)
        )
    });

    let row = SweepRow {
        param: "default".into(),
        value: "default".into(),
        run: 0,
        seed: scenario.gcg.seed,
        site: scenario.site.label.clone(),
        goal: scenario.goal.clone(),
        seconds: result.wall_clock_seconds,
        iterations: result.iterations_used,
        success: result.success,
    };
    Ok(TwtiRun {
        result,
        row,
        episode_target_hit,
        retokenization_consistent,
    })
}

/// Greedy-decode one test context with the trigger spliced in.
fn decode_with_trigger<F: Scalar>(
    params: &ModelParams<F>,
    ctx: &gcg::PromptContext,
    trigger_ids: &TokenSeq,
) -> Result<String, Error> {
    let prompt = TokenSeq::concat(&[&ctx.pre, trigger_ids, &ctx.post]);
    let out = greedy_decode(params, &prompt, EVAL_MAX_NEW, Some(&[EOS_ID]))?;
    Ok(params.vocab.detokenize(&out)?)
}

fn score_twui_goals<F: Scalar>(
    params: &ModelParams<F>,
    scenario: &TwuiScenario,
    goals: &[String],
    template: &PromptTemplate,
    trigger_ids: &TokenSeq,
    target_action: &Action,
) -> Result<Vec<ResponseOutcome>, Error> {
    let html = load_html(&scenario.site.html_path)?;
    let contexts: Vec<(String, gcg::PromptContext)> = goals
        .iter()
        .map(|goal| {
            context_for_page(
                &html,
                &scenario.site,
                goal,
                format!("{}:{}", scenario.site.label, goal),
                BTreeMap::new(),
                template,
                &params.vocab,
            )
            .map(|c| (goal.clone(), c))
        })
        .collect::<Result<Vec<_>, _>>()?;
    contexts
        .par_iter()
        .map(|(goal, ctx)| {
            let response = decode_with_trigger(params, ctx, trigger_ids)?;
            Ok(ResponseOutcome::score(goal.clone(), response, target_action))
        })
        .collect()
}

/// Score a given trigger on the test goals of a universal-instruction
/// scenario, including the empty-trigger control and failure clustering.
pub fn twui_eval<F: Scalar>(
    params: &ModelParams<F>,
    scenario: &TwuiScenario,
    template: &PromptTemplate,
    trigger: &Trigger,
    timing: Timing,
) -> Result<EvalReport, Error> {
    let target_action = parse_action(&scenario.target).ok_or_else(|| {
        Error::BadScenario(format!("target '{}' is not a valid action", scenario.target))
    })?;
    let test_goals = read_goals(&scenario.test_goals)?;
    let mut outcomes = score_twui_goals(
        params,
        scenario,
        &test_goals,
        template,
        &trigger.ids,
        &target_action,
    )?;
    let baseline_outcomes = score_twui_goals(
        params,
        scenario,
        &test_goals,
        template,
        &TokenSeq::default(),
        &target_action,
    )?;

    let labels = match &scenario.expected_actions {
        Some(path) => read_labels(path)?,
        None => BTreeMap::new(),
    };
    analyze_failures(&mut outcomes, &labels, &DEFAULT_COT_PREFIXES);

    let (asr, asr_v) = compute_metrics(&outcomes)?;
    let (baseline_asr, _) = compute_metrics(&baseline_outcomes)?;
    Ok(EvalReport {
        scenario_id: scenario.id.clone(),
        asr,
        asr_v,
        baseline_asr,
        outcomes,
        trigger: trigger_info(trigger),
        timing,
        config: serde_json::to_value(&scenario.gcg).unwrap_or_default(),
    })
}

/// Universal-instruction attack on one site: optimize over the training
/// goals, score every test goal by greedy decode + parse, and compare
/// against the empty-trigger control.
pub fn run_twui<F: Scalar>(
    params: &ModelParams<F>,
    scenario: &TwuiScenario,
    template: &PromptTemplate,
) -> Result<EvalReport, Error> {
    Scenario::Twui(scenario.clone()).validate()?;
    let train = make_contexts(
        &Scenario::Twui(scenario.clone()),
        GoalSet::Train,
        template,
        &params.vocab,
    )?;
    let target = TargetSpec::literal(&scenario.target);
    let result = optimize_trigger(params, &train, &target, &scenario.gcg)?;
    twui_eval(
        params,
        scenario,
        template,
        &result.best_trigger,
        Timing {
            wall_seconds: result.wall_clock_seconds,
            iterations: result.iterations_used,
        },
    )
}

/// Episode-based leak evaluation of one page set. Leak classes map onto
/// the report metrics: `invoked_target` records at-least-one credential
/// leaked, `verbatim_match` records a full leak.
fn score_login_pages<F: Scalar>(
    params: &ModelParams<F>,
    pages: &[LoginPage],
    goal_template: &str,
    trigger_text: &str,
    max_steps: usize,
    template: &PromptTemplate,
) -> Result<Vec<ResponseOutcome>, Error> {
    pages
        .par_iter()
        .map(|page| {
            let html = load_html(&page.html_path)?;
            let injected =
                inject_trigger(&html, &page.locator, trigger_text, page.inject_mode)?;
            let state = BrowserState::single_page(
                "page:start",
                &injected,
                &[page.sink_bid.clone()],
            );
            let goal = render_goal_template(goal_template, page);
            let trace = run_episode_from_state(params, state, &goal, max_steps, template)?;
            let leak = detect_exfiltration(&trace, &page.username, &page.password);
            let response = trace
                .steps
                .iter()
                .map(|s| s.response.as_str())
                .collect::<Vec<_>>()
                .join(" | ");
            let parsed = trace.steps.first().and_then(|s| s.parsed.clone());
            Ok(ResponseOutcome {
                goal: page.label.clone(),
                response,
                parsed,
                invoked_target: leak != Leak::None,
                verbatim_match: leak == Leak::Full,
                failure_class: None,
            })
        })
        .collect()
}

/// Classify leaks for both page sets with a given trigger. Returns
/// (test report, train report); the baselines are empty-trigger controls.
pub fn uwti_eval<F: Scalar>(
    params: &ModelParams<F>,
    scenario: &UwtiScenario,
    template: &PromptTemplate,
    trigger: &Trigger,
    timing: Timing,
) -> Result<(EvalReport, EvalReport), Error> {
    let score = |pages: &[LoginPage], trigger_text: &str| {
        score_login_pages(
            params,
            pages,
            &scenario.goal_template,
            trigger_text,
            scenario.episode_max_steps,
            template,
        )
    };
    let test_outcomes = score(&scenario.test_pages, &trigger.text)?;
    let baseline_outcomes = score(&scenario.test_pages, "")?;
    let train_outcomes = score(&scenario.train_pages, &trigger.text)?;
    let train_baseline = score(&scenario.train_pages, "")?;

    let (asr, asr_v) = compute_metrics(&test_outcomes)?;
    let (baseline_asr, _) = compute_metrics(&baseline_outcomes)?;
    let (train_asr, train_asr_v) = compute_metrics(&train_outcomes)?;
    let (train_baseline_asr, _) = compute_metrics(&train_baseline)?;

    let config = serde_json::to_value(&scenario.gcg).unwrap_or_default();
    let test_report = EvalReport {
        scenario_id: scenario.id.clone(),
        asr,
        asr_v,
        baseline_asr,
        outcomes: test_outcomes,
        trigger: trigger_info(trigger),
        timing: timing.clone(),
        config: config.clone(),
    };
    let train_report = EvalReport {
        scenario_id: format!("{}_train", scenario.id),
        asr: train_asr,
        asr_v: train_asr_v,
        baseline_asr: train_baseline_asr,
        outcomes: train_outcomes,
        trigger: trigger_info(trigger),
        timing,
        config,
    };
    Ok((test_report, train_report))
}

/// Universal-website credential attack: optimize over the training login
/// pages, then classify leaks on both page sets with browser episodes.
pub fn run_uwti<F: Scalar>(
    params: &ModelParams<F>,
    scenario: &UwtiScenario,
    template: &PromptTemplate,
) -> Result<(EvalReport, EvalReport), Error> {
    Scenario::Uwti(scenario.clone()).validate()?;
    let train = make_contexts(
        &Scenario::Uwti(scenario.clone()),
        GoalSet::Train,
        template,
        &params.vocab,
    )?;
    let target = TargetSpec {
        template: scenario.target.clone(),
    };
    let result = optimize_trigger(params, &train, &target, &scenario.gcg)?;
    uwti_eval(
        params,
        scenario,
        template,
        &result.best_trigger,
        Timing {
            wall_seconds: result.wall_clock_seconds,
            iterations: result.iterations_used,
        },
    )
}
