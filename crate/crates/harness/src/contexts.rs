//! Prompt-context construction: inject a marker at the page's injection
//! point, compile the prompt, and cleave it at the marker.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use agentsim::{build_axtree, compile_prompt, parse_html, serialize_axtree, split_at_injection, PromptTemplate};
use gcg::{ContextSet, PromptContext};
use microlm::Vocab;

use crate::error::Error;
use crate::inject::inject_trigger;
use crate::scenario::{read_goals, LoginPage, Scenario, SiteRef};

/// Placeholder spliced into the page where the trigger will live. It must
/// never occur in fixture content.
pub const INJECTION_MARKER: &str = "@@TRIGGER@@";

/// Which half of a scenario's data to build contexts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GoalSet {
    Train,
    Test,
}

pub(crate) fn load_html(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))
}

/// Build one context: marker-injected page -> tree -> prompt -> split.
pub(crate) fn context_for_page(
    html: &str,
    site: &SiteRef,
    goal: &str,
    label: String,
    bindings: BTreeMap<String, String>,
    template: &PromptTemplate,
    vocab: &Vocab,
) -> Result<PromptContext, Error> {
    let injected = inject_trigger(html, &site.locator, INJECTION_MARKER, site.inject_mode)?;
    let tree = build_axtree(&parse_html(&injected)?);
    let prompt = compile_prompt(template, goal, &serialize_axtree(&tree));
    let (pre, post) = split_at_injection(&prompt, INJECTION_MARKER)?;
    // the model decodes after a newline separator, matching transcripts
    let post_with_sep = format!("{post}\n");
    let mut pre_ids = vec![microlm::BOS_ID];
    pre_ids.extend_from_slice(&vocab.tokenize(&pre));
    Ok(PromptContext::new(
        microlm::TokenSeq(pre_ids),
        vocab.tokenize(&post_with_sep),
        label,
    )
    .with_bindings(bindings))
}

fn login_site_ref(page: &LoginPage) -> SiteRef {
    SiteRef {
        label: page.label.clone(),
        html_path: page.html_path.clone(),
        locator: page.locator.clone(),
        inject_mode: page.inject_mode,
    }
}

pub(crate) fn login_bindings(page: &LoginPage) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("username".to_string(), page.username.clone()),
        ("password".to_string(), page.password.clone()),
        ("sink_bid".to_string(), page.sink_bid.clone()),
    ])
}

pub(crate) fn render_goal_template(template: &str, page: &LoginPage) -> String {
    template
        .replace("{username}", &page.username)
        .replace("{password}", &page.password)
        .replace("{sink_bid}", &page.sink_bid)
}

/// Construct the train or test context set for a scenario: one context
/// per (page, goal) pair, with credential bindings for login pages.
pub fn make_contexts(
    scenario: &Scenario,
    which: GoalSet,
    template: &PromptTemplate,
    vocab: &Vocab,
) -> Result<ContextSet, Error> {
    let contexts = match scenario {
        Scenario::Twti(s) => {
            if which == GoalSet::Test {
                return Err(Error::BadScenario(
                    "a targeted-instruction scenario has no test goals".into(),
                ));
            }
            let html = load_html(&s.site.html_path)?;
            vec![context_for_page(
                &html,
                &s.site,
                &s.goal,
                format!("{}:{}", s.site.label, s.goal),
                BTreeMap::new(),
                template,
                vocab,
            )?]
        }
        Scenario::Twui(s) => {
            let goals = match which {
                GoalSet::Train => read_goals(&s.train_goals)?,
                GoalSet::Test => read_goals(&s.test_goals)?,
            };
            let html = load_html(&s.site.html_path)?;
            goals
                .iter()
                .map(|goal| {
                    context_for_page(
                        &html,
                        &s.site,
                        goal,
                        format!("{}:{}", s.site.label, goal),
                        BTreeMap::new(),
                        template,
                        vocab,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        Scenario::Uwti(s) => {
            let pages = match which {
                GoalSet::Train => &s.train_pages,
                GoalSet::Test => &s.test_pages,
            };
            pages
                .iter()
                .map(|page| {
                    let html = load_html(&page.html_path)?;
                    let goal = render_goal_template(&s.goal_template, page);
                    context_for_page(
                        &html,
                        &login_site_ref(page),
                        &goal,
                        page.label.clone(),
                        login_bindings(page),
                        template,
                        vocab,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    Ok(ContextSet::new(contexts)?)
}
