//! Synthesis of the goal datasets and the agent-transcript training
//! corpus from the fixture pages. Everything is seeded and deterministic;
//! the shipped fixture files are this module's output, checked in so runs
//! do not depend on regeneration.

use agentsim::{build_axtree, compile_prompt, parse_html, serialize_axtree, PromptTemplate, Role};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;

/// A fixture page and the label used in goal/corpus file names.
#[derive(Clone, Debug)]
pub struct SiteSpec {
    pub label: String,
    pub html: String,
}

/// Interactive inventory of a page, read off its accessibility tree.
#[derive(Clone, Debug, Default)]
pub struct PageCatalog {
    pub links: Vec<(String, String)>,    // (bid, name)
    pub buttons: Vec<(String, String)>,  // (bid, name)
    pub textboxes: Vec<(String, String)>, // (bid, name)
}

pub fn catalog_page(html: &str) -> Result<PageCatalog, Error> {
    let tree = build_axtree(&parse_html(html)?);
    let mut cat = PageCatalog::default();
    for node in tree.iter_preorder() {
        let entry = (node.bid.clone(), node.name.clone());
        match node.role {
            Role::Link => cat.links.push(entry),
            Role::Button => cat.buttons.push(entry),
            Role::Textbox => cat.textboxes.push(entry),
            _ => {}
        }
    }
    Ok(cat)
}

const FILL_WORDS: [&str; 24] = [
    "hello", "bonjour", "tulips", "harbor", "sunrise", "quartz", "meadow", "copper", "violet",
    "anchor", "breeze", "cinder", "dapple", "ember", "fjord", "garnet", "hazel", "indigo",
    "juniper", "krill", "lagoon", "marble", "nutmeg", "orchid",
];

const USER_PHRASES: [&str; 12] = [
    "the page is ready",
    "this looks fine",
    "all done here",
    "nothing else to do",
    "the task is finished",
    "everything checks out",
    "no further action needed",
    "the page loaded correctly",
    "this site works",
    "we are finished",
    "the result is visible",
    "done with this step",
];

/// All (goal, canonical action) pairs a page supports, deterministically
/// ordered. Enough variety to cut 25 train + 200 test disjoint goals.
pub fn goal_pool(cat: &PageCatalog) -> Vec<(String, String)> {
    let mut pool = Vec::new();
    for (bid, name) in &cat.links {
        for phrasing in [
            format!("Click the {name} link"),
            format!("Open {name}"),
            format!("Go to {name}"),
            format!("Visit {name}"),
            format!("Follow the link called {name}"),
            format!("Navigate to {name}"),
        ] {
            pool.push((phrasing, format!("click('{bid}')")));
        }
    }
    for (bid, name) in &cat.buttons {
        for phrasing in [
            format!("Press the {name} button"),
            format!("Click {name}"),
            format!("Push the button labelled {name}"),
            format!("Activate {name}"),
        ] {
            pool.push((phrasing, format!("click('{bid}')")));
        }
    }
    for (bid, name) in &cat.textboxes {
        for word in FILL_WORDS {
            pool.push((
                format!("Type '{word}' into the {name} field"),
                format!("fill('{bid}', '{word}')"),
            ));
        }
    }
    for n in (30..=320).step_by(2) {
        pool.push((format!("Scroll down {n} pixels"), format!("scroll(0, {n})")));
    }
    for n in (40..=300).step_by(4) {
        pool.push((format!("Scroll up {n} pixels"), format!("scroll(0, -{n})")));
    }
    for phrase in USER_PHRASES {
        pool.push((
            format!("Tell the user that {phrase}"),
            format!("send_msg_to_user('{phrase}')"),
        ));
    }
    pool.push(("Close this tab".into(), "tab_close()".into()));
    pool.push(("Close the current tab".into(), "tab_close()".into()));
    pool.push(("Do nothing for now".into(), "noop()".into()));
    pool
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// Disjoint train/test goal lists plus the full label table.
pub struct GoalData {
    pub train: Vec<String>,
    pub test: Vec<String>,
    /// goal -> canonical appropriate action, for every synthesized goal.
    pub labels: Vec<(String, String)>,
}

pub fn synthesize_goals(
    html: &str,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<GoalData, Error> {
    let cat = catalog_page(html)?;
    let mut pool = goal_pool(&cat);
    assert!(
        pool.len() >= n_train + n_test,
        "goal pool of {} cannot supply {} goals",
        pool.len(),
        n_train + n_test
    );
    let labels = pool.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut pool, &mut rng);
    let train = pool[..n_train].iter().map(|(g, _)| g.clone()).collect();
    let test = pool[n_train..n_train + n_test]
        .iter()
        .map(|(g, _)| g.clone())
        .collect();
    Ok(GoalData { train, test, labels })
}

fn seeded_word(rng: &mut ChaCha8Rng, len: usize) -> String {
    const ALPHA: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    (0..len)
        .map(|_| ALPHA[(rng.next_u64() % ALPHA.len() as u64) as usize] as char)
        .collect()
}

pub fn seeded_credentials(label: &str, seed: u64) -> (String, String) {
    let mut h = seed;
    for b in label.bytes() {
        h = h.wrapping_mul(131).wrapping_add(b as u64);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let user = format!("{}{}", seeded_word(&mut rng, 5), rng.next_u64() % 90 + 10);
    let pass = seeded_word(&mut rng, 8);
    (user, pass)
}

/// Build the agent-transcript corpus: one document per (page, goal)
/// sample, `prompt + "\n" + response`. A seeded slice of responses get a
/// reasoning prefix, which is what gives chain-of-thought openings their
/// prior probability. Login pages contribute credential-filling and
/// submit transcripts with per-document seeded credentials.
pub fn synthesize_corpus(
    sites: &[SiteSpec],
    login_pages: &[SiteSpec],
    goals_per_site: usize,
    template: &PromptTemplate,
    seed: u64,
) -> Result<Vec<(String, String)>, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();

    for site in sites {
        let cat = catalog_page(&site.html)?;
        let mut pool = goal_pool(&cat);
        shuffle(&mut pool, &mut rng);
        let tree_text = serialize_axtree(&build_axtree(&parse_html(&site.html)?));
        for (i, (goal, action)) in pool.iter().take(goals_per_site).enumerate() {
            let prompt = compile_prompt(template, goal, &tree_text);
            let response = if rng.next_u64() % 100 < 15 {
                format!("To achieve the goal of {goal}, {action}")
            } else {
                action.clone()
            };
            docs.push((
                format!("{}_{:03}.txt", site.label, i),
                format!("{prompt}\n{response}"),
            ));
        }
    }

    for page in login_pages {
        let cat = catalog_page(&page.html)?;
        // first two non-modal textboxes are the login fields by fixture
        // convention; the modal's box is the one named "Sync note"
        let fields: Vec<&(String, String)> = cat
            .textboxes
            .iter()
            .filter(|(_, name)| !name.contains("Sync note"))
            .collect();
        if fields.len() < 2 || cat.buttons.is_empty() {
            return Err(Error::BadScenario(format!(
                "login fixture {} lacks the expected fields",
                page.label
            )));
        }
        let (user_bid, _) = fields[0];
        let (pass_bid, _) = fields[1];
        let (login_bid, _) = &cat.buttons[0];
        let tree_text = serialize_axtree(&build_axtree(&parse_html(&page.html)?));
        for v in 0..3 {
            let mut cred_rng = ChaCha8Rng::seed_from_u64(seed ^ (v as u64) << 20 ^ rng.next_u64());
            let user = format!("{}{}", seeded_word(&mut cred_rng, 5), cred_rng.next_u64() % 90 + 10);
            let pass = seeded_word(&mut cred_rng, 8);
            let goal = format!("Log in with username {user} and password {pass}");
            let prompt = compile_prompt(template, &goal, &tree_text);
            let response = match v {
                0 => format!("fill('{user_bid}', '{user}')"),
                1 => format!("fill('{pass_bid}', '{pass}')"),
                _ => format!("click('{login_bid}')"),
            };
            docs.push((
                format!("login_{}_{v}.txt", page.label),
                format!("{prompt}\n{response}"),
            ));
        }
    }

    Ok(docs)
}
