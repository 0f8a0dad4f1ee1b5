//! Scenario files: everything a run needs, as JSON.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use gcg::GcgConfig;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::inject::InjectMode;

fn default_max_steps() -> usize {
    3
}

/// One fixture page plus its injection point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteRef {
    pub label: String,
    pub html_path: PathBuf,
    pub locator: String,
    pub inject_mode: InjectMode,
}

/// A login fixture page with its credential bindings and the
/// attacker-observable field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoginPage {
    pub label: String,
    pub html_path: PathBuf,
    pub locator: String,
    pub inject_mode: InjectMode,
    pub sink_bid: String,
    pub username: String,
    pub password: String,
}

/// Targeted website, targeted instruction: one page, one goal, one
/// literal target action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwtiScenario {
    pub id: String,
    pub checkpoint: PathBuf,
    pub site: SiteRef,
    pub goal: String,
    pub target: String,
    pub gcg: GcgConfig,
    #[serde(default = "default_max_steps")]
    pub episode_max_steps: usize,
}

/// Targeted website, universal instruction: one page, disjoint train and
/// test goal files, one literal target action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwuiScenario {
    pub id: String,
    pub checkpoint: PathBuf,
    pub site: SiteRef,
    pub train_goals: PathBuf,
    pub test_goals: PathBuf,
    /// Optional goal -> appropriate-action labels (tab-separated) used by
    /// failure analysis.
    #[serde(default)]
    pub expected_actions: Option<PathBuf>,
    pub target: String,
    pub gcg: GcgConfig,
}

/// Universal website, targeted instruction: disjoint train/test login
/// pages, a credential goal template, and a per-page target template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UwtiScenario {
    pub id: String,
    pub checkpoint: PathBuf,
    pub train_pages: Vec<LoginPage>,
    pub test_pages: Vec<LoginPage>,
    /// e.g. "Log in with username {username} and password {password}"
    pub goal_template: String,
    /// e.g. "fill('{sink_bid}', '{username} {password}')"
    pub target: String,
    pub gcg: GcgConfig,
    #[serde(default = "default_max_steps")]
    pub episode_max_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Twti(TwtiScenario),
    Twui(TwuiScenario),
    Uwti(UwtiScenario),
}

impl Scenario {
    pub fn id(&self) -> &str {
        match self {
            Scenario::Twti(s) => &s.id,
            Scenario::Twui(s) => &s.id,
            Scenario::Uwti(s) => &s.id,
        }
    }

    pub fn checkpoint(&self) -> &Path {
        match self {
            Scenario::Twti(s) => &s.checkpoint,
            Scenario::Twui(s) => &s.checkpoint,
            Scenario::Uwti(s) => &s.checkpoint,
        }
    }

    pub fn gcg(&self) -> &GcgConfig {
        match self {
            Scenario::Twti(s) => &s.gcg,
            Scenario::Twui(s) => &s.gcg,
            Scenario::Uwti(s) => &s.gcg,
        }
    }

    /// Load a scenario file, resolving its relative paths against the
    /// file's directory and validating train/test disjointness.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        let mut scenario: Scenario =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display(), e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        scenario.resolve_paths(base);
        scenario.validate()?;
        Ok(scenario)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        match self {
            Scenario::Twti(s) => {
                fix(&mut s.checkpoint);
                fix(&mut s.site.html_path);
            }
            Scenario::Twui(s) => {
                fix(&mut s.checkpoint);
                fix(&mut s.site.html_path);
                fix(&mut s.train_goals);
                fix(&mut s.test_goals);
                if let Some(p) = s.expected_actions.as_mut() {
                    fix(p);
                }
            }
            Scenario::Uwti(s) => {
                fix(&mut s.checkpoint);
                for p in s.train_pages.iter_mut().chain(s.test_pages.iter_mut()) {
                    fix(&mut p.html_path);
                }
            }
        }
    }

    /// Hard disjointness checks before any run.
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            Scenario::Twti(_) => Ok(()),
            Scenario::Twui(s) => {
                let train = read_goals(&s.train_goals)?;
                let test = read_goals(&s.test_goals)?;
                let train_set: BTreeSet<&String> = train.iter().collect();
                if let Some(dup) = test.iter().find(|g| train_set.contains(g)) {
                    return Err(Error::Disjointness(dup.to_string()));
                }
                Ok(())
            }
            Scenario::Uwti(s) => {
                let train: BTreeSet<&String> = s.train_pages.iter().map(|p| &p.label).collect();
                if let Some(dup) = s.test_pages.iter().find(|p| train.contains(&p.label)) {
                    return Err(Error::Disjointness(dup.label.clone()));
                }
                Ok(())
            }
        }
    }
}

/// Newline-delimited goal file; blank lines are skipped.
pub fn read_goals(path: &Path) -> Result<Vec<String>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Tab-separated `goal\taction` label file.
pub fn read_labels(
    path: &Path,
) -> Result<std::collections::BTreeMap<String, String>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let mut out = std::collections::BTreeMap::new();
    for line in text.lines() {
        if let Some((goal, action)) = line.split_once('\t') {
            out.insert(goal.trim().to_string(), action.trim().to_string());
        }
    }
    Ok(out)
}
