//! Simulated browser: a page store, the current page's derived
//! accessibility tree, field values, an attacker-observable sink, and an
//! append-only event log. Validation happens before any mutation, so a
//! failed action leaves the state byte-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::actions::Action;
use crate::axtree::{build_axtree, AXTree, Role};
use crate::dom::parse_html;
use crate::error::Error;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowserState {
    pub pages: BTreeMap<String, String>,
    pub current_url: String,
    pub field_values: BTreeMap<String, String>,
    pub tab_open: bool,
    pub message_log: Vec<String>,
    pub event_log: Vec<Action>,
    /// Attacker-marked element ids and everything written into them.
    pub sink: BTreeMap<String, Vec<String>>,
}

impl BrowserState {
    pub fn new(
        pages: BTreeMap<String, String>,
        start_url: &str,
        sink_bids: &[String],
    ) -> Result<Self, Error> {
        if !pages.contains_key(start_url) {
            return Err(Error::UnknownUrl(start_url.to_string()));
        }
        Ok(Self {
            pages,
            current_url: start_url.to_string(),
            field_values: BTreeMap::new(),
            tab_open: true,
            message_log: Vec::new(),
            event_log: Vec::new(),
            sink: sink_bids.iter().map(|b| (b.clone(), Vec::new())).collect(),
        })
    }

    pub fn single_page(url: &str, html: &str, sink_bids: &[String]) -> Self {
        let mut pages = BTreeMap::new();
        pages.insert(url.to_string(), html.to_string());
        Self::new(pages, url, sink_bids).expect("start url just inserted")
    }

    pub fn current_html(&self) -> &str {
        &self.pages[&self.current_url]
    }

    pub fn current_axtree(&self) -> Result<AXTree, Error> {
        Ok(build_axtree(&parse_html(self.current_html())?))
    }
}

/// Apply one parsed action. Unknown bids, fills on non-fillable elements,
/// navigation to unknown urls, and anything but `noop` on a closed tab
/// are errors that leave the state unchanged.
pub fn apply_action(state: &mut BrowserState, action: &Action) -> Result<(), Error> {
    if !state.tab_open && *action != Action::Noop {
        return Err(Error::TabClosed);
    }
    match action {
        Action::Noop | Action::Scroll { .. } => {}
        Action::TabClose => {
            state.tab_open = false;
        }
        Action::ReportInfeasible { msg } | Action::SendMsgToUser { msg } => {
            state.message_log.push(msg.clone());
        }
        Action::Goto { url } => {
            if !state.pages.contains_key(url) {
                return Err(Error::UnknownUrl(url.clone()));
            }
            state.current_url = url.clone();
        }
        Action::Click { bid } => {
            let tree = state.current_axtree()?;
            let node = tree.find_bid(bid).ok_or_else(|| Error::UnknownBid(bid.clone()))?;
            // links navigate when the target page exists; everything else
            // (buttons, missing pages) just records the click
            if let Some(href) = node.href.clone() {
                if state.pages.contains_key(&href) {
                    state.current_url = href;
                }
            }
        }
        Action::Fill { bid, text } => {
            let tree = state.current_axtree()?;
            let node = tree.find_bid(bid).ok_or_else(|| Error::UnknownBid(bid.clone()))?;
            if node.role != Role::Textbox {
                return Err(Error::NotFillable(bid.clone()));
            }
            state.field_values.insert(bid.clone(), text.clone());
            if let Some(writes) = state.sink.get_mut(bid) {
                writes.push(text.clone());
            }
        }
    }
    state.event_log.push(action.clone());
    Ok(())
}
