//! Deterministic re-implementation of the web-navigation agent loop:
//! HTML is parsed into a DOM, reduced to an accessibility tree with
//! stable element ids, serialized into a prompt, answered by the language
//! model, filtered through the action grammar, and applied to a simulated
//! browser.
//!
//! Everything here is pure or single-owner: parsing and serialization are
//! functions of their input bytes, and a `BrowserState` is mutated
//! sequentially by exactly one episode.

mod actions;
mod axtree;
mod browser;
mod dom;
mod episode;
mod error;
mod prompt;

pub use actions::{parse_action, Action, ACTION_SPACE};
pub use axtree::{build_axtree, serialize_axtree, AXNode, AXTree, Role};
pub use browser::{apply_action, BrowserState};
pub use dom::{parse_html, DomNode};
pub use episode::{agent_step, run_episode, run_episode_from_state, StepRecord, Trace};
pub use error::Error;
pub use prompt::{compile_prompt, split_at_injection, PromptTemplate};

pub type Result<T> = std::result::Result<T, Error>;
