//! The action grammar: canonical serialization and the lenient
//! first-match parser that stands in for the agent framework's syntactic
//! filter.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Description of the action space, substituted into prompt templates.
pub const ACTION_SPACE: &str = "click('bid'), fill('bid', 'text'), scroll(dx, dy), goto('url'), tab_close(), report_infeasible('message'), send_msg_to_user('message'), noop()";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Click { bid: String },
    Fill { bid: String, text: String },
    Scroll { dx: i64, dy: i64 },
    Goto { url: String },
    TabClose,
    ReportInfeasible { msg: String },
    SendMsgToUser { msg: String },
    Noop,
}

/// Canonical form uses single quotes; a string argument containing a
/// single quote is emitted with double quotes instead. Arguments holding
/// both quote characters cannot round-trip through this grammar (the
/// framework's parser has the same limit).
fn quote(s: &str) -> String {
    if s.contains('\'') {
        format!("\"{s}\"")
    } else {
        format!("'{s}'")
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Click { bid } => write!(f, "click({})", quote(bid)),
            Action::Fill { bid, text } => write!(f, "fill({}, {})", quote(bid), quote(text)),
            Action::Scroll { dx, dy } => write!(f, "scroll({dx}, {dy})"),
            Action::Goto { url } => write!(f, "goto({})", quote(url)),
            Action::TabClose => write!(f, "tab_close()"),
            Action::ReportInfeasible { msg } => write!(f, "report_infeasible({})", quote(msg)),
            Action::SendMsgToUser { msg } => write!(f, "send_msg_to_user({})", quote(msg)),
            Action::Noop => write!(f, "noop()"),
        }
    }
}

const NAMES: [&str; 8] = [
    "click",
    "fill",
    "scroll",
    "goto",
    "tab_close",
    "report_infeasible",
    "send_msg_to_user",
    "noop",
];

#[derive(Debug, PartialEq)]
enum Arg {
    Str(String),
    Int(i64),
}

struct Scanner<'a> {
    bytes: &'a [u8],
    src: &'a str,
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.pos < self.bytes.len() && self.bytes[self.pos] == b {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn arg(&mut self) -> Option<Arg> {
        let b = *self.bytes.get(self.pos)?;
        if b == b'\'' || b == b'"' {
            self.pos += 1;
            let start = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos] != b {
                self.pos += 1;
            }
            if self.pos >= self.bytes.len() {
                return None;
            }
            let s = self.src[start..self.pos].to_string();
            self.pos += 1;
            return Some(Arg::Str(s));
        }
        let start = self.pos;
        if b == b'+' || b == b'-' {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits_start {
            self.pos = start;
            return None;
        }
        self.src[start..self.pos].parse::<i64>().ok().map(Arg::Int)
    }

    /// `'(' [arg {',' arg}] ')'`, whitespace tolerant.
    fn arg_list(&mut self) -> Option<Vec<Arg>> {
        self.skip_ws();
        if !self.eat(b'(') {
            return None;
        }
        self.skip_ws();
        let mut args = Vec::new();
        if self.eat(b')') {
            return Some(args);
        }
        loop {
            args.push(self.arg()?);
            self.skip_ws();
            if self.eat(b')') {
                return Some(args);
            }
            if !self.eat(b',') {
                return None;
            }
            self.skip_ws();
        }
    }
}

fn assemble(name: &str, args: Vec<Arg>) -> Option<Action> {
    use Arg::*;
    let action = match (name, args.as_slice()) {
        ("click", [Str(bid)]) => Action::Click { bid: bid.clone() },
        ("fill", [Str(bid), Str(text)]) => Action::Fill {
            bid: bid.clone(),
            text: text.clone(),
        },
        ("scroll", [Int(dx), Int(dy)]) => Action::Scroll { dx: *dx, dy: *dy },
        ("goto", [Str(url)]) => Action::Goto { url: url.clone() },
        ("tab_close", []) => Action::TabClose,
        ("report_infeasible", [Str(msg)]) => Action::ReportInfeasible { msg: msg.clone() },
        ("send_msg_to_user", [Str(msg)]) => Action::SendMsgToUser { msg: msg.clone() },
        ("noop", []) => Action::Noop,
        _ => return None,
    };
    Some(action)
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Scan a raw model response for the first substring matching the action
/// grammar; `None` is the syntactic-filter rejection. Both quote styles
/// are accepted; the returned action is canonical.
pub fn parse_action(response: &str) -> Option<Action> {
    let bytes = response.as_bytes();
    for i in 0..bytes.len() {
        if i > 0 && is_ident_byte(bytes[i - 1]) {
            continue;
        }
        for name in NAMES {
            if !bytes[i..].starts_with(name.as_bytes()) {
                continue;
            }
            let after = i + name.len();
            if after < bytes.len() && is_ident_byte(bytes[after]) {
                continue; // longer identifier, e.g. "click_here"
            }
            let mut sc = Scanner {
                bytes,
                src: response,
                pos: after,
            };
            if let Some(args) = sc.arg_list() {
                if let Some(action) = assemble(name, args) {
                    return Some(action);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn click_with_single_quotes() {
        assert_eq!(
            parse_action("click('551')"),
            Some(Action::Click { bid: "551".into() })
        );
    }

    #[test]
    fn double_quotes_are_accepted() {
        assert_eq!(
            parse_action(r#"report_infeasible("No cheating in chess!")"#),
            Some(Action::ReportInfeasible {
                msg: "No cheating in chess!".into()
            })
        );
        assert_eq!(
            parse_action(r#"click("142")"#),
            Some(Action::Click { bid: "142".into() })
        );
    }

    #[test]
    fn first_match_after_prose_wins() {
        assert_eq!(
            parse_action("To achieve the goal of winning, tab_close()"),
            Some(Action::TabClose)
        );
        assert_eq!(
            parse_action("I will noop() and then click('3')"),
            Some(Action::Noop)
        );
    }

    #[test]
    fn prose_without_actions_is_rejected() {
        assert_eq!(parse_action("hello world"), None);
        assert_eq!(parse_action(""), None);
        assert_eq!(parse_action("clicking is fun"), None);
    }

    #[test]
    fn arity_and_type_mismatches_do_not_match() {
        assert_eq!(parse_action("click()"), None);
        assert_eq!(parse_action("click(142)"), None); // bid must be quoted
        assert_eq!(parse_action("scroll('a', 'b')"), None);
        assert_eq!(parse_action("fill('1')"), None);
        // but a later well-formed call still parses
        assert_eq!(
            parse_action("click() ... click('9')"),
            Some(Action::Click { bid: "9".into() })
        );
    }

    #[test]
    fn longer_identifiers_do_not_shadow_action_names() {
        assert_eq!(parse_action("double_click('3')"), None);
        assert_eq!(parse_action("clicker('3')"), None);
    }

    #[test]
    fn whitespace_tolerance() {
        assert_eq!(
            parse_action("fill ( '7' ,  'user name' )"),
            Some(Action::Fill {
                bid: "7".into(),
                text: "user name".into()
            })
        );
        assert_eq!(
            parse_action("scroll( 0, -120 )"),
            Some(Action::Scroll { dx: 0, dy: -120 })
        );
    }

    #[test]
    fn canonical_serialization_uses_single_quotes() {
        assert_eq!(Action::Click { bid: "142".into() }.to_string(), "click('142')");
        assert_eq!(
            Action::Fill {
                bid: "9".into(),
                text: "hunter2".into()
            }
            .to_string(),
            "fill('9', 'hunter2')"
        );
        assert_eq!(Action::Scroll { dx: 0, dy: -100 }.to_string(), "scroll(0, -100)");
        // single quote inside the payload flips to double quotes
        assert_eq!(
            Action::ReportInfeasible { msg: "can't".into() }.to_string(),
            "report_infeasible(\"can't\")"
        );
    }
}
