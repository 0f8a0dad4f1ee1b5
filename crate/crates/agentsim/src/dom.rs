//! Lenient tag-soup HTML parsing for the supported page subset.
//!
//! Supported elements are `a`, `button`, `input`, `div`, `span`, `p`,
//! `h1`-`h6`, `img`, `form`, `title`; anything else parses as a generic
//! element. Recovery rules, in order:
//!
//! 1. a close tag matching the innermost open element closes it;
//! 2. a close tag matching an outer open element first auto-closes every
//!    element above it;
//! 3. a close tag matching nothing open is ignored;
//! 4. end of input auto-closes all open elements;
//! 5. void elements (`input`, `img`, `br`, `hr`, `meta`, `link`) and
//!    self-closing syntax never stay open;
//! 6. opening a `p` or heading auto-closes an open element of the same
//!    tag (these do not nest in themselves).
//!
//! Only an unterminated tag or attribute quote is beyond recovery; that
//! fails with the byte offset of the offending tag.

use std::ops::Range;

use crate::error::Error;

const VOID_TAGS: [&str; 6] = ["input", "img", "br", "hr", "meta", "link"];
const NON_NESTING: [&str; 7] = ["p", "h1", "h2", "h3", "h4", "h5", "h6"];

/// One DOM node. Elements carry a lowercase `tag`; text runs use the
/// pseudo-tag `#text` and the synthetic root is `#document`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomNode {
    pub tag: String,
    /// Attribute pairs in source order; on duplicate names the first wins.
    pub attributes: Vec<(String, String)>,
    /// Decoded character data (text nodes only).
    pub text: String,
    pub children: Vec<DomNode>,
    /// Byte range of this node in the source.
    pub span: Range<usize>,
}

impl DomNode {
    fn element(tag: String, attributes: Vec<(String, String)>, start: usize) -> Self {
        Self {
            tag,
            attributes,
            text: String::new(),
            children: Vec::new(),
            span: start..start,
        }
    }

    fn text_node(text: String, span: Range<usize>) -> Self {
        Self {
            tag: "#text".into(),
            attributes: Vec::new(),
            text,
            children: Vec::new(),
            span,
        }
    }

    pub fn is_text(&self) -> bool {
        self.tag == "#text"
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    /// Depth-first search for the first element satisfying `pred`.
    pub fn find(&self, pred: &dyn Fn(&DomNode) -> bool) -> Option<&DomNode> {
        if !self.is_text() && self.tag != "#document" && pred(self) {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(pred))
    }

    fn find_all_inner<'a>(&'a self, pred: &dyn Fn(&DomNode) -> bool, out: &mut Vec<&'a DomNode>) {
        if !self.is_text() && self.tag != "#document" && pred(self) {
            out.push(self);
        }
        for c in &self.children {
            c.find_all_inner(pred, out);
        }
    }

    pub fn find_all(&self, pred: &dyn Fn(&DomNode) -> bool) -> Vec<&DomNode> {
        let mut out = Vec::new();
        self.find_all_inner(pred, &mut out);
        out
    }

    /// Canonical re-serialization: lowercase tags, double-quoted
    /// attributes, `& < >` escaped in text.
    pub fn to_html(&self) -> String {
        let mut out = String::new();
        self.write_html(&mut out);
        out
    }

    fn write_html(&self, out: &mut String) {
        if self.tag == "#document" {
            for c in &self.children {
                c.write_html(out);
            }
            return;
        }
        if self.is_text() {
            out.push_str(&escape_text(&self.text));
            return;
        }
        out.push('<');
        out.push_str(&self.tag);
        for (k, v) in &self.attributes {
            out.push(' ');
            out.push_str(k);
            out.push_str("=\"");
            out.push_str(&escape_attr(v));
            out.push('"');
        }
        out.push('>');
        if VOID_TAGS.contains(&self.tag.as_str()) {
            return;
        }
        for c in &self.children {
            c.write_html(out);
        }
        out.push_str("</");
        out.push_str(&self.tag);
        out.push('>');
    }
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn escape_attr(s: &str) -> String {
    escape_text(s).replace('"', "&quot;")
}

fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'&' {
            if let Some(semi) = s[i..].find(';').filter(|&o| o <= 12).map(|o| i + o) {
                let entity = &s[i + 1..semi];
                let decoded = match entity {
                    "amp" => Some('&'),
                    "lt" => Some('<'),
                    "gt" => Some('>'),
                    "quot" => Some('"'),
                    "apos" => Some('\''),
                    "nbsp" => Some(' '),
                    _ => entity
                        .strip_prefix('#')
                        .and_then(|n| n.parse::<u32>().ok())
                        .and_then(char::from_u32),
                };
                if let Some(ch) = decoded {
                    out.push(ch);
                    i = semi + 1;
                    continue;
                }
            }
        }
        let ch = s[i..].chars().next().unwrap();
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, offset: usize, message: &str) -> Error {
        Error::Parse {
            offset,
            message: message.to_string(),
        }
    }

    fn skip_until(&mut self, pat: &str) -> bool {
        match self.src[self.pos..].find(pat) {
            Some(off) => {
                self.pos += off + pat.len();
                true
            }
            None => {
                self.pos = self.src.len();
                false
            }
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn read_name(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric()
                || self.bytes[self.pos] == b'-'
                || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        self.src[start..self.pos].to_ascii_lowercase()
    }

    /// Parse the interior of a tag after `<name`, returning
    /// (attributes, self_closing). `tag_start` anchors error offsets.
    fn read_attributes(
        &mut self,
        tag_start: usize,
    ) -> Result<(Vec<(String, String)>, bool), Error> {
        let mut attrs: Vec<(String, String)> = Vec::new();
        loop {
            self.skip_ws();
            if self.pos >= self.bytes.len() {
                return Err(self.error(tag_start, "unterminated tag"));
            }
            match self.bytes[self.pos] {
                b'>' => {
                    self.pos += 1;
                    return Ok((attrs, false));
                }
                b'/' => {
                    self.pos += 1;
                    self.skip_ws();
                    if self.pos < self.bytes.len() && self.bytes[self.pos] == b'>' {
                        self.pos += 1;
                        return Ok((attrs, true));
                    }
                    return Err(self.error(tag_start, "stray '/' inside tag"));
                }
                _ => {
                    let name = self.read_name();
                    if name.is_empty() {
                        // tolerate stray punctuation inside a tag
                        self.pos += 1;
                        continue;
                    }
                    self.skip_ws();
                    let mut value = String::new();
                    if self.pos < self.bytes.len() && self.bytes[self.pos] == b'=' {
                        self.pos += 1;
                        self.skip_ws();
                        if self.pos >= self.bytes.len() {
                            return Err(self.error(tag_start, "unterminated attribute"));
                        }
                        let quote = self.bytes[self.pos];
                        if quote == b'"' || quote == b'\'' {
                            self.pos += 1;
                            let vstart = self.pos;
                            while self.pos < self.bytes.len() && self.bytes[self.pos] != quote {
                                self.pos += 1;
                            }
                            if self.pos >= self.bytes.len() {
                                return Err(self.error(tag_start, "unterminated attribute quote"));
                            }
                            value = decode_entities(&self.src[vstart..self.pos]);
                            self.pos += 1;
                        } else {
                            let vstart = self.pos;
                            while self.pos < self.bytes.len()
                                && !self.bytes[self.pos].is_ascii_whitespace()
                                && self.bytes[self.pos] != b'>'
                                && self.bytes[self.pos] != b'/'
                            {
                                self.pos += 1;
                            }
                            value = decode_entities(&self.src[vstart..self.pos]);
                        }
                    }
                    if !attrs.iter().any(|(k, _)| *k == name) {
                        attrs.push((name, value));
                    }
                }
            }
        }
    }
}

/// Parse HTML into a DOM rooted at a synthetic `#document` node.
pub fn parse_html(html: &str) -> Result<DomNode, Error> {
    let mut p = Parser {
        src: html,
        bytes: html.as_bytes(),
        pos: 0,
    };
    // stack of open elements; index 0 is the document root
    let mut stack: Vec<DomNode> = vec![DomNode::element("#document".into(), Vec::new(), 0)];

    while p.pos < p.bytes.len() {
        if p.bytes[p.pos] == b'<' {
            let tag_start = p.pos;
            if p.src[p.pos..].starts_with("<!--") {
                p.pos += 4;
                p.skip_until("-->");
                continue;
            }
            if p.src[p.pos..].starts_with("<!") {
                p.pos += 2;
                if !p.skip_until(">") {
                    return Err(p.error(tag_start, "unterminated declaration"));
                }
                continue;
            }
            if p.src[p.pos..].starts_with("</") {
                p.pos += 2;
                let name = p.read_name();
                if !p.skip_until(">") {
                    return Err(p.error(tag_start, "unterminated close tag"));
                }
                // rules 1-3: close innermost match, auto-closing above it
                if let Some(idx) = stack.iter().rposition(|n| n.tag == name) {
                    if idx > 0 {
                        while stack.len() > idx {
                            let mut done = stack.pop().unwrap();
                            done.span.end = p.pos;
                            stack.last_mut().unwrap().children.push(done);
                        }
                    }
                }
                continue;
            }
            if p.pos + 1 < p.bytes.len() && p.bytes[p.pos + 1].is_ascii_alphabetic() {
                p.pos += 1;
                let name = p.read_name();
                let (attrs, self_closing) = p.read_attributes(tag_start)?;
                // rule 6: p/h* auto-close an open element of the same tag
                if NON_NESTING.contains(&name.as_str())
                    && stack.last().map(|n| n.tag == name).unwrap_or(false)
                {
                    let mut done = stack.pop().unwrap();
                    done.span.end = tag_start;
                    stack.last_mut().unwrap().children.push(done);
                }
                let mut node = DomNode::element(name.clone(), attrs, tag_start);
                node.span.end = p.pos;
                if self_closing || VOID_TAGS.contains(&name.as_str()) {
                    stack.last_mut().unwrap().children.push(node);
                } else {
                    stack.push(node);
                }
                continue;
            }
            // stray '<' that opens nothing: literal text
            p.pos += 1;
            push_text(&mut stack, "<", tag_start..p.pos);
            continue;
        }

        let start = p.pos;
        while p.pos < p.bytes.len() && p.bytes[p.pos] != b'<' {
            p.pos += 1;
        }
        let raw = &p.src[start..p.pos];
        push_text(&mut stack, &decode_entities(raw), start..p.pos);
    }

    // rule 4: auto-close at end of input
    while stack.len() > 1 {
        let mut done = stack.pop().unwrap();
        done.span.end = p.pos;
        stack.last_mut().unwrap().children.push(done);
    }
    let mut root = stack.pop().unwrap();
    root.span.end = p.pos;
    Ok(root)
}

fn push_text(stack: &mut [DomNode], text: &str, span: Range<usize>) {
    if text.is_empty() {
        return;
    }
    stack
        .last_mut()
        .unwrap()
        .children
        .push(DomNode::text_node(text.to_string(), span));
}
