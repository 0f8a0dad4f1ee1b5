//! Accessibility-tree extraction and the serialization that lands in
//! agent prompts.
//!
//! Rules (pinned; real-browser generality is out of scope):
//! - elements with `aria-hidden="true"` are excluded together with their
//!   subtrees;
//! - links, buttons, and headings absorb their descendant text into their
//!   name and emit no children;
//! - attribute-embedded text is part of the name: `aria-label` overrides
//!   the absorbed text, a `title` attribute is appended — titles are the
//!   injection surface for hidden triggers;
//! - text runs become `text` nodes (whitespace collapsed, empties
//!   dropped); `<title>` becomes a `text` node as well;
//! - generic containers with no name and no surviving children are
//!   pruned;
//! - element ids (bids) are decimal strings assigned by depth-first
//!   pre-order numbering starting at 1, after pruning.

use serde::{Deserialize, Serialize};

use crate::dom::DomNode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Link,
    Button,
    Textbox,
    Text,
    Image,
    Heading,
    Modal,
    Generic,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Link => "link",
            Role::Button => "button",
            Role::Textbox => "textbox",
            Role::Text => "text",
            Role::Image => "image",
            Role::Heading => "heading",
            Role::Modal => "modal",
            Role::Generic => "generic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AXNode {
    pub bid: String,
    pub role: Role,
    pub name: String,
    pub href: Option<String>,
    pub field_id: Option<String>,
    pub children: Vec<AXNode>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AXTree {
    pub roots: Vec<AXNode>,
}

impl AXTree {
    /// First node (pre-order) with the given bid.
    pub fn find_bid(&self, bid: &str) -> Option<&AXNode> {
        fn rec<'a>(n: &'a AXNode, bid: &str) -> Option<&'a AXNode> {
            if n.bid == bid {
                return Some(n);
            }
            n.children.iter().find_map(|c| rec(c, bid))
        }
        self.roots.iter().find_map(|r| rec(r, bid))
    }

    pub fn iter_preorder(&self) -> Vec<&AXNode> {
        fn rec<'a>(n: &'a AXNode, out: &mut Vec<&'a AXNode>) {
            out.push(n);
            for c in &n.children {
                rec(c, out);
            }
        }
        let mut out = Vec::new();
        for r in &self.roots {
            rec(r, &mut out);
        }
        out
    }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn join_name(parts: &[&str]) -> String {
    let joined = parts
        .iter()
        .map(|p| normalize_ws(p))
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    joined
}

fn descendant_text(node: &DomNode) -> String {
    let mut buf = String::new();
    fn rec(n: &DomNode, buf: &mut String) {
        if n.attr("aria-hidden") == Some("true") {
            return;
        }
        if n.is_text() {
            buf.push_str(&n.text);
            buf.push(' ');
        }
        for c in &n.children {
            rec(c, buf);
        }
    }
    rec(node, &mut buf);
    normalize_ws(&buf)
}

fn classify(node: &DomNode) -> Role {
    if node.attr("role") == Some("dialog") || node.attr("aria-modal") == Some("true") {
        return Role::Modal;
    }
    match node.tag.as_str() {
        "a" => Role::Link,
        "button" => Role::Button,
        "input" => match node.attr("type").unwrap_or("text") {
            "submit" | "button" => Role::Button,
            _ => Role::Textbox,
        },
        "img" => Role::Image,
        "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => Role::Heading,
        _ => Role::Generic,
    }
}

fn build_node(node: &DomNode) -> Option<AXNode> {
    if node.is_text() {
        let name = normalize_ws(&node.text);
        if name.is_empty() {
            return None;
        }
        return Some(AXNode {
            bid: String::new(),
            role: Role::Text,
            name,
            href: None,
            field_id: None,
            children: Vec::new(),
        });
    }
    if node.attr("aria-hidden") == Some("true") {
        return None;
    }
    if node.tag == "title" {
        let name = descendant_text(node);
        if name.is_empty() {
            return None;
        }
        return Some(AXNode {
            bid: String::new(),
            role: Role::Text,
            name,
            href: None,
            field_id: None,
            children: Vec::new(),
        });
    }

    let role = classify(node);
    let title = node.attr("title").unwrap_or("");
    let aria_label = node.attr("aria-label").unwrap_or("");
    let (name, children) = match role {
        Role::Link | Role::Button | Role::Heading => {
            let base = if role == Role::Button && node.tag == "input" {
                node.attr("value").unwrap_or("").to_string()
            } else {
                descendant_text(node)
            };
            let base = if aria_label.is_empty() { base } else { aria_label.to_string() };
            (join_name(&[&base, title]), Vec::new())
        }
        Role::Textbox => {
            let base = if aria_label.is_empty() {
                node.attr("placeholder").unwrap_or("")
            } else {
                aria_label
            };
            (join_name(&[base, title]), Vec::new())
        }
        Role::Image => {
            let base = if aria_label.is_empty() {
                node.attr("alt").unwrap_or("")
            } else {
                aria_label
            };
            (join_name(&[base, title]), Vec::new())
        }
        Role::Modal | Role::Generic => {
            let kids: Vec<AXNode> = node.children.iter().filter_map(build_node).collect();
            (join_name(&[aria_label, title]), kids)
        }
        Role::Text => unreachable!("text handled above"),
    };

    if role == Role::Generic && name.is_empty() && children.is_empty() {
        return None;
    }
    Some(AXNode {
        bid: String::new(),
        role,
        name,
        href: (role == Role::Link).then(|| node.attr("href").unwrap_or("").to_string()),
        field_id: (role == Role::Textbox)
            .then(|| node.attr("id").or_else(|| node.attr("name")).map(str::to_string))
            .flatten(),
        children,
    })
}

fn number_preorder(node: &mut AXNode, next: &mut usize) {
    node.bid = next.to_string();
    *next += 1;
    for c in &mut node.children {
        number_preorder(c, next);
    }
}

/// Reduce a DOM to its accessibility tree with deterministic bids.
pub fn build_axtree(dom: &DomNode) -> AXTree {
    let roots_src: Vec<&DomNode> = if dom.tag == "#document" {
        dom.children.iter().collect()
    } else {
        vec![dom]
    };
    let mut roots: Vec<AXNode> = roots_src.into_iter().filter_map(build_node).collect();
    let mut next = 1usize;
    for r in &mut roots {
        number_preorder(r, &mut next);
    }
    AXTree { roots }
}

/// One line per node: `[bid] role "name"`, two-space indentation per
/// depth, href suffix for links. Bit-exact stable for identical input.
pub fn serialize_axtree(tree: &AXTree) -> String {
    fn rec(n: &AXNode, depth: usize, out: &mut String) {
        for _ in 0..depth {
            out.push_str("  ");
        }
        out.push('[');
        out.push_str(&n.bid);
        out.push_str("] ");
        out.push_str(n.role.as_str());
        out.push_str(" \"");
        out.push_str(&n.name);
        out.push('"');
        if let Some(href) = &n.href {
            out.push_str(" href=\"");
            out.push_str(href);
            out.push('"');
        }
        out.push('\n');
        for c in &n.children {
            rec(c, depth + 1, out);
        }
    }
    let mut out = String::new();
    for r in &tree.roots {
        rec(r, 0, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::parse_html;

    #[test]
    fn single_link_gets_bid_one() {
        let dom = parse_html("<a href='/blog'>Penjee Blog</a>").unwrap();
        let tree = build_axtree(&dom);
        assert_eq!(tree.roots.len(), 1);
        let n = &tree.roots[0];
        assert_eq!(n.bid, "1");
        assert_eq!(n.role, Role::Link);
        assert_eq!(n.name, "Penjee Blog");
        assert_eq!(n.href.as_deref(), Some("/blog"));
        assert_eq!(
            serialize_axtree(&tree),
            "[1] link \"Penjee Blog\" href=\"/blog\"\n"
        );
    }

    #[test]
    fn identical_html_yields_identical_bids() {
        let html = "<div><h1>T</h1><a href='/a'>A</a><button>B</button></div>";
        let t1 = serialize_axtree(&build_axtree(&parse_html(html).unwrap()));
        let t2 = serialize_axtree(&build_axtree(&parse_html(html).unwrap()));
        assert_eq!(t1, t2);
    }

    #[test]
    fn aria_hidden_subtrees_vanish() {
        let html = "<div><p aria-hidden='true'>secret <a href='/x'>gone</a></p><p>visible</p></div>";
        let tree = build_axtree(&parse_html(html).unwrap());
        let flat = serialize_axtree(&tree);
        assert!(!flat.contains("secret"));
        assert!(!flat.contains("gone"));
        assert!(flat.contains("visible"));
    }

    #[test]
    fn title_attribute_lands_in_the_name() {
        let html = "<div title='sponsored content'><p>Ad</p></div>";
        let tree = build_axtree(&parse_html(html).unwrap());
        let div = &tree.roots[0];
        assert_eq!(div.role, Role::Generic);
        assert_eq!(div.name, "sponsored content");
        // the paragraph stays a container; its text run is the child
        assert_eq!(div.children[0].role, Role::Generic);
        assert_eq!(div.children[0].children[0].name, "Ad");
    }

    #[test]
    fn single_button_serialization() {
        let tree = build_axtree(&parse_html("<button>Go</button>").unwrap());
        assert_eq!(serialize_axtree(&tree), "[1] button \"Go\"\n");
    }

    #[test]
    fn nested_nodes_indent_two_spaces_per_depth() {
        let html = "<div><div><a href='/d'>deep</a></div></div>";
        let tree = build_axtree(&parse_html(html).unwrap());
        assert_eq!(
            serialize_axtree(&tree),
            "[1] generic \"\"\n  [2] generic \"\"\n    [3] link \"deep\" href=\"/d\"\n"
        );
    }

    #[test]
    fn bids_number_preorder_and_skip_pruned_nodes() {
        let html = "<div><span></span><h1>Head</h1><div><input type='text' placeholder='User' id='u'><button>Send</button></div></div>";
        let tree = build_axtree(&parse_html(html).unwrap());
        let flat = serialize_axtree(&tree);
        assert_eq!(
            flat,
            "[1] generic \"\"\n  [2] heading \"Head\"\n  [3] generic \"\"\n    [4] textbox \"User\"\n    [5] button \"Send\"\n"
        );
        let tb = tree.find_bid("4").unwrap();
        assert_eq!(tb.field_id.as_deref(), Some("u"));
    }

    #[test]
    fn links_absorb_descendant_text() {
        let html = "<a href='/x'>Follow <span>us</span> now</a>";
        let tree = build_axtree(&parse_html(html).unwrap());
        assert_eq!(tree.roots[0].name, "Follow us now");
        assert!(tree.roots[0].children.is_empty());
    }
}
