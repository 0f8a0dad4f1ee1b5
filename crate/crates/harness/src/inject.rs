//! Trigger injection into page HTML.

use agentsim::{parse_html, DomNode};
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// How the trigger lands in the page. `VisibleText` appends a text child;
/// `AttributeHidden` appends to the node's `title` attribute, which never
/// renders but still surfaces in the accessibility tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectMode {
    VisibleText,
    AttributeHidden,
}

/// Locator grammar: `#id`, `tag`, or `tag[attr=value]`.
fn locator_pred(locator: &str) -> Box<dyn Fn(&DomNode) -> bool + '_> {
    if let Some(id) = locator.strip_prefix('#') {
        return Box::new(move |n: &DomNode| n.attr("id") == Some(id));
    }
    if let Some(open) = locator.find('[') {
        let tag = &locator[..open];
        let inner = locator[open + 1..].trim_end_matches(']');
        let (attr, value) = inner.split_once('=').unwrap_or((inner, ""));
        let value = value.trim_matches(|c| c == '\'' || c == '"');
        return Box::new(move |n: &DomNode| n.tag == tag && n.attr(attr) == Some(value));
    }
    Box::new(move |n: &DomNode| n.tag == locator)
}

/// Path of child indices from the document root to the unique node the
/// locator selects.
pub fn resolve_locator(dom: &DomNode, locator: &str) -> Result<Vec<usize>, Error> {
    let pred = locator_pred(locator);
    let mut matches: Vec<Vec<usize>> = Vec::new();
    fn walk(
        node: &DomNode,
        pred: &dyn Fn(&DomNode) -> bool,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if !node.is_text() && node.tag != "#document" && pred(node) {
            out.push(path.clone());
        }
        for (i, c) in node.children.iter().enumerate() {
            path.push(i);
            walk(c, pred, path, out);
            path.pop();
        }
    }
    walk(dom, &pred, &mut Vec::new(), &mut matches);
    if matches.len() != 1 {
        return Err(Error::Locator {
            locator: locator.to_string(),
            found: matches.len(),
        });
    }
    Ok(matches.remove(0))
}

fn node_at_mut<'a>(root: &'a mut DomNode, path: &[usize]) -> &'a mut DomNode {
    let mut cur = root;
    for &i in path {
        cur = &mut cur.children[i];
    }
    cur
}

/// Embed `trigger_text` into the page at the locator node and return the
/// canonical re-serialization. An empty trigger leaves the parsed page
/// unchanged, so the output equals the canonicalized input.
pub fn inject_trigger(
    html: &str,
    locator: &str,
    trigger_text: &str,
    mode: InjectMode,
) -> Result<String, Error> {
    let mut dom = parse_html(html)?;
    let path = resolve_locator(&dom, locator)?;
    let node = node_at_mut(&mut dom, &path);
    if !trigger_text.is_empty() {
        match mode {
            InjectMode::VisibleText => {
                node.children.push(DomNode {
                    tag: "#text".into(),
                    attributes: Vec::new(),
                    text: trigger_text.to_string(),
                    children: Vec::new(),
                    span: 0..0,
                });
            }
            InjectMode::AttributeHidden => {
                match node.attributes.iter_mut().find(|(k, _)| k == "title") {
                    Some((_, v)) => {
                        v.push(' ');
                        v.push_str(trigger_text);
                    }
                    None => node
                        .attributes
                        .push(("title".into(), trigger_text.to_string())),
                }
            }
        }
    }
    Ok(dom.to_html())
}

#[cfg(test)]
mod tests {
    use super::*;
    use agentsim::{build_axtree, serialize_axtree};

    const PAGE: &str =
        "<div id='page'><h1>T</h1><a href='/x'>X</a><div id='slot' title='ad'></div></div>";

    #[test]
    fn empty_trigger_reserializes_to_the_canonical_page() {
        let injected = inject_trigger(PAGE, "#slot", "", InjectMode::VisibleText).unwrap();
        let canonical = parse_html(PAGE).unwrap().to_html();
        assert_eq!(injected, canonical);
    }

    #[test]
    fn visible_text_shows_up_at_the_slot_node() {
        let injected = inject_trigger(PAGE, "#slot", "BUY NOW", InjectMode::VisibleText).unwrap();
        let tree = build_axtree(&parse_html(&injected).unwrap());
        let flat = serialize_axtree(&tree);
        assert!(flat.contains("[5] text \"BUY NOW\""), "{flat}");
        // existing bids are untouched because the slot is last in preorder
        assert!(flat.contains("[2] heading \"T\""));
        assert!(flat.contains("[4] generic \"ad\""));
    }

    #[test]
    fn attribute_hidden_is_absent_from_visible_text_but_present_in_the_tree() {
        let injected =
            inject_trigger(PAGE, "#slot", "secret words", InjectMode::AttributeHidden).unwrap();
        // not part of any rendered text run
        let dom = parse_html(&injected).unwrap();
        let mut visible = String::new();
        fn collect(n: &agentsim::DomNode, out: &mut String) {
            if n.is_text() {
                out.push_str(&n.text);
            }
            for c in &n.children {
                collect(c, out);
            }
        }
        collect(&dom, &mut visible);
        assert!(!visible.contains("secret words"));

        let flat = serialize_axtree(&build_axtree(&dom));
        assert!(flat.contains("ad secret words"), "{flat}");
    }

    #[test]
    fn injected_page_reparses_cleanly_even_with_quotes() {
        let injected = inject_trigger(
            PAGE,
            "#slot",
            "say \"hi\" & wave 'now'",
            InjectMode::AttributeHidden,
        )
        .unwrap();
        let dom = parse_html(&injected).unwrap();
        let slot = dom.find(&|n| n.attr("id") == Some("slot")).unwrap();
        assert_eq!(slot.attr("title"), Some("ad say \"hi\" & wave 'now'"));
    }

    #[test]
    fn locator_miss_and_ambiguity_are_errors() {
        assert!(matches!(
            inject_trigger(PAGE, "#nope", "x", InjectMode::VisibleText),
            Err(Error::Locator { found: 0, .. })
        ));
        let two = "<div id='a'><p>1</p><p>2</p></div>";
        assert!(matches!(
            inject_trigger(two, "p", "x", InjectMode::VisibleText),
            Err(Error::Locator { found: 2, .. })
        ));
    }

    #[test]
    fn tag_and_attribute_locators_resolve() {
        let html = "<div><form id='f'><input type='text' name='q'></form></div>";
        let dom = parse_html(html).unwrap();
        assert!(resolve_locator(&dom, "form").is_ok());
        assert!(resolve_locator(&dom, "input[name=q]").is_ok());
        assert!(resolve_locator(&dom, "input[name=zz]").is_err());
    }
}
