//! Golden-file checks for the serialization surfaces that prompts are
//! built from. The files under fixtures/golden were recorded once with
//! the ignored regeneration test below and reviewed by hand.

use std::fs;
use std::path::{Path, PathBuf};

use agentsim::{build_axtree, compile_prompt, parse_html, serialize_axtree, split_at_injection, PromptTemplate};
use harness::{inject_trigger, InjectMode, INJECTION_MARKER};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn login_tree() -> String {
    let html = read(&fixtures().join("sites/login/train01_forumhub.html"));
    serialize_axtree(&build_axtree(&parse_html(&html).unwrap()))
}

fn binary_tree() -> String {
    let html = read(&fixtures().join("sites/binary.html"));
    serialize_axtree(&build_axtree(&parse_html(&html).unwrap()))
}

fn chess_prompt() -> String {
    let html = read(&fixtures().join("sites/chess.html"));
    let tree = serialize_axtree(&build_axtree(&parse_html(&html).unwrap()));
    let template = PromptTemplate::load(&fixtures().join("prompt/template_v1.txt")).unwrap();
    compile_prompt(&template, "play the queen's gambit", &tree)
}

/// Split offsets of the marker-injected city page, recorded as
/// `pre_bytes\npost_bytes`.
fn city_split_record() -> String {
    let html = read(&fixtures().join("sites/city.html"));
    let injected =
        inject_trigger(&html, "#banner", INJECTION_MARKER, InjectMode::VisibleText).unwrap();
    let tree = serialize_axtree(&build_axtree(&parse_html(&injected).unwrap()));
    let template = PromptTemplate::load(&fixtures().join("prompt/template_v1.txt")).unwrap();
    let prompt = compile_prompt(&template, "book a brewery tour", &tree);
    let (pre, post) = split_at_injection(&prompt, INJECTION_MARKER).unwrap();
    format!("{}\n{}\n", pre.len(), post.len())
}

#[test]
fn login_axtree_matches_golden() {
    assert_eq!(login_tree(), read(&fixtures().join("golden/login_train01_axtree.txt")));
}

#[test]
fn binary_axtree_matches_golden_and_pins_the_blog_bid() {
    let tree = binary_tree();
    assert_eq!(tree, read(&fixtures().join("golden/binary_axtree.txt")));
    assert!(
        tree.contains("[8] link \"Penjee coding blog\""),
        "blog link bid moved:\n{tree}"
    );
}

#[test]
fn chess_prompt_matches_golden() {
    assert_eq!(chess_prompt(), read(&fixtures().join("golden/chess_prompt.txt")));
}

#[test]
fn city_split_offsets_match_golden() {
    assert_eq!(city_split_record(), read(&fixtures().join("golden/city_split.txt")));
}

#[test]
fn shipped_template_equals_the_builtin() {
    let from_file = PromptTemplate::load(&fixtures().join("prompt/template_v1.txt")).unwrap();
    assert_eq!(from_file.raw(), PromptTemplate::v1().raw());
}

/// `cargo test -p harness --test golden -- --ignored regenerate` rewrites
/// the golden files; inspect the diff before committing.
#[test]
#[ignore]
fn regenerate_golden_files() {
    let dir = fixtures().join("golden");
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("login_train01_axtree.txt"), login_tree()).unwrap();
    fs::write(dir.join("binary_axtree.txt"), binary_tree()).unwrap();
    fs::write(dir.join("chess_prompt.txt"), chess_prompt()).unwrap();
    fs::write(dir.join("city_split.txt"), city_split_record()).unwrap();
}
