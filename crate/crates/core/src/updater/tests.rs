use super::*;
use crate::diff::unified;
use crate::llm::{LlmRequest, ScriptedClient};
use crate::summarizer::SummarizerConfig;
use crate::summary::mechanical_summary;
use crate::tokens::WhitespaceCounter;

const PRE: &str = "\
class C1:
    def f1(self, a):
        return a + 1


def g(b):
    return b * 2
";

const POST_NEW_F2: &str = "\
class C1:
    def f1(self, a):
        return a + 1

    def f2(self):
        return 0


def g(b):
    return b * 2
";

const POST_EDIT_F1: &str = "\
class C1:
    def f1(self, a):
        return a + 100


def g(b):
    return b * 2
";

fn unit_answer(req: &LlmRequest) -> Option<String> {
    let code = req.user.split("```python\n").nth(1)?.split("\n```").next()?;
    let first = code.lines().find(|l| l.trim_start().starts_with("def ") || l.trim_start().starts_with("class "))?;
    let name = first.trim_start().trim_start_matches("def ").trim_start_matches("class ");
    let name: String = name.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
    let kw = if first.trim_start().starts_with("class") { "CLASS" } else { "FUNCTION" };
    Some(format!("{kw} {name}()\n  Fresh summary of {name}.\n"))
}

fn setup(pre: &str) -> (Snapshot, SummaryStore) {
    let snapshot = Snapshot::from_texts([("a.py", pre)]);
    let mut store = SummaryStore::default();
    store.insert(mechanical_summary(&snapshot.get("a.py").unwrap().tree));
    (snapshot, store)
}

fn changes(pre: &Snapshot, post_text: &str) -> (Snapshot, ChangedUnitSet) {
    let post = Snapshot::from_texts([("a.py", post_text)]);
    let patch = unified(Some("a.py"), Some("a.py"), &pre.get("a.py").unwrap().text, post_text, 3);
    let set = diff_units(pre, &post, &patch).unwrap();
    (post, set)
}

fn path(s: &str) -> CodeUnitPath {
    s.parse().unwrap()
}

#[test]
fn edit_inside_method() {
    let (pre, _) = setup(PRE);
    let (_, set) = changes(&pre, POST_EDIT_F1);
    assert_eq!(set.files.len(), 1);
    assert_eq!(set.files[0].changed, vec![path("a.py::C1::f1")]);
}

#[test]
fn empty_diff() {
    let (pre, _) = setup(PRE);
    let set = diff_units(&pre, &pre, "").unwrap();
    assert!(set.is_empty());
}

#[test]
fn new_file_is_added_without_units() {
    let pre = Snapshot::new();
    let post = Snapshot::from_texts([("new.py", "def h():\n    return 1\n")]);
    let patch = unified(None, Some("new.py"), "", "def h():\n    return 1\n", 3);
    let set = diff_units(&pre, &post, &patch).unwrap();
    assert_eq!(set.files[0].status, FileStatus::Added);
    assert!(set.files[0].changed.is_empty());
}

#[test]
fn mismatched_context_is_rejected() {
    let (pre, _) = setup(PRE);
    let post = Snapshot::from_texts([("a.py", POST_EDIT_F1)]);
    let patch = unified(Some("a.py"), Some("a.py"), "something else\n", POST_EDIT_F1, 3);
    assert!(matches!(
        diff_units(&pre, &post, &patch),
        Err(UpdateError::Diff(DiffError::PatchMismatch { .. }))
    ));
}

#[test]
fn new_method_is_injected_after_f1() {
    let (pre, mut store) = setup(PRE);
    let (post, set) = changes(&pre, POST_NEW_F2);
    assert_eq!(set.files[0].changed, vec![path("a.py::C1::f2")]);
    let llm = ScriptedClient::new(unit_answer);
    let counter = WhitespaceCounter;
    let summarizer = Summarizer::new(&llm, &counter, SummarizerConfig::default());
    let report = apply_update(&mut store, &set, &summarizer).unwrap();
    assert_eq!(llm.call_count(), 1);
    assert_eq!(report.unit_calls, vec![path("a.py::C1::f2")]);
    let tree = store.get("a.py").unwrap();
    let c1 = &tree.root.children[0];
    let names: Vec<_> = c1.children.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["f1", "f2"]);
    assert_eq!(c1.children[1].summary, "Fresh summary of f2.");
    assert_eq!(c1.children[1].header, "FUNCTION f2(self)");
    assert!(align(tree, &post.get("a.py").unwrap().tree).is_empty());
}

#[test]
fn modified_method_keeps_siblings() {
    let (pre, mut store) = setup(PRE);
    let before = store.get("a.py").unwrap().clone();
    let (post, set) = changes(&pre, POST_EDIT_F1);
    let llm = ScriptedClient::new(unit_answer);
    let counter = WhitespaceCounter;
    let summarizer = Summarizer::new(&llm, &counter, SummarizerConfig::default());
    apply_update(&mut store, &set, &summarizer).unwrap();
    let after = store.get("a.py").unwrap();
    assert_ne!(after.root.children[0].children[0].summary, before.root.children[0].children[0].summary);
    assert_eq!(after.root.children[1], before.root.children[1]);
    assert_eq!(after.root.summary, before.root.summary);
    assert_eq!(after.digest, post.get("a.py").unwrap().tree.digest);
}

#[test]
fn deleted_method_needs_no_llm() {
    let (pre, mut store) = setup(POST_NEW_F2);
    let (post, set) = changes(&pre, PRE);
    let llm = ScriptedClient::new(|_| None);
    let counter = WhitespaceCounter;
    let summarizer = Summarizer::new(&llm, &counter, SummarizerConfig::default());
    apply_update(&mut store, &set, &summarizer).unwrap();
    assert_eq!(llm.call_count(), 0);
    assert!(align(store.get("a.py").unwrap(), &post.get("a.py").unwrap().tree).is_empty());
}

#[test]
fn no_changes_is_identity() {
    let (_, mut store) = setup(PRE);
    let before = store.clone();
    let llm = ScriptedClient::new(|_| None);
    let counter = WhitespaceCounter;
    let summarizer = Summarizer::new(&llm, &counter, SummarizerConfig::default());
    apply_update(&mut store, &ChangedUnitSet::default(), &summarizer).unwrap();
    assert_eq!(store, before);
}

#[test]
fn stale_store_is_rejected() {
    let (pre, mut store) = setup(PRE);
    store.get_mut("a.py").unwrap().digest = "0".repeat(64);
    let before = store.clone();
    let (_, set) = changes(&pre, POST_EDIT_F1);
    let llm = ScriptedClient::new(unit_answer);
    let counter = WhitespaceCounter;
    let summarizer = Summarizer::new(&llm, &counter, SummarizerConfig::default());
    assert!(matches!(
        apply_update(&mut store, &set, &summarizer),
        Err(UpdateError::StoreStale { .. })
    ));
    assert_eq!(store, before);
}

#[test]
fn pure_rename_moves_subtree() {
    let (pre, mut store) = setup(PRE);
    let post = Snapshot::from_texts([("b.py", PRE)]);
    let patch = "diff --git a/a.py b/b.py\nsimilarity index 100%\nrename from a.py\nrename to b.py\n";
    let set = diff_units(&pre, &post, patch).unwrap();
    assert_eq!(set.files[0].status, FileStatus::Renamed);
    let llm = ScriptedClient::new(|_| None);
    let counter = WhitespaceCounter;
    let summarizer = Summarizer::new(&llm, &counter, SummarizerConfig::default());
    apply_update(&mut store, &set, &summarizer).unwrap();
    assert!(!store.contains("a.py"));
    let moved = store.get("b.py").unwrap();
    assert_eq!(moved.path, "b.py");
    assert!(align(moved, &post.get("b.py").unwrap().tree).is_empty());
}

#[test]
fn module_level_edit_marks_main() {
    let (pre, _) = setup("X = 1\n\n\ndef g():\n    pass\n");
    let (_, set) = changes(&pre, "X = 2\n\n\ndef g():\n    pass\n");
    assert_eq!(set.files[0].changed, vec![path("a.py::__MAIN__")]);
}

#[test]
fn edit_spanning_two_functions_marks_both() {
    let (pre, _) = setup("def a():\n    return 1\ndef b():\n    return 2\n");
    let (_, set) = changes(&pre, "def a():\n    return 10\ndef b():\n    return 20\n");
    assert_eq!(set.files[0].changed, vec![path("a.py::a"), path("a.py::b")]);
}

#[test]
fn class_body_edit_marks_class() {
    let (pre, _) = setup("class K:\n    x = 1\n\n    def m(self):\n        pass\n");
    let (_, set) = changes(&pre, "class K:\n    x = 2\n\n    def m(self):\n        pass\n");
    assert_eq!(set.files[0].changed, vec![path("a.py::K")]);
}

#[test]
fn table_rows() {
    assert_eq!(round1(reduction_pct(9_259_099, 1_632_048).unwrap()), 82.4);
    assert_eq!(round1(reduction_pct(119_282_807, 46_566_608).unwrap()), 61.0);
    assert_eq!(round1(reduction_pct(500, 500).unwrap()), 0.0);
    assert!(matches!(reduction_pct(0, 3), Err(UpdateError::DivisionByZero)));
    let s = compute_stats(9_259_099, 1_632_048, 4_020_211, 675_685).unwrap();
    assert_eq!(round1(s.saved_by_update_pct.unwrap()), 83.2);
}

#[test]
fn report_has_mean_row() {
    let rows = vec![
        RepoStatsRow { repo: "a".into(), instances: 1, stats: compute_stats(100, 20, 10, 5).unwrap() },
        RepoStatsRow { repo: "b".into(), instances: 2, stats: compute_stats(100, 40, 0, 0).unwrap() },
    ];
    let text = stats_report(&rows);
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("total (mean)\t3\t200\t60\t70.0"), "{last}");
}
