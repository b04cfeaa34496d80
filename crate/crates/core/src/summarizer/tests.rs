use std::sync::atomic::{AtomicUsize, Ordering};

use super::*;
use crate::code_index::{parse_file, CodeUnitTree};
use crate::llm::{LlmRequest, ScriptedClient};
use crate::summary::{align, render_tree, SummaryNode};
use crate::tokens::WhitespaceCounter;

const SRC: &str = "\
import os


class C1:
    def __init__(self):
        self.x = 1

    def f1(self, a):
        return self.x + a


def g(b):
    def inner():
        return 2
    return b * inner()


LIMIT = 3
";

fn code_of(user: &str) -> String {
    let start = user.find("```python\n").expect("code fence") + "```python\n".len();
    let end = user[start..].rfind("\n```").expect("closing fence");
    user[start..start + end].to_string()
}

fn describe(node: &SummaryNode, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    out.push_str(&format!("{pad}{}\n{pad}  Summary of {}.\n", node.header, node.name));
    for child in &node.children {
        describe(child, depth + 1, out);
    }
}

/// Answers every prompt with a well-formed template derived from the code
/// it was shown.
fn faithful(req: &LlmRequest) -> Option<String> {
    let code = code_of(&req.user);
    let path = req
        .user
        .split('`')
        .nth(1)
        .unwrap_or("x.py")
        .split("::")
        .next()
        .unwrap()
        .to_string();
    let tree = parse_file(&code, &path).ok()?;
    let mut out = String::from("Here is the summary:\n");
    if req.user.starts_with("Summarise the Python file") {
        let summary = crate::summary::mechanical_summary(&tree);
        describe(&summary.root, 0, &mut out);
    } else {
        let summary = crate::summary::mechanical_summary(&tree);
        let unit = summary
            .root
            .children
            .iter()
            .find(|c| c.kind != CodeUnitKind::Main)
            .or(summary.root.children.first());
        match unit {
            Some(unit) => describe(unit, 0, &mut out),
            None => out.push_str("__MAIN__\n  Module-level statements.\n"),
        }
    }
    Some(out)
}

fn tree() -> CodeUnitTree {
    parse_file(SRC, "pkg/a.py").unwrap()
}

fn summarizer<'a>(llm: &'a ScriptedClient) -> Summarizer<'a> {
    static COUNTER: WhitespaceCounter = WhitespaceCounter;
    Summarizer::new(llm, &COUNTER, SummarizerConfig::default())
}

#[test]
fn faithful_answer_aligns_in_one_call() {
    let llm = ScriptedClient::new(faithful);
    let tree = tree();
    let summary = summarizer(&llm).summarize_file(SRC, &tree).unwrap();
    assert!(align(&summary, &tree).is_empty());
    assert_eq!(llm.call_count(), 1);
    assert_eq!(summary.digest, tree.digest);
    let names: Vec<_> = summary.root.children.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["C1", "g", ""]);
    assert_eq!(summary.root.children[1].children[0].name, "inner");
}

#[test]
fn omitted_unit_is_regenerated() {
    let llm = ScriptedClient::new(|req| {
        let answer = faithful(req)?;
        if req.user.starts_with("Summarise the Python file") {
            // Drop g and its nested function from the file answer.
            let kept: Vec<_> = answer
                .lines()
                .filter(|l| !l.contains("g(b)") && !l.contains("of g.") && !l.contains("inner"))
                .collect();
            Some(kept.join("\n"))
        } else {
            Some(answer)
        }
    });
    let tree = tree();
    let summary = summarizer(&llm).summarize_file(SRC, &tree).unwrap();
    assert!(align(&summary, &tree).is_empty());
    assert_eq!(llm.call_count(), 2);
    let g = &summary.root.children[1];
    assert_eq!(g.header, "FUNCTION g(b)");
    assert_eq!(g.summary, "Summary of g.");
    assert_eq!(g.children.len(), 1);
}

#[test]
fn prose_answer_is_retried_with_correction() {
    let attempts = AtomicUsize::new(0);
    let llm = ScriptedClient::new(move |req| {
        if attempts.fetch_add(1, Ordering::SeqCst) == 0 {
            Some("This file is about numbers.".into())
        } else {
            assert!(req.user.contains("did not follow the template"));
            faithful(req)
        }
    });
    let tree = tree();
    let summary = summarizer(&llm).summarize_file(SRC, &tree).unwrap();
    assert!(align(&summary, &tree).is_empty());
    assert_eq!(llm.call_count(), 2);
}

#[test]
fn persistent_prose_is_unrepairable() {
    let llm = ScriptedClient::new(|_| Some("No template here.".into()));
    let err = summarizer(&llm).summarize_file(SRC, &tree()).unwrap_err();
    assert!(matches!(err, SummarizerError::AlignmentUnrepairable { rounds: 3, .. }));
    assert_eq!(llm.call_count(), 3);
}

#[test]
fn unavailable_backend_propagates() {
    let llm = ScriptedClient::new(|_| None);
    let err = summarizer(&llm).summarize_file(SRC, &tree()).unwrap_err();
    assert!(matches!(err, SummarizerError::LlmUnavailable(_)));
}

#[test]
fn empty_file_needs_no_call() {
    let llm = ScriptedClient::new(|_| None);
    let tree = parse_file("", "e.py").unwrap();
    let summary = summarizer(&llm).summarize_file("", &tree).unwrap();
    assert_eq!(summary.root.summary, "empty module");
    assert!(summary.root.children.is_empty());
    assert_eq!(llm.call_count(), 0);
}

#[test]
fn unit_with_nested_function() {
    let llm = ScriptedClient::new(faithful);
    let tree = tree();
    let path: crate::code_index::CodeUnitPath = "pkg/a.py::g".parse().unwrap();
    let code = tree.extract_code(&path, SRC).unwrap();
    let node = summarizer(&llm).summarize_unit(&code, &path).unwrap();
    assert_eq!(node.name, "g");
    assert_eq!(node.header, "FUNCTION g(b)");
    assert_eq!(node.children.len(), 1);
    assert_eq!(node.children[0].name, "inner");
}

#[test]
fn method_unit_keeps_indentation_agnostic_header() {
    let llm = ScriptedClient::new(faithful);
    let tree = tree();
    let path: crate::code_index::CodeUnitPath = "pkg/a.py::C1::f1".parse().unwrap();
    let code = tree.extract_code(&path, SRC).unwrap();
    let node = summarizer(&llm).summarize_unit(&code, &path).unwrap();
    assert_eq!(node.header, "FUNCTION f1(self, a)");
    assert!(!node.summary.is_empty());
}

#[test]
fn pass_only_unit_gets_text() {
    let llm = ScriptedClient::new(|_| Some("FUNCTION h()\n".into()));
    let path: crate::code_index::CodeUnitPath = "b.py::h".parse().unwrap();
    let node = summarizer(&llm).summarize_unit("def h():\n    pass\n", &path).unwrap();
    assert!(!node.summary.trim().is_empty());
}

#[test]
fn oversized_file_is_chunked() {
    let llm = ScriptedClient::new(|req| {
        if req.user.contains("too large to show in full") {
            Some("FILE a.py (pkg/a.py)\n  A chunked file.\n".into())
        } else {
            faithful(req)
        }
    });
    let counter = WhitespaceCounter;
    let tree = tree();
    let prompts = PromptSet::default();
    let whole = prompts
        .file
        .fill(&[("file_path", "pkg/a.py"), ("code", SRC), ("template_example", TEMPLATE_EXAMPLE)])
        .unwrap();
    let budget = counter.count(&format!("{}\n\n{whole}", prompts.file.system)) - 1;
    let config = SummarizerConfig {
        prompt_budget: budget,
        ..SummarizerConfig::default()
    };
    let summarizer = Summarizer::new(&llm, &counter, config);
    let summary = summarizer.summarize_file(SRC, &tree).unwrap();
    assert!(align(&summary, &tree).is_empty());
    assert_eq!(summary.root.summary, "A chunked file.");
    for req in llm.calls() {
        assert!(counter.count(&req.prompt_text()) <= budget, "{}", req.prompt_text());
    }
}

#[test]
fn render_parse_round_trip() {
    let llm = ScriptedClient::new(faithful);
    let tree = tree();
    let summary = summarizer(&llm).summarize_file(SRC, &tree).unwrap();
    let mut reparsed = parse_llm_summary(&render_tree(&summary)).unwrap();
    reparsed.digest = summary.digest.clone();
    reparsed.meta = summary.meta.clone();
    assert_eq!(reparsed, summary);
}

#[test]
fn replay_is_byte_stable() {
    let llm = ScriptedClient::new(faithful);
    let tree = tree();
    let a = summarizer(&llm).summarize_file(SRC, &tree).unwrap();
    let b = summarizer(&llm).summarize_file(SRC, &tree).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
