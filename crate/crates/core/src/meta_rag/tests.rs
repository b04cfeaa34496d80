use super::*;
use crate::llm::ScriptedClient;
use crate::summary::mechanical_summary;
use crate::tokens::WhitespaceCounter;

const A: &str = "class C1:\n    def f1(self, a):\n        return a + 1\n\n\ndef g(b):\n    return b\n";
const B: &str = "def parse(text):\n    return text.split()\n";
const C: &str = "LIMIT = 3\n";

fn repo() -> Snapshot {
    Snapshot::from_texts([("a.py", A), ("b.py", B), ("c.py", C)])
}

fn store(repo: &Snapshot) -> SummaryStore {
    let mut store = SummaryStore::default();
    for (_, file) in repo.iter() {
        let mut tree = mechanical_summary(&file.tree);
        tree.root.summary = format!("helpers in {}", file.tree.path);
        store.insert(tree);
    }
    store
}

fn p(s: &str) -> CodeUnitPath {
    s.parse().unwrap()
}

fn config(budget: usize) -> RetrievalConfig {
    RetrievalConfig {
        budget,
        ..RetrievalConfig::default()
    }
}

#[test]
fn shortlist_in_one_round() {
    let repo = repo();
    let store = store(&repo);
    let llm = ScriptedClient::new(|_| Some("FILES:\na.py\nb.py\n".into()));
    let counter = WhitespaceCounter;
    let agent = ControlAgent::new(&llm, &counter, config(10_000));
    let mut transcript = RetrievalTranscript::default();
    let files = agent.shortlist_files("bug", &store, &mut transcript).unwrap();
    assert_eq!(files, ["a.py", "b.py"]);
    assert_eq!(transcript.rounds.len(), 1);
}

#[test]
fn hallucinated_file_is_dropped_with_warning() {
    let repo = repo();
    let store = store(&repo);
    let llm = ScriptedClient::new(|_| Some("FILES:\nghost.py\na.py\n".into()));
    let counter = WhitespaceCounter;
    let agent = ControlAgent::new(&llm, &counter, config(10_000));
    let mut transcript = RetrievalTranscript::default();
    let files = agent.shortlist_files("bug", &store, &mut transcript).unwrap();
    assert_eq!(files, ["a.py"]);
    assert!(transcript.warnings().any(|w| w.contains("ghost.py")));
}

#[test]
fn shortlist_splits_over_budget() {
    let repo = repo();
    let store = store(&repo);
    let llm = ScriptedClient::new(|req| {
        let shown: Vec<&str> = req.user.lines().filter(|l| l.contains(" — ")).collect();
        if shown.iter().any(|l| l.starts_with("a.py")) {
            Some("FILES:\na.py\n".into())
        } else {
            Some("FILES:\nc.py\n".into())
        }
    });
    let counter = WhitespaceCounter;
    let head = fill(SHORTLIST_INSTRUCTION, "bug", 10);
    let head_cost = counter.count(&format!("{SYSTEM}\n\n{head}{CORRECTION}"));
    // Room for two one-liners (5 words each) but not three.
    let agent = ControlAgent::new(&llm, &counter, config(head_cost + 12));
    let mut transcript = RetrievalTranscript::default();
    let files = agent.shortlist_files("bug", &store, &mut transcript).unwrap();
    assert_eq!(transcript.rounds.len(), 2);
    assert_eq!(files, ["a.py", "c.py"]);
    for round in &transcript.rounds {
        assert!(round.budget_tokens <= head_cost + 12);
    }
}

#[test]
fn select_normalizes() {
    let repo = repo();
    let store = store(&repo);
    let llm = ScriptedClient::new(|_| {
        Some("READ:\na.py::C1\na.py::C1::f1\nWRITE:\na.py::C1::f1\nNEW:\n".into())
    });
    let counter = WhitespaceCounter;
    let agent = ControlAgent::new(&llm, &counter, config(10_000));
    let mut transcript = RetrievalTranscript::default();
    let lists = agent
        .select_units("bug", &store, &["a.py".to_string()], &mut transcript)
        .unwrap();
    assert_eq!(lists.write, vec![p("a.py::C1::f1")]);
    assert_eq!(lists.read, vec![p("a.py::C1")]);
}

#[test]
fn select_merges_batches() {
    let repo = repo();
    let store = store(&repo);
    let llm = ScriptedClient::new(|req| {
        if req.user.contains("FILE a.py") {
            Some("READ:\nWRITE:\na.py::g\nNEW:\n".into())
        } else {
            Some("READ:\nWRITE:\nb.py::parse\nNEW:\n".into())
        }
    });
    let counter = WhitespaceCounter;
    let head = fill(SELECT_INSTRUCTION, "bug", 10);
    let head_cost = counter.count(&format!("{SYSTEM}\n\n{head}{CORRECTION}"));
    let a_cost = counter.count(&render(&store, RenderLevel::FullFile, Some(&["a.py".to_string()])).unwrap());
    let agent = ControlAgent::new(&llm, &counter, config(head_cost + a_cost + 2));
    let mut transcript = RetrievalTranscript::default();
    let lists = agent
        .select_units("bug", &store, &["a.py".to_string(), "b.py".to_string()], &mut transcript)
        .unwrap();
    assert_eq!(transcript.rounds.len(), 2);
    assert_eq!(lists.write, vec![p("a.py::g"), p("b.py::parse")]);
}

#[test]
fn localize_end_to_end() {
    let repo = repo();
    let store = store(&repo);
    let llm = ScriptedClient::new(|req| {
        if req.user.contains("FILES:") {
            Some("FILES:\na.py\n".into())
        } else {
            Some("READ:\nWRITE:\na.py::C1::f1\nNEW:\n".into())
        }
    });
    let counter = WhitespaceCounter;
    let agent = ControlAgent::new(&llm, &counter, RetrievalConfig::default());
    let (lists, transcript) = agent.localize("t1", "f1 adds one too many", &store).unwrap();
    assert_eq!(lists.write, vec![p("a.py::C1::f1")]);
    assert_eq!(transcript.rounds.len(), 2);
    assert_eq!(transcript.task_id, "t1");
}

#[test]
fn empty_project_goes_to_new_list() {
    let llm = ScriptedClient::new(|_| {
        Some("READ:\nWRITE:\nNEW:\napp.py (new) | file | app | entry point\napp.py | function | main | runs it\n".into())
    });
    let counter = WhitespaceCounter;
    let agent = ControlAgent::new(&llm, &counter, RetrievalConfig::default());
    let (lists, transcript) = agent.localize("t", "build a CLI", &SummaryStore::default()).unwrap();
    assert!(lists.read.is_empty() && lists.write.is_empty());
    assert_eq!(lists.new.len(), 2);
    assert!(lists.new.iter().all(|u| u.new_file));
    assert_eq!(transcript.rounds.len(), 1);
}

#[test]
fn persistent_garbage_is_unparseable() {
    let repo = repo();
    let store = store(&repo);
    let llm = ScriptedClient::new(|_| Some("I think it is the parser.".into()));
    let counter = WhitespaceCounter;
    let agent = ControlAgent::new(&llm, &counter, RetrievalConfig::default());
    let err = agent.localize("t", "bug", &store).unwrap_err();
    assert!(matches!(err, MetaRagError::UnparseableAfterRetries { attempts: 4, .. }));
    assert_eq!(llm.call_count(), 4);
}

#[test]
fn retry_uses_correction() {
    let repo = repo();
    let store = store(&repo);
    let llm = ScriptedClient::new(|req| {
        if req.user.contains("could not be parsed") {
            Some("FILES:\nb.py\n".into())
        } else {
            Some("b.py is the one".into())
        }
    });
    let counter = WhitespaceCounter;
    let agent = ControlAgent::new(&llm, &counter, RetrievalConfig::default());
    let mut transcript = RetrievalTranscript::default();
    assert_eq!(agent.shortlist_files("bug", &store, &mut transcript).unwrap(), ["b.py"]);
    assert_eq!(transcript.rounds.len(), 2);
}

#[test]
fn empty_store_cannot_shortlist() {
    let llm = ScriptedClient::new(|_| None);
    let counter = WhitespaceCounter;
    let agent = ControlAgent::new(&llm, &counter, RetrievalConfig::default());
    let mut transcript = RetrievalTranscript::default();
    assert!(matches!(
        agent.shortlist_files("bug", &SummaryStore::default(), &mut transcript),
        Err(MetaRagError::EmptyStore)
    ));
}

#[test]
fn bundle_contents() {
    let repo = repo();
    let lists = RetrievalLists {
        read: vec![p("b.py::parse")],
        write: vec![p("a.py::C1::f1")],
        new: vec![],
    };
    let bundle = assemble_context(&lists, &repo).unwrap();
    assert_eq!(bundle.matches("===== ").count(), 2);
    let read_at = bundle.find("##### READ").unwrap();
    let write_at = bundle.find("##### WRITE").unwrap();
    assert!(read_at < write_at);
    assert!(bundle.contains("    def f1(self, a):\n        return a + 1\n"));
    assert!(!bundle.contains("def g"));
    assert_eq!(assemble_context(&RetrievalLists::default(), &repo).unwrap(), "");
    let bad = RetrievalLists {
        write: vec![p("a.py::nope")],
        ..RetrievalLists::default()
    };
    assert!(matches!(assemble_context(&bad, &repo), Err(MetaRagError::PathNotFound(_))));
}
