use serde::{Deserialize, Serialize};

use super::{tokenize, Bm25Error, Bm25Index, Bm25Params};
use crate::code_index::{CodeUnitKind, CodeUnitPath};
use crate::llm::{LlmClient, LlmRequest, LlmResponse};
use crate::meta_rag::{normalize, parse_lists, parse_reference, RetrievalLists};
use crate::repo::Snapshot;
use crate::tokens::TokenCounter;

const SYSTEM: &str = "You are an expert software engineer who locates the code that must change to fix a reported bug.";

const INSTRUCTION: &str = "\
Below is a bug report followed by the source of the files most related to it.
Identify the file and the function that must be changed to fix the bug and reply
with three sections:

READ:
WRITE:
(the function to change, as `path/to/file.py::Class::function` or
`path/to/file.py::function`; use `path/to/file.py::__MAIN__` for module-level code)
NEW:

Declare every section, even when it is empty.

Bug report:
";

/// One document per file, holding the whole file.
pub fn build_file_index(repo: &Snapshot) -> Bm25Index {
    Bm25Index::build(
        repo.iter()
            .map(|(path, file)| (path.clone(), file.text.clone()))
            .collect(),
    )
}

/// One document per function (full span, nested functions included) and
/// one `__MAIN__` document per file that has module-level code.
pub fn build_function_index(repo: &Snapshot) -> Bm25Index {
    let mut docs = Vec::new();
    for (_, file) in repo.iter() {
        for (path, unit) in file.tree.units() {
            if matches!(unit.kind, CodeUnitKind::Function | CodeUnitKind::Main) {
                let text = file
                    .tree
                    .extract_code(&path, &file.text)
                    .expect("units of a tree resolve against its own text");
                docs.push((path.to_string(), text));
            }
        }
    }
    Bm25Index::build(docs)
}

/// First-fit packing in rank order: each file is taken if it still fits,
/// otherwise skipped.
pub fn pack(ranked: &[(String, usize)], budget: usize) -> Result<Vec<String>, Bm25Error> {
    if ranked.is_empty() {
        return Err(Bm25Error::EmptyIndex);
    }
    let mut used = 0;
    let mut packed = Vec::new();
    for (name, cost) in ranked {
        if used + cost <= budget {
            used += cost;
            packed.push(name.clone());
        }
    }
    if packed.is_empty() {
        return Err(Bm25Error::NoFilesFit {
            budget,
            smallest: ranked.iter().map(|r| r.1).min().unwrap_or_default(),
        });
    }
    Ok(packed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileModeOutcome {
    pub packed: Vec<String>,
    /// Tokens of the packed file blocks.
    pub context_tokens: usize,
    pub lists: RetrievalLists,
    pub prompt: String,
    pub response: LlmResponse,
    pub warnings: Vec<String>,
}

fn file_block(path: &str, text: &str) -> String {
    let mut block = format!("===== {path} =====\n{text}");
    if !block.ends_with('\n') {
        block.push('\n');
    }
    block
}

/// File-granularity baseline: rank files, pack the best into the budget and
/// ask the LLM for the location to change.
#[allow(clippy::too_many_arguments)]
pub fn file_mode_localize(
    report: &str,
    repo: &Snapshot,
    budget: usize,
    params: &Bm25Params,
    llm: &dyn LlmClient,
    counter: &dyn TokenCounter,
    model: &str,
) -> Result<FileModeOutcome, Bm25Error> {
    let query = tokenize(report);
    if query.is_empty() {
        return Err(Bm25Error::EmptyQuery);
    }
    let index = build_file_index(repo);
    let ranking = index.rank(&query, params, index.len().max(1))?;
    let blocks: Vec<(String, String)> = ranking
        .iter()
        .map(|(path, _)| {
            let file = repo.get(path).expect("index built from repo");
            (path.clone(), file_block(path, &file.text))
        })
        .collect();
    let costs: Vec<(String, usize)> = blocks
        .iter()
        .map(|(path, block)| (path.clone(), counter.count(block)))
        .collect();
    let packed = pack(&costs, budget)?;
    let context_tokens = costs
        .iter()
        .filter(|(p, _)| packed.contains(p))
        .map(|c| c.1)
        .sum();

    let mut prompt = format!("{INSTRUCTION}{report}\n\nFiles:\n");
    for (path, block) in &blocks {
        if packed.contains(path) {
            prompt.push_str(block);
        }
    }
    let request = LlmRequest {
        system: SYSTEM.to_string(),
        user: prompt.clone(),
        model: model.to_string(),
        temperature: 0.0,
        max_output_tokens: 1024,
    };
    let response = llm.complete(&request)?;
    let raw = parse_lists(&response.text).unwrap_or_else(|_| RetrievalLists {
        write: response.text.lines().filter_map(parse_reference).take(1).collect(),
        ..RetrievalLists::default()
    });
    let resolves = |p: &CodeUnitPath| repo.get(&p.file).is_some_and(|f| f.tree.resolve(p).is_some());
    let (lists, warnings) = normalize(raw, resolves, |f| repo.get(f).is_some());
    Ok(FileModeOutcome {
        packed,
        context_tokens,
        lists,
        prompt,
        response,
        warnings,
    })
}

/// Function-granularity baseline: the best-scoring function or `__MAIN__`
/// document. No LLM involved.
pub fn function_mode_localize(report: &str, index: &Bm25Index, params: &Bm25Params) -> Result<CodeUnitPath, Bm25Error> {
    let query = tokenize(report);
    if query.is_empty() {
        return Err(Bm25Error::EmptyQuery);
    }
    let (top, _) = index
        .rank(&query, params, 1)?
        .into_iter()
        .next()
        .ok_or(Bm25Error::EmptyIndex)?;
    top.parse().map_err(|_| Bm25Error::UnknownDoc(top))
}
