//! The control agent: summary-driven, multi-round localisation producing
//! Read/Write/New lists.

mod lists;

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::code_index::{CodeUnitPath, IndexError};
use crate::llm::{LlmClient, LlmError, LlmRequest};
use crate::repo::Snapshot;
use crate::summary::{render, RenderLevel, SummaryStore};
use crate::tokens::TokenCounter;

pub use lists::{
    normalize, parse_file_list, parse_lists, parse_reference, ListsError, NewKind, NewUnit,
    RetrievalLists,
};

#[derive(Debug, thiserror::Error)]
pub enum MetaRagError {
    #[error("LLM unavailable: {0}")]
    LlmUnavailable(#[from] LlmError),
    #[error("the summary store is empty")]
    EmptyStore,
    #[error("{stage}: LLM output unparseable after {attempts} attempts ({last})")]
    UnparseableAfterRetries {
        stage: String,
        attempts: usize,
        last: ListsError,
    },
    #[error("{stage}: instructions alone exceed the {budget}-token budget")]
    BudgetTooSmall { stage: String, budget: usize },
    #[error("no code unit at {0}")]
    PathNotFound(CodeUnitPath),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Largest prompt, in counter tokens, sent in one request.
    pub budget: usize,
    pub shortlist_cap: usize,
    /// Shortlist-and-select passes tried before giving up on an empty
    /// Write-list.
    pub max_rounds: usize,
    pub max_parse_retries: usize,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            budget: 100_000,
            shortlist_cap: 10,
            max_rounds: 4,
            max_parse_retries: 3,
            model: "gpt-4o".into(),
            temperature: 0.0,
            max_output_tokens: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub stage: String,
    pub system: String,
    pub prompt: String,
    pub response: String,
    pub parsed: Option<serde_json::Value>,
    /// Size of system + prompt under the configured counter.
    pub budget_tokens: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTranscript {
    pub task_id: String,
    pub rounds: Vec<Round>,
}

impl RetrievalTranscript {
    pub fn total_tokens(&self) -> u64 {
        self.rounds
            .iter()
            .map(|r| r.prompt_tokens + r.completion_tokens)
            .sum()
    }

    pub fn total_latency_ms(&self) -> u64 {
        self.rounds.iter().map(|r| r.latency_ms).sum()
    }

    pub fn warnings(&self) -> impl Iterator<Item = &String> {
        self.rounds.iter().flat_map(|r| r.warnings.iter())
    }
}

const SYSTEM: &str = "You are an expert software engineer who locates the code that must change to fix a reported bug.";

const CORRECTION: &str = "\n\nYour previous reply could not be parsed. Answer again using exactly the section format described above.";

const SHORTLIST_INSTRUCTION: &str = "\
Below is a bug report followed by one-line summaries of files in the code base.
List the files most likely to be relevant to fixing the bug, most relevant first,
at most {cap}. Reply with a `FILES:` line followed by one file path per line.

Bug report:
{report}

File summaries:
";

const SELECT_INSTRUCTION: &str = "\
Below is a bug report followed by summaries of candidate files. Each file lists its
classes, functions and module-level code (__MAIN__) in order, with a summary of each.
Select the code units relevant to fixing the bug and reply with three sections:

READ:
(units that provide needed context, one per line)
WRITE:
(units that must be changed, one per line)
NEW:
(units to create, one per line as `file | kind | name | rationale`; kind is file, class or function; mark files that do not exist yet as `path (new)`)

Refer to units by path, e.g. `pkg/mod.py::ClassName::method` or `pkg/mod.py::__MAIN__`.
Declare every section, even when it is empty.

Bug report:
{report}

Summaries:
";

const NEW_PROJECT_INSTRUCTION: &str = "\
The project below has no code yet. Plan the code needed to address the request.
Reply with three sections, READ:, WRITE: and NEW:. READ and WRITE must be empty;
list every unit to create under NEW, one per line as `file | kind | name | rationale`,
with kind file, class or function and new files marked as `path (new)`.

Request:
{report}
";

pub struct ControlAgent<'a> {
    llm: &'a dyn LlmClient,
    counter: &'a dyn TokenCounter,
    config: RetrievalConfig,
}

fn fill(template: &str, report: &str, cap: usize) -> String {
    template
        .replacen("{cap}", &cap.to_string(), 1)
        .replacen("{report}", report, 1)
}

impl<'a> ControlAgent<'a> {
    pub fn new(llm: &'a dyn LlmClient, counter: &'a dyn TokenCounter, config: RetrievalConfig) -> Self {
        ControlAgent { llm, counter, config }
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.config
    }

    /// Counter size of a request, including room for the corrective suffix.
    fn cost(&self, user: &str) -> usize {
        self.counter.count(&format!("{SYSTEM}\n\n{user}{CORRECTION}"))
    }

    fn fits(&self, user: &str) -> bool {
        self.cost(user) <= self.config.budget
    }

    /// Ask until `parse` accepts the reply, re-prompting with a correction.
    fn ask<T: Serialize>(
        &self,
        stage: &str,
        user: &str,
        transcript: &mut RetrievalTranscript,
        parse: impl Fn(&str) -> Result<T, ListsError>,
    ) -> Result<T, MetaRagError> {
        let attempts = self.config.max_parse_retries + 1;
        let mut last = None;
        for attempt in 0..attempts {
            let prompt = if attempt == 0 {
                user.to_string()
            } else {
                format!("{user}{CORRECTION}")
            };
            let request = LlmRequest {
                system: SYSTEM.to_string(),
                user: prompt.clone(),
                model: self.config.model.clone(),
                temperature: self.config.temperature,
                max_output_tokens: self.config.max_output_tokens,
            };
            let budget_tokens = self.counter.count(&request.prompt_text());
            debug_assert!(budget_tokens <= self.config.budget);
            let response = self.llm.complete(&request)?;
            let parsed = parse(&response.text);
            transcript.rounds.push(Round {
                stage: stage.to_string(),
                system: request.system,
                prompt,
                response: response.text,
                parsed: parsed
                    .as_ref()
                    .ok()
                    .and_then(|v| serde_json::to_value(v).ok()),
                budget_tokens,
                prompt_tokens: response.prompt_tokens,
                completion_tokens: response.completion_tokens,
                latency_ms: response.latency_ms,
                warnings: Vec::new(),
            });
            match parsed {
                Ok(value) => return Ok(value),
                Err(err) => last = Some(err),
            }
        }
        Err(MetaRagError::UnparseableAfterRetries {
            stage: stage.to_string(),
            attempts,
            last: last.expect("at least one attempt"),
        })
    }

    fn warn(transcript: &mut RetrievalTranscript, warnings: Vec<String>) {
        for w in &warnings {
            log::warn!("{w}");
        }
        if let Some(round) = transcript.rounds.last_mut() {
            round.warnings.extend(warnings);
        }
    }

    /// Group `blocks` into contiguous batches whose prompts
    /// (`head` + blocks) fit the budget. Blocks that cannot fit even alone
    /// are returned separately.
    fn batches(&self, head: &str, blocks: &[String]) -> (Vec<Vec<usize>>, Vec<usize>) {
        let base = self.cost(head);
        let mut out = Vec::new();
        let mut skipped = Vec::new();
        let mut current: Vec<usize> = Vec::new();
        let mut estimate = base;
        let body = |ids: &[usize]| -> String {
            let mut text = head.to_string();
            ids.iter().for_each(|&i| text.push_str(&blocks[i]));
            text
        };
        let close = |current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, skipped: &mut Vec<usize>| {
            // The additive estimate can be off by a token or so per block.
            let mut carry = Vec::new();
            while !current.is_empty() && !self.fits(&body(current)) {
                carry.insert(0, current.pop().expect("non-empty"));
            }
            if !current.is_empty() {
                out.push(std::mem::take(current));
            }
            carry
                .into_iter()
                .for_each(|i| if self.fits(&body(&[i])) { out.push(vec![i]) } else { skipped.push(i) });
        };
        for (i, block) in blocks.iter().enumerate() {
            let cost = self.counter.count(block) + 1;
            if !current.is_empty() && estimate + cost > self.config.budget {
                close(&mut current, &mut out, &mut skipped);
                estimate = base;
            }
            current.push(i);
            estimate += cost;
        }
        close(&mut current, &mut out, &mut skipped);
        (out, skipped)
    }

    /// Files relevant to `report`, from the file one-liner view.
    pub fn shortlist_files(
        &self,
        report: &str,
        store: &SummaryStore,
        transcript: &mut RetrievalTranscript,
    ) -> Result<Vec<String>, MetaRagError> {
        self.shortlist_excluding(report, store, &HashSet::new(), transcript)
    }

    fn shortlist_excluding(
        &self,
        report: &str,
        store: &SummaryStore,
        exclude: &HashSet<String>,
        transcript: &mut RetrievalTranscript,
    ) -> Result<Vec<String>, MetaRagError> {
        if store.is_empty() {
            return Err(MetaRagError::EmptyStore);
        }
        let files: Vec<String> = store.paths().filter(|p| !exclude.contains(*p)).cloned().collect();
        let blocks: Vec<String> = files
            .iter()
            .map(|f| render(store, RenderLevel::FileOneLiner, Some(std::slice::from_ref(f))).expect("file is in the store"))
            .collect();
        let head = fill(SHORTLIST_INSTRUCTION, report, self.config.shortlist_cap);
        if !self.fits(&head) {
            return Err(MetaRagError::BudgetTooSmall {
                stage: "shortlist".into(),
                budget: self.config.budget,
            });
        }
        let (batches, skipped) = self.batches(&head, &blocks);
        let mut ranked: Vec<Vec<String>> = Vec::new();
        for batch in &batches {
            let mut user = head.clone();
            batch.iter().for_each(|&i| user.push_str(&blocks[i]));
            let named = self.ask("shortlist", &user, transcript, parse_file_list)?;
            let mut warnings = Vec::new();
            let kept = named
                .into_iter()
                .filter(|f| {
                    let ok = store.contains(f);
                    if !ok {
                        warnings.push(format!("dropped unknown file {f} from shortlist"));
                    }
                    ok
                })
                .collect();
            Self::warn(transcript, warnings);
            ranked.push(kept);
        }
        if !skipped.is_empty() {
            let names: Vec<_> = skipped.iter().map(|&i| files[i].as_str()).collect();
            Self::warn(transcript, vec![format!("files too large to show: {}", names.join(", "))]);
        }
        // Interleave by stated rank so every batch's best picks come first.
        let mut out = Vec::new();
        let depth = ranked.iter().map(Vec::len).max().unwrap_or(0);
        for rank in 0..depth {
            for list in &ranked {
                if let Some(f) = list.get(rank) {
                    if !out.contains(f) {
                        out.push(f.clone());
                    }
                }
            }
        }
        out.truncate(self.config.shortlist_cap);
        Ok(out)
    }

    /// Blocks of full-file summaries; files over budget are split into
    /// pieces that each repeat the file header line.
    fn full_blocks(&self, head: &str, store: &SummaryStore, files: &[String]) -> Vec<String> {
        let mut blocks = Vec::new();
        for file in files {
            let Ok(mut text) = render(store, RenderLevel::FullFile, Some(std::slice::from_ref(file))) else {
                continue;
            };
            text.push('\n');
            if self.fits(&format!("{head}{text}")) {
                blocks.push(text);
                continue;
            }
            let mut lines = text.lines();
            let header = format!("{}\n", lines.next().unwrap_or_default());
            let mut piece = header.clone();
            for line in lines {
                let candidate = format!("{piece}{line}\n");
                if self.fits(&format!("{head}{candidate}")) {
                    piece = candidate;
                } else {
                    if piece != header {
                        blocks.push(std::mem::replace(&mut piece, header.clone()));
                    }
                    let alone = format!("{header}{line}\n");
                    if self.fits(&format!("{head}{alone}")) {
                        piece = alone;
                    }
                }
            }
            if piece != header {
                blocks.push(piece);
            }
        }
        blocks
    }

    /// Select Read/Write/New units from the full summaries of `files`.
    pub fn select_units(
        &self,
        report: &str,
        store: &SummaryStore,
        files: &[String],
        transcript: &mut RetrievalTranscript,
    ) -> Result<RetrievalLists, MetaRagError> {
        let head = fill(SELECT_INSTRUCTION, report, self.config.shortlist_cap);
        if !self.fits(&head) {
            return Err(MetaRagError::BudgetTooSmall {
                stage: "select".into(),
                budget: self.config.budget,
            });
        }
        let blocks = self.full_blocks(&head, store, files);
        let (batches, _) = self.batches(&head, &blocks);
        let mut merged = RetrievalLists::default();
        for batch in &batches {
            let mut user = head.clone();
            batch.iter().for_each(|&i| user.push_str(&blocks[i]));
            merged.merge(self.ask("select", &user, transcript, parse_lists)?);
        }
        let resolves = |p: &CodeUnitPath| store.get(&p.file).is_some_and(|t| t.node(p).is_some());
        let (clean, warnings) = normalize(merged, resolves, |f| store.contains(f));
        Self::warn(transcript, warnings);
        Ok(clean)
    }

    /// Full localisation for one task.
    pub fn localize(
        &self,
        task_id: &str,
        report: &str,
        store: &SummaryStore,
    ) -> Result<(RetrievalLists, RetrievalTranscript), MetaRagError> {
        let mut transcript = RetrievalTranscript {
            task_id: task_id.to_string(),
            rounds: Vec::new(),
        };
        if store.is_empty() {
            let user = fill(NEW_PROJECT_INSTRUCTION, report, 0);
            if !self.fits(&user) {
                return Err(MetaRagError::BudgetTooSmall {
                    stage: "new-project".into(),
                    budget: self.config.budget,
                });
            }
            let lists = self.ask("new-project", &user, &mut transcript, parse_lists)?;
            let (clean, warnings) = normalize(lists, |_| false, |_| false);
            Self::warn(&mut transcript, warnings);
            return Ok((clean, transcript));
        }

        let mut seen = HashSet::new();
        let mut result = RetrievalLists::default();
        for _ in 0..self.config.max_rounds.max(1) {
            if seen.len() == store.len() {
                break;
            }
            let shortlist = self.shortlist_excluding(report, store, &seen, &mut transcript)?;
            if shortlist.is_empty() {
                break;
            }
            let lists = self.select_units(report, store, &shortlist, &mut transcript)?;
            seen.extend(shortlist);
            result.merge(lists);
            if !result.write.is_empty() || !result.new.is_empty() {
                break;
            }
        }
        let resolves = |p: &CodeUnitPath| store.get(&p.file).is_some_and(|t| t.node(p).is_some());
        let (clean, _) = normalize(result, resolves, |f| store.contains(f));
        Ok((clean, transcript))
    }
}

/// Source of every Read and Write unit, grouped under per-file banners,
/// Read section first. Empty lists give an empty bundle.
pub fn assemble_context(lists: &RetrievalLists, repo: &Snapshot) -> Result<String, MetaRagError> {
    let mut out = String::new();
    for (title, paths) in [("READ", &lists.read), ("WRITE", &lists.write)] {
        if paths.is_empty() {
            continue;
        }
        let _ = writeln!(out, "##### {title} #####");
        let mut current_file: Option<&str> = None;
        let mut ordered: Vec<&CodeUnitPath> = paths.iter().collect();
        ordered.sort_by(|a, b| a.file.cmp(&b.file));
        for path in ordered {
            let file = repo
                .get(&path.file)
                .ok_or_else(|| MetaRagError::PathNotFound(path.clone()))?;
            if file.tree.resolve(path).is_none() {
                return Err(MetaRagError::PathNotFound(path.clone()));
            }
            if current_file != Some(path.file.as_str()) {
                let _ = writeln!(out, "===== {} =====", path.file);
                current_file = Some(&path.file);
            }
            let code = file.tree.extract_code(path, &file.text)?;
            let _ = writeln!(out, "# {path}");
            out.push_str(&code);
            if !code.ends_with('\n') {
                out.push('\n');
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
