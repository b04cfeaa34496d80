//! Gold locations, localisation verdicts and cost accounting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::code_index::{CodeUnitKind, CodeUnitPath};
use crate::diff::{parse_patch, DiffError, FileStatus, HunkLine};
use crate::meta_rag::{RetrievalLists, RetrievalTranscript};
use crate::repo::{is_python, Snapshot};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("{0} is not in the pre-change snapshot")]
    MissingPreImage(String),
    #[error("no results to aggregate")]
    EmptyDataset,
    #[error("no price table configured")]
    MissingPriceTable,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLocations {
    pub files: BTreeSet<String>,
    /// Function, `__MAIN__` (or, for class-body edits, class) paths.
    pub functions: BTreeSet<CodeUnitPath>,
    pub new_files: BTreeSet<String>,
}

/// Locations edited by a reference patch. Removed lines map through the
/// pre-change trees, added lines through the post-change trees; blank lines
/// are ignored.
pub fn parse_gold_patch(patch: &str, pre: &Snapshot) -> Result<GoldLocations, EvalError> {
    let mut gold = GoldLocations::default();
    for fp in parse_patch(patch)? {
        if fp.hunks.is_empty() {
            continue;
        }
        let path = fp.path().to_string();
        gold.files.insert(path.clone());
        if fp.status == FileStatus::Added {
            gold.new_files.insert(path);
            continue;
        }
        let old_path = fp.old_path.clone().unwrap_or_else(|| path.clone());
        if !is_python(&old_path) {
            continue;
        }
        let pre_file = pre
            .get(&old_path)
            .ok_or_else(|| EvalError::MissingPreImage(old_path.clone()))?;
        let post_text = crate::diff::apply(&pre_file.text, &fp)?;
        let post_tree = crate::code_index::CodeUnitTree::index(&post_text, &path);
        for hunk in &fp.hunks {
            for (old, new, line) in hunk.numbered() {
                let unit = match line {
                    HunkLine::Removed(text) if !text.trim().is_empty() => old
                        .and_then(|l| pre_file.tree.enclosing_unit(l).ok())
                        .filter(|p| pre_file.tree.resolve(p).is_some())
                        .map(|p| p.with_file(path.clone())),
                    HunkLine::Added(text) if !text.trim().is_empty() && fp.status != FileStatus::Deleted => new
                        .and_then(|l| post_tree.enclosing_unit(l).ok())
                        .filter(|p| post_tree.resolve(p).is_some()),
                    _ => None,
                };
                if let Some(unit) = unit {
                    gold.functions.insert(unit);
                }
            }
        }
    }
    Ok(gold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    #[default]
    File,
    Function,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Gold ⊆ predicted.
    #[default]
    Covering,
    /// Gold = predicted.
    Exact,
}

fn matches<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>, mode: MatchMode) -> bool {
    match mode {
        MatchMode::Covering => gold.is_subset(predicted),
        MatchMode::Exact => gold == predicted,
    }
}

/// Verdict of the Write-list against the gold locations. File-level entries
/// earn no function credit and class entries are not expanded. Tasks whose
/// gold has no function entries take the file-level verdict at function
/// level.
pub fn judge(prediction: &RetrievalLists, gold: &GoldLocations, level: Level, mode: MatchMode) -> bool {
    let files: BTreeSet<String> = prediction.write.iter().map(|p| p.file.clone()).collect();
    let file_verdict = matches(&files, &gold.files, mode);
    match level {
        Level::File => file_verdict,
        Level::Function if gold.functions.is_empty() => file_verdict,
        Level::Function => {
            let units: BTreeSet<CodeUnitPath> = prediction
                .write
                .iter()
                .filter(|p| !p.is_file())
                .cloned()
                .collect();
            matches(&units, &gold.functions, mode)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalisationResult {
    pub task_id: String,
    pub mode: MatchMode,
    pub file: bool,
    pub function: bool,
    /// Gold has no function entries (only new files, or edits outside
    /// any unit).
    pub no_gold_functions: bool,
    /// Write entries naming whole classes, listed for audit.
    pub class_entries: Vec<CodeUnitPath>,
}

impl LocalisationResult {
    pub fn verdict(&self, level: Level) -> bool {
        match level {
            Level::File => self.file,
            Level::Function => self.function,
        }
    }
}

pub fn evaluate(
    task_id: &str,
    prediction: &RetrievalLists,
    gold: &GoldLocations,
    pre: &Snapshot,
    mode: MatchMode,
) -> LocalisationResult {
    let class_entries = prediction
        .write
        .iter()
        .filter(|p| {
            pre.get(&p.file)
                .and_then(|f| f.tree.resolve(p))
                .is_some_and(|u| u.kind == CodeUnitKind::Class)
        })
        .cloned()
        .collect();
    LocalisationResult {
        task_id: task_id.to_string(),
        mode,
        file: judge(prediction, gold, Level::File, mode),
        function: judge(prediction, gold, Level::Function, mode),
        no_gold_functions: gold.functions.is_empty(),
        class_entries,
    }
}

/// `100 · correct / total`.
pub fn localisation_rate(results: &[LocalisationResult], level: Level) -> Result<f64, EvalError> {
    rate(results.iter().map(|r| r.verdict(level)))
}

pub fn rate(verdicts: impl IntoIterator<Item = bool>) -> Result<f64, EvalError> {
    let (mut correct, mut total) = (0usize, 0usize);
    for v in verdicts {
        total += 1;
        correct += usize::from(v);
    }
    if total == 0 {
        return Err(EvalError::EmptyDataset);
    }
    Ok(100.0 * correct as f64 / total as f64)
}

/// Per-task verdict table followed by the rate at `level`.
pub fn results_report(results: &[LocalisationResult], level: Level) -> Result<String, EvalError> {
    let rate = localisation_rate(results, level)?;
    let mut sorted: Vec<&LocalisationResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let mut out = String::from("task_id\tfile\tfunction\tno_gold_functions\n");
    for r in sorted {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.task_id,
            u8::from(r.file),
            u8::from(r.function),
            u8::from(r.no_gold_functions)
        );
    }
    let level_name = match level {
        Level::File => "file",
        Level::Function => "function",
    };
    let mode_name = match results[0].mode {
        MatchMode::Covering => "covering",
        MatchMode::Exact => "exact",
    };
    let correct = results.iter().filter(|r| r.verdict(level)).count();
    let _ = writeln!(
        out,
        "% correct localisation ({level_name}, {mode_name}): {rate:.2} ({correct}/{})",
        results.len()
    );
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    /// USD per 1K prompt tokens.
    pub prompt_per_1k: f64,
    /// USD per 1K completion tokens.
    pub completion_per_1k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub task_id: String,
    pub repo: String,
    pub wall_time_s: f64,
    pub total_tokens: u64,
    pub cost_usd: f64,
}

pub fn cost_record(repo: &str, transcript: &RetrievalTranscript, prices: &PriceTable) -> CostRecord {
    let cost = transcript
        .rounds
        .iter()
        .map(|r| {
            r.prompt_tokens as f64 * prices.prompt_per_1k / 1000.0
                + r.completion_tokens as f64 * prices.completion_per_1k / 1000.0
        })
        .sum();
    CostRecord {
        task_id: transcript.task_id.clone(),
        repo: repo.to_string(),
        wall_time_s: transcript.total_latency_ms() as f64 / 1000.0,
        total_tokens: transcript.total_tokens(),
        cost_usd: cost,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub repo: String,
    pub tasks: usize,
    pub time_s: f64,
    pub tokens: f64,
    pub cost_usd: f64,
}

/// Per-repository means, plus the mean of those means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub rows: Vec<CostRow>,
    pub mean: CostRow,
}

pub fn cost_report(
    transcripts: &[(String, RetrievalTranscript)],
    prices: Option<&PriceTable>,
) -> Result<CostTable, EvalError> {
    let prices = prices.ok_or(EvalError::MissingPriceTable)?;
    if transcripts.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut by_repo: BTreeMap<&str, Vec<CostRecord>> = BTreeMap::new();
    for (repo, transcript) in transcripts {
        by_repo
            .entry(repo)
            .or_default()
            .push(cost_record(repo, transcript, prices));
    }
    let rows: Vec<CostRow> = by_repo
        .into_iter()
        .map(|(repo, records)| {
            let n = records.len() as f64;
            CostRow {
                repo: repo.to_string(),
                tasks: records.len(),
                time_s: records.iter().map(|r| r.wall_time_s).sum::<f64>() / n,
                tokens: records.iter().map(|r| r.total_tokens as f64).sum::<f64>() / n,
                cost_usd: records.iter().map(|r| r.cost_usd).sum::<f64>() / n,
            }
        })
        .collect();
    let n = rows.len() as f64;
    let mean = CostRow {
        repo: "Mean".into(),
        tasks: rows.iter().map(|r| r.tasks).sum(),
        time_s: rows.iter().map(|r| r.time_s).sum::<f64>() / n,
        tokens: rows.iter().map(|r| r.tokens).sum::<f64>() / n,
        cost_usd: rows.iter().map(|r| r.cost_usd).sum::<f64>() / n,
    };
    Ok(CostTable { rows, mean })
}

fn thousands(value: f64) -> String {
    let text = format!("{value:.2}");
    let (int, frac) = text.split_once('.').expect("two decimals");
    let mut grouped = String::new();
    for (i, c) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(c);
    }
    format!("{grouped}.{frac}")
}

impl fmt::Display for CostTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "repo\ttime_taken_s\ttokens_used\tcost_usd")?;
        for row in self.rows.iter().chain(std::iter::once(&self.mean)) {
            writeln!(
                f,
                "{}\t{:.2}\t{}\t{:.2}",
                row.repo,
                row.time_s,
                thousands(row.tokens),
                row.cost_usd
            )?;
        }
        Ok(())
    }
}
