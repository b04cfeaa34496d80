//! Incremental summary maintenance across consecutive commits, and the
//! token accounting that measures it.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::code_index::{CodeUnitPath, CodeUnitTree};
use crate::diff::{parse_patch, DiffError, FileStatus, HunkLine};
use crate::repo::{is_python, Snapshot, SourceFile};
use crate::summarizer::{Summarizer, SummarizerError};
use crate::summary::{align, repair, SummaryError, SummaryStore, SummaryTree, EMPTY_MODULE_SUMMARY};

#[derive(Debug, thiserror::Error)]
pub enum UpdateError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("summary of {path} is stale (store digest {store}, pre-change digest {pre})")]
    StoreStale {
        path: String,
        store: String,
        pre: String,
    },
    #[error("{0} is missing from the pre-change snapshot")]
    MissingPreImage(String),
    #[error("{0} is missing from the post-change snapshot")]
    MissingPostImage(String),
    #[error(transparent)]
    Summarizer(#[from] SummarizerError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error("reduction undefined: zero code tokens")]
    DivisionByZero,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileChange {
    pub status: FileStatus,
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    /// Affected units, named by the post-change file path.
    pub changed: Vec<CodeUnitPath>,
    pub pre: Option<CodeUnitTree>,
    pub post: Option<SourceFile>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChangedUnitSet {
    pub files: Vec<FileChange>,
}

impl ChangedUnitSet {
    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn changed_paths(&self) -> impl Iterator<Item = &CodeUnitPath> {
        self.files.iter().flat_map(|f| f.changed.iter())
    }
}

fn push_unique(out: &mut Vec<CodeUnitPath>, seen: &mut HashSet<CodeUnitPath>, path: CodeUnitPath) {
    if seen.insert(path.clone()) {
        out.push(path);
    }
}

/// Map a unified diff between two snapshots onto the code units it touches.
/// Blank changed lines are ignored, as are lines that belong to no unit
/// (imports and the like when the file has no module-level code).
pub fn diff_units(pre: &Snapshot, post: &Snapshot, patch: &str) -> Result<ChangedUnitSet, UpdateError> {
    let mut files = Vec::new();
    for fp in parse_patch(patch)? {
        let old = fp.old_path.clone().filter(|p| is_python(p));
        let new = fp.new_path.clone().filter(|p| is_python(p));
        if old.is_none() && new.is_none() {
            continue;
        }
        let pre_file = match &old {
            Some(path) => Some(pre.get(path).ok_or_else(|| UpdateError::MissingPreImage(path.clone()))?),
            None => None,
        };
        let post_file = match (&new, fp.status) {
            (_, FileStatus::Deleted) | (None, _) => None,
            (Some(path), _) => Some(post.get(path).ok_or_else(|| UpdateError::MissingPostImage(path.clone()))?),
        };
        // A file moving into or out of Python counts as added or deleted.
        let status = match (pre_file.is_some(), post_file.is_some()) {
            (false, true) => FileStatus::Added,
            (true, false) => FileStatus::Deleted,
            _ => fp.status,
        };

        let mut changed = Vec::new();
        if let (Some(pre_file), Some(post_file), Some(new_path)) = (pre_file, post_file, &new) {
            let applied = crate::diff::apply(&pre_file.text, &fp)?;
            if applied != post_file.text {
                return Err(DiffError::PatchMismatch {
                    file: new_path.clone(),
                    hunk: 0,
                    message: "patched text differs from the post-change file".into(),
                }
                .into());
            }
            let mut seen = HashSet::new();
            for hunk in &fp.hunks {
                for (old_line, new_line, line) in hunk.numbered() {
                    let unit = match line {
                        HunkLine::Added(text) if !text.trim().is_empty() => post_file
                            .tree
                            .enclosing_unit(new_line.expect("added line has a new number"))
                            .ok()
                            .filter(|p| post_file.tree.resolve(p).is_some()),
                        HunkLine::Removed(text) if !text.trim().is_empty() => pre_file
                            .tree
                            .enclosing_unit(old_line.expect("removed line has an old number"))
                            .ok()
                            .filter(|p| pre_file.tree.resolve(p).is_some())
                            .map(|p| p.with_file(new_path.clone())),
                        _ => None,
                    };
                    if let Some(unit) = unit {
                        push_unique(&mut changed, &mut seen, unit);
                    }
                }
            }
        }
        files.push(FileChange {
            status,
            old_path: old,
            new_path: new,
            changed,
            pre: pre_file.map(|f| f.tree.clone()),
            post: post_file.cloned(),
        });
    }
    Ok(ChangedUnitSet { files })
}

/// LLM work done by one [`apply_update`] call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateReport {
    pub unit_calls: Vec<CodeUnitPath>,
    pub files_summarized: Vec<String>,
    pub files_removed: Vec<String>,
    pub files_relocated: Vec<(String, String)>,
}

/// Bring `store` from the pre-change version to the post-change version,
/// summarising only what changed. On error the store is left untouched.
pub fn apply_update(
    store: &mut SummaryStore,
    changes: &ChangedUnitSet,
    summarizer: &Summarizer<'_>,
) -> Result<UpdateReport, UpdateError> {
    let mut next = store.clone();
    let mut report = UpdateReport::default();
    for change in &changes.files {
        match change.status {
            FileStatus::Added => {
                let post = change.post.as_ref().expect("added file has a post image");
                let path = change.new_path.clone().expect("added file has a path");
                next.insert(summarizer.summarize_file(&post.text, &post.tree)?);
                report.files_summarized.push(path);
            }
            FileStatus::Deleted => {
                let path = change.old_path.clone().expect("deleted file has a path");
                next.remove(&path);
                report.files_removed.push(path);
            }
            FileStatus::Modified | FileStatus::Renamed => {
                let tree = update_file(&next, change, summarizer, &mut report)?;
                if let Some(old) = &change.old_path {
                    next.remove(old);
                }
                next.insert(tree);
            }
        }
    }
    *store = next;
    Ok(report)
}

fn update_file(
    store: &SummaryStore,
    change: &FileChange,
    summarizer: &Summarizer<'_>,
    report: &mut UpdateReport,
) -> Result<SummaryTree, UpdateError> {
    let old_path = change.old_path.as_deref().expect("modified file has an old path");
    let new_path = change.new_path.as_deref().expect("modified file has a new path");
    let pre = change.pre.as_ref().expect("modified file has a pre tree");
    let post = change.post.as_ref().expect("modified file has a post image");
    let mut tree = store
        .get(old_path)
        .cloned()
        .ok_or_else(|| SummaryError::UnknownFile(old_path.to_string()))?;
    if tree.digest != pre.digest {
        return Err(UpdateError::StoreStale {
            path: old_path.to_string(),
            store: tree.digest.clone(),
            pre: pre.digest.clone(),
        });
    }
    if old_path != new_path {
        tree.relocate(new_path);
        report
            .files_relocated
            .push((old_path.to_string(), new_path.to_string()));
    }
    if tree.digest == post.tree.digest {
        return Ok(tree);
    }
    let was_empty = tree.root.summary == EMPTY_MODULE_SUMMARY && tree.root.children.is_empty();
    if pre.degraded || post.tree.degraded || was_empty || post.text.trim().is_empty() {
        report.files_summarized.push(new_path.to_string());
        return Ok(summarizer.summarize_file(&post.text, &post.tree)?);
    }

    let mut ordered = change.changed.clone();
    ordered.sort_by_key(CodeUnitPath::depth);
    let mut added: Vec<CodeUnitPath> = Vec::new();
    for path in &ordered {
        if added.iter().any(|a| path.starts_with(a)) {
            continue;
        }
        let Some(unit) = post.tree.resolve(path) else {
            if tree.node(path).is_some() {
                tree.remove(path)?;
            }
            continue;
        };
        let code = post.tree.extract_code(path, &post.text).map_err(SummarizerError::from)?;
        if tree.node(path).is_some() {
            let fresh = summarizer.summarize_unit(&code, path)?;
            report.unit_calls.push(path.clone());
            let node = tree.node_mut(path).expect("node checked above");
            node.header = fresh.header;
            node.summary = fresh.summary;
            continue;
        }
        let parent = path.parent().expect("unit paths have a parent");
        let Some(parent_node) = tree.node(&parent) else {
            // Left for the repair pass below.
            continue;
        };
        let parent_unit = post.tree.resolve(&parent).expect("parent of a resolved unit");
        let before: Vec<_> = parent_unit
            .children
            .iter()
            .take_while(|c| c.segment() != unit.segment())
            .map(|c| c.segment())
            .collect();
        let position = parent_node
            .child_segments()
            .iter()
            .filter(|s| before.contains(s))
            .count();
        let fresh = summarizer.summarize_unit(&code, path)?;
        report.unit_calls.push(path.clone());
        tree.inject(&parent, fresh, position)?;
        added.push(path.clone());
    }

    let mut failure = None;
    let repaired = repair(&tree, &post.tree, |path, _| {
        let code = post.tree.extract_code(path, &post.text).map_err(SummarizerError::from);
        let result = code.and_then(|code| summarizer.summarize_unit(&code, path));
        match result {
            Ok(node) => {
                report.unit_calls.push(path.clone());
                Ok(node)
            }
            Err(err) => {
                let message = err.to_string();
                failure = Some(err);
                Err(message.into())
            }
        }
    });
    let mut repaired = match repaired {
        Ok(tree) => tree,
        Err(err) => return Err(failure.map(UpdateError::from).unwrap_or(err.into())),
    };
    repaired.digest = post.tree.digest.clone();
    repaired.degraded = post.tree.degraded;
    let remaining = align(&repaired, &post.tree);
    if !remaining.is_empty() {
        return Err(SummarizerError::AlignmentUnrepairable {
            path: new_path.to_string(),
            rounds: 1,
            report: Box::new(remaining),
        }
        .into());
    }
    Ok(repaired)
}

/// Token accounting for one repository.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub code_tokens: u64,
    pub summary_tokens: u64,
    pub new_commit_tokens: u64,
    pub updated_summary_tokens: u64,
    /// `100·(1 − summary/code)`, unrounded.
    pub reduction_pct: f64,
    /// `100·(1 − new_commit/code)`. Our own definition of the code
    /// submission saving, not reproduced from published figures.
    pub saved_on_submission_pct: f64,
    /// `100·(1 − updated_summary/new_commit)`; `None` without commit tokens.
    pub saved_by_update_pct: Option<f64>,
}

pub fn round1(value: f64) -> f64 {
    (value * 10.0).round() / 10.0
}

pub fn reduction_pct(code: u64, summary: u64) -> Result<f64, UpdateError> {
    if code == 0 {
        return Err(UpdateError::DivisionByZero);
    }
    Ok(100.0 * (1.0 - summary as f64 / code as f64))
}

pub fn compute_stats(
    code_tokens: u64,
    summary_tokens: u64,
    new_commit_tokens: u64,
    updated_summary_tokens: u64,
) -> Result<TokenStats, UpdateError> {
    Ok(TokenStats {
        code_tokens,
        summary_tokens,
        new_commit_tokens,
        updated_summary_tokens,
        reduction_pct: reduction_pct(code_tokens, summary_tokens)?,
        saved_on_submission_pct: reduction_pct(code_tokens, new_commit_tokens)?,
        saved_by_update_pct: reduction_pct(new_commit_tokens, updated_summary_tokens).ok(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoStatsRow {
    pub repo: String,
    pub instances: usize,
    pub stats: TokenStats,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Unweighted mean and sample standard deviation of the per-repo reduction
/// percentages, each rounded to one decimal first.
pub fn mean_reduction(rows: &[RepoStatsRow]) -> Option<(f64, f64)> {
    if rows.is_empty() {
        return None;
    }
    let values: Vec<f64> = rows.iter().map(|r| round1(r.stats.reduction_pct)).collect();
    Some(mean_std(&values))
}

/// Tab-separated report with one row per repository and a mean row.
pub fn stats_report(rows: &[RepoStatsRow]) -> String {
    let mut out = String::from(
        "repo\tinstances\tcode_tokens\tsummary_tokens\treduction_pct\tnew_commit_tokens\tupdated_summary_tokens\tsaved_on_submission_pct_ours\tsaved_by_update_pct\n",
    );
    let pct = |v: Option<f64>| v.map(|v| format!("{:.1}", round1(v))).unwrap_or_else(|| "-".into());
    for row in rows {
        let s = &row.stats;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.1}\t{}\t{}\t{}\t{}",
            row.repo,
            row.instances,
            s.code_tokens,
            s.summary_tokens,
            round1(s.reduction_pct),
            s.new_commit_tokens,
            s.updated_summary_tokens,
            pct(Some(s.saved_on_submission_pct)),
            pct(s.saved_by_update_pct),
        );
    }
    if let Some((mean, std)) = mean_reduction(rows) {
        let total = |f: fn(&TokenStats) -> u64| rows.iter().map(|r| f(&r.stats)).sum::<u64>();
        let mean_of = |f: fn(&TokenStats) -> Option<f64>| {
            let values: Vec<f64> = rows.iter().filter_map(|r| f(&r.stats).map(round1)).collect();
            (!values.is_empty()).then(|| mean_std(&values).0)
        };
        let _ = writeln!(
            out,
            "total (mean)\t{}\t{}\t{}\t{:.1} (std {:.1})\t{}\t{}\t{}\t{}",
            rows.iter().map(|r| r.instances).sum::<usize>(),
            total(|s| s.code_tokens),
            total(|s| s.summary_tokens),
            mean,
            std,
            total(|s| s.new_commit_tokens),
            total(|s| s.updated_summary_tokens),
            pct(mean_of(|s| Some(s.saved_on_submission_pct))),
            pct(mean_of(|s| s.saved_by_update_pct)),
        );
    }
    out
}

#[cfg(test)]
mod tests;
