//! Benchmark task records and repository snapshots.

use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("record {index}: {message}")]
    MalformedRecord { index: usize, message: String },
    #[error("git {args}: {message}")]
    Git { args: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One benchmark task. SWE-bench field names (`instance_id`, `patch`) are
/// accepted as aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    #[serde(alias = "instance_id")]
    pub task_id: String,
    pub repo: String,
    pub base_commit: String,
    pub problem_statement: String,
    #[serde(alias = "patch")]
    pub gold_patch: String,
}

/// Parse a JSON array or JSON-lines document of task records.
pub fn parse_tasks(text: &str) -> Result<Vec<TaskRecord>, TaskError> {
    let values: Vec<serde_json::Value> = if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(|e| TaskError::MalformedRecord {
            index: 0,
            message: e.to_string(),
        })?
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(index, line)| {
                serde_json::from_str(line).map_err(|e| TaskError::MalformedRecord {
                    index,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?
    };
    values
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            let record: TaskRecord = serde_json::from_value(value)
                .map_err(|e| TaskError::MalformedRecord { index, message: e.to_string() })?;
            if record.gold_patch.trim().is_empty() {
                return Err(TaskError::MalformedRecord {
                    index,
                    message: "empty gold patch".into(),
                });
            }
            if record.task_id.trim().is_empty() {
                return Err(TaskError::MalformedRecord {
                    index,
                    message: "empty task id".into(),
                });
            }
            Ok(record)
        })
        .collect()
}

pub fn ingest_tasks(path: &Path) -> Result<Vec<TaskRecord>, TaskError> {
    parse_tasks(&std::fs::read_to_string(path)?)
}

fn git(dir: &Path, args: &[&str]) -> Result<(), TaskError> {
    let output = Command::new("git").arg("-C").arg(dir).args(args).output()?;
    if !output.status.success() {
        return Err(TaskError::Git {
            args: args.join(" "),
            message: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    Ok(())
}

/// Check out `commit` of the local clone at `clone` into a detached worktree
/// at `dest`.
pub fn materialize(clone: &Path, commit: &str, dest: &Path) -> Result<(), TaskError> {
    let dest = dest.to_str().ok_or_else(|| TaskError::Git {
        args: "worktree add".into(),
        message: "destination path is not UTF-8".into(),
    })?;
    git(clone, &["worktree", "add", "--detach", "--force", dest, commit])
}

#[cfg(test)]
mod tests {
    use super::*;

    const RECORD: &str = r#"{"task_id":"t1","repo":"demo","base_commit":"abc","problem_statement":"it breaks","gold_patch":"--- a/a.py\n+++ b/a.py\n"}"#;

    #[test]
    fn jsonl_and_array() {
        let two = format!("{RECORD}\n{}\n", RECORD.replace("t1", "t2"));
        let tasks = parse_tasks(&two).unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[1].task_id, "t2");
        let array = format!("[{RECORD}]");
        assert_eq!(parse_tasks(&array).unwrap().len(), 1);
    }

    #[test]
    fn swe_bench_aliases() {
        let swe = RECORD.replace("task_id", "instance_id").replace("gold_patch", "patch");
        assert_eq!(parse_tasks(&swe).unwrap()[0].task_id, "t1");
    }

    #[test]
    fn missing_patch_is_malformed() {
        let bad = RECORD.replace(r#","gold_patch":"--- a/a.py\n+++ b/a.py\n""#, "");
        let text = format!("{RECORD}\n{bad}\n");
        assert!(matches!(parse_tasks(&text), Err(TaskError::MalformedRecord { index: 1, .. })));
    }
}
