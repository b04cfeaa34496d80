//! Unified diff parsing, application and generation.
//!
//! Accepts `git diff --find-renames` output: `diff --git` headers,
//! `rename from/to`, `new file mode`, `deleted file mode`, `---`/`+++` file
//! lines and `@@ -a,b +c,d @@` hunks. Plain `---`/`+++` diffs without git
//! headers are accepted too.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("malformed diff at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("hunk {hunk} of {file} does not apply: {message}")]
    PatchMismatch {
        file: String,
        hunk: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileStatus {
    Added,
    Deleted,
    Modified,
    Renamed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HunkLine {
    Context(String),
    Removed(String),
    Added(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    pub lines: Vec<HunkLine>,
    /// The last old-side / new-side line lacks a trailing newline.
    pub old_no_newline: bool,
    pub new_no_newline: bool,
}

impl Hunk {
    /// Old-side line numbers of removed lines.
    pub fn removed_lines(&self) -> Vec<usize> {
        self.numbered().filter_map(|(old, _, line)| match line {
            HunkLine::Removed(_) => old,
            _ => None,
        }).collect()
    }

    /// New-side line numbers of added lines.
    pub fn added_lines(&self) -> Vec<usize> {
        self.numbered().filter_map(|(_, new, line)| match line {
            HunkLine::Added(_) => new,
            _ => None,
        }).collect()
    }

    /// `(old line, new line, line)` triples; the side a line does not exist
    /// on is `None`.
    pub fn numbered(&self) -> impl Iterator<Item = (Option<usize>, Option<usize>, &HunkLine)> {
        let mut old = self.old_start.max(1);
        let mut new = self.new_start.max(1);
        self.lines.iter().map(move |line| match line {
            HunkLine::Context(_) => {
                let at = (Some(old), Some(new), line);
                old += 1;
                new += 1;
                at
            }
            HunkLine::Removed(_) => {
                let at = (Some(old), None, line);
                old += 1;
                at
            }
            HunkLine::Added(_) => {
                let at = (None, Some(new), line);
                new += 1;
                at
            }
        })
    }

    pub fn is_pure_deletion(&self) -> bool {
        !self.lines.iter().any(|l| matches!(l, HunkLine::Added(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilePatch {
    /// `None` for created files.
    pub old_path: Option<String>,
    /// `None` for deleted files.
    pub new_path: Option<String>,
    pub status: FileStatus,
    pub hunks: Vec<Hunk>,
}

impl FilePatch {
    /// The path the file has after the patch, or before it for deletions.
    pub fn path(&self) -> &str {
        self.new_path
            .as_deref()
            .or(self.old_path.as_deref())
            .unwrap_or_default()
    }
}

fn strip_prefix(path: &str) -> Option<String> {
    let path = path.split('\t').next().unwrap_or(path).trim();
    if path == "/dev/null" {
        return None;
    }
    let path = path
        .strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(path);
    Some(path.to_string())
}

fn parse_range(text: &str, line: usize) -> Result<(usize, usize), DiffError> {
    let bad = || DiffError::Malformed {
        line,
        message: format!("bad hunk range `{text}`"),
    };
    let (start, len) = match text.split_once(',') {
        Some((s, l)) => (s, l),
        None => (text, "1"),
    };
    Ok((
        start.parse().map_err(|_| bad())?,
        len.parse().map_err(|_| bad())?,
    ))
}

#[derive(Default)]
struct Pending {
    old_path: Option<String>,
    new_path: Option<String>,
    rename: bool,
    added: bool,
    deleted: bool,
    hunks: Vec<Hunk>,
    seen_header: bool,
}

impl Pending {
    fn finish(self) -> Option<FilePatch> {
        if !self.seen_header && self.hunks.is_empty() && !self.rename {
            return None;
        }
        let (old_path, new_path) = (self.old_path, self.new_path);
        let status = if self.added || (old_path.is_none() && new_path.is_some()) {
            FileStatus::Added
        } else if self.deleted || new_path.is_none() {
            FileStatus::Deleted
        } else if self.rename || old_path != new_path {
            FileStatus::Renamed
        } else {
            FileStatus::Modified
        };
        let (old_path, new_path) = match status {
            FileStatus::Added => (None, new_path.or(old_path)),
            FileStatus::Deleted => (old_path.or(new_path), None),
            _ => (old_path, new_path),
        };
        Some(FilePatch {
            old_path,
            new_path,
            status,
            hunks: self.hunks,
        })
    }
}

/// Parse unified diff text into per-file patches.
pub fn parse_patch(text: &str) -> Result<Vec<FilePatch>, DiffError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut files = Vec::new();
    let mut current = Pending::default();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix("diff --git ") {
            if let Some(done) = std::mem::take(&mut current).finish() {
                files.push(done);
            }
            current.seen_header = true;
            if let Some((a, b)) = rest.split_once(" b/") {
                current.old_path = strip_prefix(a);
                current.new_path = Some(b.to_string());
            }
        } else if let Some(p) = line.strip_prefix("rename from ") {
            current.rename = true;
            current.old_path = Some(p.to_string());
        } else if let Some(p) = line.strip_prefix("rename to ") {
            current.rename = true;
            current.new_path = Some(p.to_string());
        } else if line.starts_with("new file mode") {
            current.added = true;
        } else if line.starts_with("deleted file mode") {
            current.deleted = true;
        } else if line.starts_with("--- ") && lines.get(i + 1).is_some_and(|n| n.starts_with("+++ ")) {
            if !current.seen_header || !current.hunks.is_empty() {
                if let Some(done) = std::mem::take(&mut current).finish() {
                    files.push(done);
                }
                current.seen_header = true;
            }
            current.old_path = strip_prefix(&line[4..]);
            current.new_path = strip_prefix(&lines[i + 1][4..]);
            if current.old_path.is_none() {
                current.added = true;
            }
            if current.new_path.is_none() {
                current.deleted = true;
            }
            i += 1;
        } else if let Some(rest) = line.strip_prefix("@@ ") {
            let ranges = rest.split(" @@").next().unwrap_or_default();
            let mut parts = ranges.split_whitespace();
            let old = parts.next().and_then(|p| p.strip_prefix('-'));
            let new = parts.next().and_then(|p| p.strip_prefix('+'));
            let (Some(old), Some(new)) = (old, new) else {
                return Err(DiffError::Malformed {
                    line: lineno,
                    message: "bad hunk header".into(),
                });
            };
            let (old_start, old_len) = parse_range(old, lineno)?;
            let (new_start, new_len) = parse_range(new, lineno)?;
            let mut hunk = Hunk {
                old_start,
                old_len,
                new_start,
                new_len,
                lines: Vec::new(),
                old_no_newline: false,
                new_no_newline: false,
            };
            let (mut old_seen, mut new_seen) = (0, 0);
            while old_seen < old_len || new_seen < new_len {
                i += 1;
                let Some(body) = lines.get(i) else {
                    return Err(DiffError::Malformed {
                        line: i + 1,
                        message: "hunk ends early".into(),
                    });
                };
                if body.starts_with('\\') {
                    mark_no_newline(&mut hunk);
                    continue;
                }
                let (tag, content) = match body.chars().next() {
                    Some(c) => (c, &body[c.len_utf8()..]),
                    None => (' ', ""),
                };
                match tag {
                    ' ' => {
                        old_seen += 1;
                        new_seen += 1;
                        hunk.lines.push(HunkLine::Context(content.to_string()));
                    }
                    '-' => {
                        old_seen += 1;
                        hunk.lines.push(HunkLine::Removed(content.to_string()));
                    }
                    '+' => {
                        new_seen += 1;
                        hunk.lines.push(HunkLine::Added(content.to_string()));
                    }
                    _ => {
                        return Err(DiffError::Malformed {
                            line: i + 1,
                            message: format!("unexpected hunk line `{body}`"),
                        })
                    }
                }
            }
            if old_seen != old_len || new_seen != new_len {
                return Err(DiffError::Malformed {
                    line: lineno,
                    message: "hunk length disagrees with header".into(),
                });
            }
            if lines.get(i + 1).is_some_and(|l| l.starts_with('\\')) {
                i += 1;
                mark_no_newline(&mut hunk);
            }
            current.hunks.push(hunk);
        }
        i += 1;
    }
    if let Some(done) = current.finish() {
        files.push(done);
    }
    Ok(files)
}

fn mark_no_newline(hunk: &mut Hunk) {
    match hunk.lines.last() {
        Some(HunkLine::Removed(_)) => hunk.old_no_newline = true,
        Some(HunkLine::Added(_)) => hunk.new_no_newline = true,
        _ => {
            hunk.old_no_newline = true;
            hunk.new_no_newline = true;
        }
    }
}

fn content(line: &str) -> &str {
    line.strip_suffix('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .unwrap_or(line)
}

/// Apply a file patch to the pre-image text, checking every context and
/// removed line.
pub fn apply(pre: &str, patch: &FilePatch) -> Result<String, DiffError> {
    let file = patch.path().to_string();
    let old: Vec<&str> = pre.split_inclusive('\n').collect();
    let mut out = String::with_capacity(pre.len());
    let mut cursor = 0usize;
    for (h, hunk) in patch.hunks.iter().enumerate() {
        let mismatch = |message: String| DiffError::PatchMismatch {
            file: file.clone(),
            hunk: h + 1,
            message,
        };
        let start = if hunk.old_len == 0 {
            hunk.old_start
        } else {
            hunk.old_start.saturating_sub(1)
        };
        if start < cursor || start > old.len() {
            return Err(mismatch(format!("starts at line {}", hunk.old_start)));
        }
        old[cursor..start].iter().for_each(|l| out.push_str(l));
        cursor = start;
        let last_new = hunk
            .lines
            .iter()
            .rposition(|l| !matches!(l, HunkLine::Removed(_)));
        for (k, line) in hunk.lines.iter().enumerate() {
            match line {
                HunkLine::Context(text) | HunkLine::Removed(text) => {
                    let Some(actual) = old.get(cursor) else {
                        return Err(mismatch("runs past end of file".into()));
                    };
                    if content(actual) != text {
                        return Err(mismatch(format!(
                            "line {} is `{}`, expected `{text}`",
                            cursor + 1,
                            content(actual)
                        )));
                    }
                    if matches!(line, HunkLine::Context(_)) {
                        if Some(k) == last_new && hunk.new_no_newline {
                            out.push_str(content(actual));
                        } else if actual.ends_with('\n') {
                            out.push_str(actual);
                        } else {
                            out.push_str(actual);
                            out.push('\n');
                        }
                    }
                    cursor += 1;
                }
                HunkLine::Added(text) => {
                    out.push_str(text);
                    if !(Some(k) == last_new && hunk.new_no_newline) {
                        out.push('\n');
                    }
                }
            }
        }
    }
    old[cursor..].iter().for_each(|l| out.push_str(l));
    Ok(out)
}

/// Line-level unified diff between two texts (LCS based, intended for
/// modest file sizes).
pub fn unified(old_path: Option<&str>, new_path: Option<&str>, old: &str, new: &str, context: usize) -> String {
    let a: Vec<&str> = old.split_inclusive('\n').collect();
    let b: Vec<&str> = new.split_inclusive('\n').collect();
    let ops = lcs_ops(&a, &b);

    let mut out = String::new();
    let (from, to) = (old_path.or(new_path).unwrap_or_default(), new_path.or(old_path).unwrap_or_default());
    let _ = writeln!(out, "diff --git a/{from} b/{to}");
    match (old_path, new_path) {
        (None, Some(_)) => out.push_str("new file mode 100644\n"),
        (Some(_), None) => out.push_str("deleted file mode 100644\n"),
        (Some(o), Some(n)) if o != n => {
            let _ = writeln!(out, "rename from {o}\nrename to {n}");
        }
        _ => {}
    }
    if !ops.iter().any(|op| !matches!(op, Op::Same(..))) {
        return out;
    }
    let _ = writeln!(
        out,
        "--- {}\n+++ {}",
        old_path.map(|p| format!("a/{p}")).unwrap_or("/dev/null".into()),
        new_path.map(|p| format!("b/{p}")).unwrap_or("/dev/null".into())
    );

    // Group edits into hunks with `context` lines around them.
    let changed: Vec<usize> = ops
        .iter()
        .enumerate()
        .filter(|(_, op)| !matches!(op, Op::Same(..)))
        .map(|(i, _)| i)
        .collect();
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for &i in &changed {
        let lo = i.saturating_sub(context);
        let hi = (i + context + 1).min(ops.len());
        match groups.last_mut() {
            Some((_, end)) if lo <= *end => *end = hi,
            _ => groups.push((lo, hi)),
        }
    }
    for (lo, hi) in groups {
        let (mut old_start, mut new_start) = (1, 1);
        for op in &ops[..lo] {
            match op {
                Op::Same(..) => {
                    old_start += 1;
                    new_start += 1;
                }
                Op::Del(_) => old_start += 1,
                Op::Ins(_) => new_start += 1,
            }
        }
        let old_len = ops[lo..hi].iter().filter(|o| !matches!(o, Op::Ins(_))).count();
        let new_len = ops[lo..hi].iter().filter(|o| !matches!(o, Op::Del(_))).count();
        let fmt_range = |start: usize, len: usize| {
            let start = if len == 0 { start - 1 } else { start };
            if len == 1 {
                format!("{start}")
            } else {
                format!("{start},{len}")
            }
        };
        let _ = writeln!(out, "@@ -{} +{} @@", fmt_range(old_start, old_len), fmt_range(new_start, new_len));
        for op in &ops[lo..hi] {
            let (tag, line) = match op {
                Op::Same(l) => (' ', *l),
                Op::Del(l) => ('-', *l),
                Op::Ins(l) => ('+', *l),
            };
            out.push(tag);
            out.push_str(line);
            if !line.ends_with('\n') {
                out.push_str("\n\\ No newline at end of file\n");
            }
        }
    }
    out
}

enum Op<'a> {
    Same(&'a str),
    Del(&'a str),
    Ins(&'a str),
}

fn lcs_ops<'a>(a: &[&'a str], b: &[&'a str]) -> Vec<Op<'a>> {
    let (n, m) = (a.len(), b.len());
    let mut table = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i][j] = if a[i] == b[j] {
                table[i + 1][j + 1] + 1
            } else {
                table[i + 1][j].max(table[i][j + 1])
            };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut ops = Vec::new();
    while i < n || j < m {
        if i < n && j < m && a[i] == b[j] {
            ops.push(Op::Same(a[i]));
            i += 1;
            j += 1;
        } else if j < m && (i == n || table[i][j + 1] >= table[i + 1][j]) {
            ops.push(Op::Ins(b[j]));
            j += 1;
        } else {
            ops.push(Op::Del(a[i]));
            i += 1;
        }
    }
    ops
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRE: &str = "a\nb\nc\nd\ne\n";

    #[test]
    fn parse_and_apply_modification() {
        let diff = "\
diff --git a/x.py b/x.py
index 111..222 100644
--- a/x.py
+++ b/x.py
@@ -2,3 +2,3 @@ def f():
 b
-c
+C
 d
";
        let files = parse_patch(diff).unwrap();
        assert_eq!(files.len(), 1);
        assert_eq!(files[0].status, FileStatus::Modified);
        assert_eq!(files[0].hunks[0].removed_lines(), vec![3]);
        assert_eq!(files[0].hunks[0].added_lines(), vec![3]);
        assert_eq!(apply(PRE, &files[0]).unwrap(), "a\nb\nC\nd\ne\n");
    }

    #[test]
    fn context_mismatch() {
        let diff = "--- a/x.py\n+++ b/x.py\n@@ -2,2 +2,2 @@\n b\n-zzz\n+y\n";
        let files = parse_patch(diff).unwrap();
        assert!(matches!(apply(PRE, &files[0]), Err(DiffError::PatchMismatch { .. })));
    }

    #[test]
    fn new_deleted_and_renamed() {
        let diff = "\
diff --git a/new.py b/new.py
new file mode 100644
--- /dev/null
+++ b/new.py
@@ -0,0 +1,2 @@
+x = 1
+y = 2
diff --git a/old.py b/old.py
deleted file mode 100644
--- a/old.py
+++ /dev/null
@@ -1 +0,0 @@
-z = 3
diff --git a/p.py b/q.py
similarity index 100%
rename from p.py
rename to q.py
";
        let files = parse_patch(diff).unwrap();
        assert_eq!(files.len(), 3);
        assert_eq!(files[0].status, FileStatus::Added);
        assert_eq!(files[0].new_path.as_deref(), Some("new.py"));
        assert_eq!(apply("", &files[0]).unwrap(), "x = 1\ny = 2\n");
        assert_eq!(files[1].status, FileStatus::Deleted);
        assert_eq!(files[1].old_path.as_deref(), Some("old.py"));
        assert_eq!(apply("z = 3\n", &files[1]).unwrap(), "");
        assert_eq!(files[2].status, FileStatus::Renamed);
        assert!(files[2].hunks.is_empty());
        assert_eq!(files[2].old_path.as_deref(), Some("p.py"));
        assert_eq!(files[2].new_path.as_deref(), Some("q.py"));
    }

    #[test]
    fn empty_diff() {
        assert!(parse_patch("").unwrap().is_empty());
    }

    #[test]
    fn no_newline_marker() {
        let pre = "a\nb";
        let post = "a\nc";
        let diff = unified(Some("f.py"), Some("f.py"), pre, post, 3);
        assert!(diff.contains("\\ No newline at end of file"));
        let files = parse_patch(&diff).unwrap();
        assert_eq!(apply(pre, &files[0]).unwrap(), post);
    }

    #[test]
    fn generated_diff_round_trips() {
        let pre = "1\n2\n3\n4\n5\n6\n7\n8\n9\n10\n";
        let post = "1\n2\nthree\n4\n5\n6\n7\n8\nnine\nnine-b\n10\n";
        let diff = unified(Some("f.py"), Some("f.py"), pre, post, 1);
        let files = parse_patch(&diff).unwrap();
        assert_eq!(files[0].hunks.len(), 2);
        assert_eq!(apply(pre, &files[0]).unwrap(), post);
    }

    #[test]
    fn truncated_hunk_is_malformed() {
        let diff = "--- a/x.py\n+++ b/x.py\n@@ -1,3 +1,3 @@\n a\n";
        assert!(matches!(parse_patch(diff), Err(DiffError::Malformed { .. })));
    }
}
