//! The Read/Write/New lists and their output grammar.
//!
//! Sections start with a `READ:`, `WRITE:` or `NEW:` label (markdown
//! decoration tolerated) and hold one entry per line. Unit references are
//! canonical paths (`a.py::C1::f1`) or `file / class / function` triples.
//! New-list entries read `file | kind | name | rationale`, with kind one of
//! `file`, `class`, `function`; `file (new)` marks a file that does not exist
//! yet. Lines that are neither labels nor entries are ignored.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::code_index::{CodeUnitPath, PathSegment};

static LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[\s#>*_-]*(READ|WRITE|NEW|FILES)(?:[-_ ]LIST)?[*_]*\s*:[*_]*\s*(.*)$").expect("label regex")
});

static CANONICAL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<path>[\w./-]+\.py(?:::(?:__MAIN__|[A-Za-z_]\w*(?:#\d+)?))*)(?:$|[^\w.:/-]|:(?:[^:]|$))").expect("path regex")
});

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ListsError {
    #[error("LLM output has no {0} section")]
    MissingSection(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NewKind {
    File,
    Class,
    Function,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NewUnit {
    pub file: String,
    pub kind: NewKind,
    pub name: String,
    pub rationale: String,
    /// The target file does not exist yet.
    pub new_file: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalLists {
    pub read: Vec<CodeUnitPath>,
    pub write: Vec<CodeUnitPath>,
    pub new: Vec<NewUnit>,
}

impl RetrievalLists {
    pub fn is_empty(&self) -> bool {
        self.read.is_empty() && self.write.is_empty() && self.new.is_empty()
    }

    /// Files referenced by the Write-list, sorted.
    pub fn write_files(&self) -> Vec<String> {
        let mut files: Vec<String> = self.write.iter().map(|p| p.file.clone()).collect();
        files.sort();
        files.dedup();
        files
    }

    pub fn merge(&mut self, other: RetrievalLists) {
        self.read.extend(other.read);
        self.write.extend(other.write);
        self.new.extend(other.new);
    }
}

fn strip_entry(line: &str) -> String {
    strip_bullet(line).replace('`', "")
}

fn strip_bullet(line: &str) -> &str {
    let line = line.trim();
    let line = line.trim_start_matches(['-', '*', '+', '•']).trim_start();
    // Numbered bullets: "1." / "2)".
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    let line = if digits > 0 && line[digits..].starts_with(['.', ')']) {
        line[digits + 1..].trim_start()
    } else {
        line
    };
    line.trim()
}

fn is_empty_marker(entry: &str) -> bool {
    matches!(
        entry.to_ascii_lowercase().as_str(),
        "" | "none" | "(none)" | "[]" | "n/a" | "empty" | "(empty)" | "-" | "nothing"
    )
}

/// A unit reference in canonical or triple form.
pub fn parse_reference(entry: &str) -> Option<CodeUnitPath> {
    let entry = strip_entry(entry);
    let entry = entry.as_str();
    if entry.contains(" / ") || entry.contains(" | ") {
        let sep = if entry.contains(" / ") { " / " } else { " | " };
        let fields: Vec<&str> = entry
            .split(sep)
            .map(|f| f.split_whitespace().next().unwrap_or_default())
            .collect();
        if fields.len() == 3 && fields[0].ends_with(".py") {
            let mut path = CodeUnitPath::file(fields[0]);
            for field in &fields[1..] {
                if is_empty_marker(field) || field.eq_ignore_ascii_case("null") {
                    continue;
                }
                let segment = if *field == crate::code_index::MAIN_NAME || field.eq_ignore_ascii_case("main") {
                    PathSegment::Main
                } else {
                    format!("x.py::{field}").parse::<CodeUnitPath>().ok()?.segments.pop()?
                };
                path = path.child(segment);
            }
            return Some(path);
        }
    }
    let caps = CANONICAL.captures(entry)?;
    caps["path"].parse().ok()
}

fn parse_new(entry: &str) -> Option<NewUnit> {
    let entry = strip_entry(entry);
    let entry = entry.as_str();
    let fields: Vec<&str> = entry.split('|').map(str::trim).collect();
    if fields.len() < 3 {
        // Canonical form names the new unit's intended location.
        let path = parse_reference(entry)?;
        let name = match path.segments.last() {
            Some(PathSegment::Named { name, .. }) => name.clone(),
            _ => return None,
        };
        return Some(NewUnit {
            file: path.file,
            kind: NewKind::Function,
            name,
            rationale: String::new(),
            new_file: false,
        });
    }
    let (file, new_file) = match fields[0].strip_suffix("(new)") {
        Some(file) => (file.trim(), true),
        None => (fields[0], false),
    };
    let file = file.trim_matches('`');
    if file.is_empty() || file.contains(char::is_whitespace) {
        return None;
    }
    let kind = match fields[1].to_ascii_lowercase().as_str() {
        "file" | "module" => NewKind::File,
        "class" => NewKind::Class,
        "function" | "method" | "def" => NewKind::Function,
        _ => return None,
    };
    Some(NewUnit {
        file: file.to_string(),
        kind,
        name: fields[2].trim_matches('`').to_string(),
        rationale: fields.get(3..).map(|r| r.join(" | ")).unwrap_or_default(),
        new_file: new_file || kind == NewKind::File,
    })
}

/// Entries of every labelled section, keyed by label. Later sections with
/// the same label extend earlier ones.
fn sections(text: &str) -> Vec<(String, Vec<String>)> {
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    let mut current: Option<usize> = None;
    for line in text.lines() {
        if let Some(caps) = LABEL.captures(line) {
            let label = caps[1].to_string();
            let index = match out.iter().position(|(l, _)| *l == label) {
                Some(i) => i,
                None => {
                    out.push((label, Vec::new()));
                    out.len() - 1
                }
            };
            current = Some(index);
            let rest = caps[2].trim();
            for item in rest.trim_matches(['[', ']']).split(',') {
                if !is_empty_marker(&strip_entry(item)) {
                    out[index].1.push(item.trim().to_string());
                }
            }
            continue;
        }
        if line.trim().starts_with("```") {
            continue;
        }
        if let Some(i) = current {
            let entry = strip_entry(line);
            if !is_empty_marker(&entry) {
                out[i].1.push(entry);
            }
        }
    }
    out
}

/// Extract the three lists. Every section must be declared, even if empty.
pub fn parse_lists(text: &str) -> Result<RetrievalLists, ListsError> {
    let found = sections(text);
    let get = |label: &'static str| {
        found
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, entries)| entries.as_slice())
            .ok_or(ListsError::MissingSection(label))
    };
    let read = get("READ")?;
    let write = get("WRITE")?;
    let new = get("NEW")?;
    Ok(RetrievalLists {
        read: read.iter().filter_map(|e| parse_reference(e)).collect(),
        write: write.iter().filter_map(|e| parse_reference(e)).collect(),
        new: new.iter().filter_map(|e| parse_new(e)).collect(),
    })
}

/// File paths of a `FILES:` section, in stated order.
pub fn parse_file_list(text: &str) -> Result<Vec<String>, ListsError> {
    let found = sections(text);
    let entries = found
        .iter()
        .find(|(l, _)| l == "FILES")
        .map(|(_, e)| e)
        .ok_or(ListsError::MissingSection("FILES"))?;
    Ok(entries
        .iter()
        .filter_map(|e| parse_reference(e))
        .map(|p| p.file)
        .collect())
}

/// Deduplicate, let Write win over Read, and drop references `resolves`
/// rejects. New-list entries for unknown files are kept but marked as new
/// files. Returns the cleaned lists and one warning per dropped or amended
/// entry.
pub fn normalize(
    lists: RetrievalLists,
    resolves: impl Fn(&CodeUnitPath) -> bool,
    file_exists: impl Fn(&str) -> bool,
) -> (RetrievalLists, Vec<String>) {
    let mut warnings = Vec::new();
    let keep = |paths: Vec<CodeUnitPath>, label: &str, warnings: &mut Vec<String>| {
        let mut seen = HashSet::new();
        paths
            .into_iter()
            .filter(|p| {
                if !resolves(p) {
                    warnings.push(format!("dropped unknown {label} reference {p}"));
                    return false;
                }
                seen.insert(p.clone())
            })
            .collect::<Vec<_>>()
    };
    let write = keep(lists.write, "write", &mut warnings);
    let read: Vec<_> = keep(lists.read, "read", &mut warnings)
        .into_iter()
        .filter(|p| !write.contains(p))
        .collect();
    let mut seen = HashSet::new();
    let new = lists
        .new
        .into_iter()
        .map(|mut unit| {
            if !unit.new_file && !file_exists(&unit.file) {
                warnings.push(format!("marked {} as a new file", unit.file));
                unit.new_file = true;
            }
            unit
        })
        .filter(|u| seen.insert(u.clone()))
        .collect();
    (RetrievalLists { read, write, new }, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> CodeUnitPath {
        s.parse().unwrap()
    }

    #[test]
    fn fenced_block() {
        let text = "```\nREAD:\na.py::C1\nWRITE:\na.py::C1::f1\nNEW:\n```\n";
        let lists = parse_lists(text).unwrap();
        assert_eq!(lists.read, vec![p("a.py::C1")]);
        assert_eq!(lists.write, vec![p("a.py::C1::f1")]);
        assert!(lists.new.is_empty());
    }

    #[test]
    fn noisy_prose() {
        let text = "\
I looked at the summaries carefully. The bug is in the parser.

**READ:**
- `a.py::C1` (holds the state)

**WRITE:**
1. a.py / C1 / f1 - off by one here

**NEW:** none

Let me know if anything else is needed.";
        let lists = parse_lists(text).unwrap();
        assert_eq!(lists.read, vec![p("a.py::C1")]);
        assert_eq!(lists.write, vec![p("a.py::C1::f1")]);
        assert!(lists.new.is_empty());
    }

    #[test]
    fn missing_new_section() {
        assert_eq!(
            parse_lists("READ:\nWRITE:\na.py::g\n"),
            Err(ListsError::MissingSection("NEW"))
        );
    }

    #[test]
    fn triples_with_empty_class() {
        assert_eq!(parse_reference("a.py / - / g"), Some(p("a.py::g")));
        assert_eq!(parse_reference("pkg/b.py / K / -"), Some(p("pkg/b.py::K")));
        assert_eq!(parse_reference("a.py / - / __MAIN__"), Some(p("a.py::__MAIN__")));
        assert_eq!(parse_reference("the a.py file"), None);
    }

    #[test]
    fn new_entries() {
        let lists = parse_lists("READ:\nWRITE:\nNEW:\n- app.py (new) | file | app | entry point\n- a.py | function | helper | shared code\n").unwrap();
        assert_eq!(lists.new.len(), 2);
        assert!(lists.new[0].new_file);
        assert_eq!(lists.new[1].kind, NewKind::Function);
        assert_eq!(lists.new[1].rationale, "shared code");
    }

    #[test]
    fn write_beats_read() {
        let lists = RetrievalLists {
            read: vec![p("a.py::C1"), p("a.py::C1::f1")],
            write: vec![p("a.py::C1::f1"), p("a.py::C1::f1"), p("ghost.py::x")],
            new: vec![],
        };
        let (clean, warnings) = normalize(lists, |p| p.file == "a.py", |f| f == "a.py");
        assert_eq!(clean.write, vec![p("a.py::C1::f1")]);
        assert_eq!(clean.read, vec![p("a.py::C1")]);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn file_list() {
        assert_eq!(
            parse_file_list("Relevant:\nFILES:\n1. b.py\n2. `pkg/a.py` - parser\n").unwrap(),
            vec!["b.py", "pkg/a.py"]
        );
    }
}
