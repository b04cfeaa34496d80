//! Structural model of source files: classes, functions and the module-level
//! `__MAIN__` pseudo-unit, addressed by [`CodeUnitPath`].
//!
//! Only the projection needed for summaries and localisation is kept.
//! Imports, decorators and comments do not form units of their own.

mod path;
mod python;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use path::{CodeUnitPath, InvalidPath, PathSegment, MAIN_NAME};
pub use python::parse_file;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("syntax error in {path} near line {line}")]
    SyntaxError { path: String, line: usize },
    #[error("line {line} is outside {path} (1..={len})")]
    LineOutOfRange { path: String, line: usize, len: usize },
    #[error("no unit at {0}")]
    PathNotFound(CodeUnitPath),
    #[error("source digest mismatch for {path}")]
    DigestMismatch { path: String },
    #[error("parser setup failed: {0}")]
    Parser(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeUnitKind {
    File,
    Class,
    Function,
    Main,
}

impl fmt::Display for CodeUnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodeUnitKind::File => "file",
            CodeUnitKind::Class => "class",
            CodeUnitKind::Function => "function",
            CodeUnitKind::Main => "main",
        })
    }
}

/// Half-open, 1-based line range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: usize,
    pub end: usize,
}

impl LineSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        LineSpan { start, end }
    }

    pub fn contains(&self, line: usize) -> bool {
        self.start <= line && line < self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn encloses(&self, other: &LineSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeUnit {
    pub kind: CodeUnitKind,
    /// Empty for `File` roots (see [`CodeUnitTree::path`]) and `Main`.
    pub name: String,
    /// Parameter list plus return annotation for functions, comma separated
    /// attribute names for classes, empty otherwise.
    pub signature: String,
    pub span: LineSpan,
    /// Line ranges collected by a `Main` unit. Empty for other kinds.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<LineSpan>,
    pub children: Vec<CodeUnit>,
    pub ordinal: usize,
}

impl CodeUnit {
    pub fn segment(&self) -> PathSegment {
        match self.kind {
            CodeUnitKind::Main => PathSegment::Main,
            _ => PathSegment::Named {
                name: self.name.clone(),
                ordinal: self.ordinal,
            },
        }
    }

    /// Class attribute names, in first-appearance order.
    pub fn attributes(&self) -> Vec<&str> {
        if self.kind != CodeUnitKind::Class || self.signature.is_empty() {
            return Vec::new();
        }
        self.signature.split(", ").collect()
    }

    pub fn find_child(&self, segment: &PathSegment) -> Option<&CodeUnit> {
        self.children.iter().find(|c| &c.segment() == segment)
    }

    pub fn covers(&self, line: usize) -> bool {
        match self.kind {
            CodeUnitKind::Main => self.segments.iter().any(|s| s.contains(line)),
            _ => self.span.contains(line),
        }
    }
}

/// Parsed structure of one file version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeUnitTree {
    pub path: String,
    pub root: CodeUnit,
    pub digest: String,
    pub line_count: usize,
    /// Set when the file could not be parsed or was not valid UTF-8.
    #[serde(default)]
    pub degraded: bool,
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn count_lines(text: &str) -> usize {
    text.split_inclusive('\n').count()
}

/// Byte offset of the start of every line, followed by `text.len()`.
fn line_offsets(text: &str) -> Vec<usize> {
    let mut offsets = vec![0];
    offsets.extend(text.match_indices('\n').map(|(i, _)| i + 1));
    if offsets.last() != Some(&text.len()) {
        offsets.push(text.len());
    }
    offsets
}

/// Source text of the given lines, line terminators included.
pub fn slice_lines(text: &str, span: LineSpan) -> &str {
    if span.is_empty() {
        return "";
    }
    let offsets = line_offsets(text);
    let last = offsets.len() - 1;
    let from = offsets[(span.start - 1).min(last)];
    let to = offsets[(span.end - 1).min(last)];
    &text[from..to]
}

impl CodeUnitTree {
    /// Index a file, falling back to a degraded File+Main tree when it does
    /// not parse.
    pub fn index(source: &str, path: &str) -> CodeUnitTree {
        match parse_file(source, path) {
            Ok(tree) => tree,
            Err(err) => {
                log::warn!("{err}; indexing {path} as a single module unit");
                Self::degraded(source, path)
            }
        }
    }

    /// Index raw bytes; invalid UTF-8 is replaced and the tree flagged.
    pub fn index_bytes(bytes: &[u8], path: &str) -> (CodeUnitTree, String) {
        match std::str::from_utf8(bytes) {
            Ok(text) => (Self::index(text, path), text.to_string()),
            Err(_) => {
                let text = String::from_utf8_lossy(bytes).into_owned();
                let mut tree = Self::index(&text, path);
                tree.degraded = true;
                (tree, text)
            }
        }
    }

    pub fn degraded(source: &str, path: &str) -> CodeUnitTree {
        let line_count = count_lines(source);
        let whole = LineSpan::new(1, line_count + 1);
        let mut children = Vec::new();
        if line_count > 0 {
            children.push(CodeUnit {
                kind: CodeUnitKind::Main,
                name: String::new(),
                signature: String::new(),
                span: whole,
                segments: vec![whole],
                children: Vec::new(),
                ordinal: 0,
            });
        }
        CodeUnitTree {
            path: path.to_string(),
            root: CodeUnit {
                kind: CodeUnitKind::File,
                name: String::new(),
                signature: String::new(),
                span: whole,
                segments: Vec::new(),
                children,
                ordinal: 0,
            },
            digest: digest(source),
            line_count,
            degraded: true,
        }
    }

    pub fn file_path(&self) -> CodeUnitPath {
        CodeUnitPath::file(&self.path)
    }

    pub fn resolve(&self, path: &CodeUnitPath) -> Option<&CodeUnit> {
        if path.file != self.path {
            return None;
        }
        let mut unit = &self.root;
        for segment in &path.segments {
            unit = unit.find_child(segment)?;
        }
        Some(unit)
    }

    pub fn main_unit(&self) -> Option<&CodeUnit> {
        self.root
            .children
            .iter()
            .find(|c| c.kind == CodeUnitKind::Main)
    }

    /// Every unit below the root, depth first in source order.
    pub fn units(&self) -> Vec<(CodeUnitPath, &CodeUnit)> {
        fn walk<'a>(
            unit: &'a CodeUnit,
            at: &CodeUnitPath,
            out: &mut Vec<(CodeUnitPath, &'a CodeUnit)>,
        ) {
            for child in &unit.children {
                let path = at.child(child.segment());
                out.push((path.clone(), child));
                walk(child, &path, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &self.file_path(), &mut out);
        out
    }

    /// Path of the unit a line belongs to: the deepest function containing
    /// it, else the deepest class, else the file's `__MAIN__` (whether or not
    /// the tree holds a Main unit).
    pub fn enclosing_unit(&self, line: usize) -> Result<CodeUnitPath, IndexError> {
        if line == 0 || line > self.line_count {
            return Err(IndexError::LineOutOfRange {
                path: self.path.clone(),
                line,
                len: self.line_count,
            });
        }
        let mut at = self.file_path();
        let mut function = None;
        let mut class = None;
        let mut unit = &self.root;
        while let Some(child) = unit
            .children
            .iter()
            .find(|c| c.kind != CodeUnitKind::Main && c.span.contains(line))
        {
            at = at.child(child.segment());
            match child.kind {
                CodeUnitKind::Function => function = Some(at.clone()),
                CodeUnitKind::Class => class = Some(at.clone()),
                _ => {}
            }
            unit = child;
        }
        Ok(function
            .or(class)
            .unwrap_or_else(|| CodeUnitPath::main(&self.path)))
    }

    /// Exact source of a unit. The root yields the whole file and `Main`
    /// yields its collected line ranges concatenated.
    pub fn extract_code(&self, path: &CodeUnitPath, source: &str) -> Result<String, IndexError> {
        if digest(source) != self.digest {
            return Err(IndexError::DigestMismatch {
                path: self.path.clone(),
            });
        }
        let unit = self
            .resolve(path)
            .ok_or_else(|| IndexError::PathNotFound(path.clone()))?;
        Ok(match unit.kind {
            CodeUnitKind::File => source.to_string(),
            CodeUnitKind::Main => unit
                .segments
                .iter()
                .map(|s| slice_lines(source, *s))
                .collect(),
            _ => slice_lines(source, unit.span).to_string(),
        })
    }
}
