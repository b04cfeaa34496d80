//! Summary trees that mirror code-unit trees node for node, plus the store
//! that holds one of them per source file.

mod align;
mod render;
mod store;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::code_index::{CodeUnit, CodeUnitKind, CodeUnitPath, CodeUnitTree, PathSegment};

pub use align::{align, repair, AlignmentReport};
pub use render::{render, render_tree, RenderLevel, INDENT};
pub use store::{IndexRecord, SummaryDocument, SummaryStore, UnitDocument};

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum SummaryError {
    #[error("no summary node at {0}")]
    PathNotFound(CodeUnitPath),
    #[error("position {position} out of range for {parent} ({len} children)")]
    PositionOutOfRange {
        parent: CodeUnitPath,
        position: usize,
        len: usize,
    },
    #[error("file {0} is not in the summary store")]
    UnknownFile(String),
    #[error("malformed summary store at byte {offset}: {message}")]
    MalformedStore { offset: usize, message: String },
    #[error("regenerating summary for {path} failed: {source}")]
    RegenerationFailed { path: CodeUnitPath, source: BoxError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const EMPTY_MODULE_SUMMARY: &str = "empty module";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryNode {
    pub kind: CodeUnitKind,
    pub name: String,
    pub header: String,
    pub summary: String,
    pub children: Vec<SummaryNode>,
}

impl SummaryNode {
    pub fn new(kind: CodeUnitKind, name: impl Into<String>, header: impl Into<String>) -> Self {
        SummaryNode {
            kind,
            name: name.into(),
            header: header.into(),
            summary: String::new(),
            children: Vec::new(),
        }
    }

    pub fn with_summary(mut self, summary: impl Into<String>) -> Self {
        self.summary = summary.into();
        self
    }

    /// Path segments of the children, with ordinals counted among
    /// same-named siblings in their current order.
    pub fn child_segments(&self) -> Vec<PathSegment> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        self.children
            .iter()
            .map(|child| match child.kind {
                CodeUnitKind::Main => PathSegment::Main,
                _ => {
                    let k = seen.entry(child.name.as_str()).or_default();
                    let segment = PathSegment::Named {
                        name: child.name.clone(),
                        ordinal: *k,
                    };
                    *k += 1;
                    segment
                }
            })
            .collect()
    }

    pub fn child_index(&self, segment: &PathSegment) -> Option<usize> {
        self.child_segments().iter().position(|s| s == segment)
    }

    pub fn count(&self) -> usize {
        1 + self.children.iter().map(SummaryNode::count).sum::<usize>()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryTree {
    pub path: String,
    pub root: SummaryNode,
    /// Digest of the code version this tree summarises.
    pub digest: String,
    pub meta: GenerationMeta,
    #[serde(default)]
    pub degraded: bool,
}

impl SummaryTree {
    pub fn file_path(&self) -> CodeUnitPath {
        CodeUnitPath::file(&self.path)
    }

    pub fn node(&self, path: &CodeUnitPath) -> Option<&SummaryNode> {
        if path.file != self.path {
            return None;
        }
        let mut node = &self.root;
        for segment in &path.segments {
            let i = node.child_index(segment)?;
            node = &node.children[i];
        }
        Some(node)
    }

    pub fn node_mut(&mut self, path: &CodeUnitPath) -> Option<&mut SummaryNode> {
        if path.file != self.path {
            return None;
        }
        let mut node = &mut self.root;
        for segment in &path.segments {
            let i = node.child_index(segment)?;
            node = &mut node.children[i];
        }
        Some(node)
    }

    /// Insert `node` as child number `position` of `parent`.
    pub fn inject(
        &mut self,
        parent: &CodeUnitPath,
        node: SummaryNode,
        position: usize,
    ) -> Result<(), SummaryError> {
        let target = self
            .node_mut(parent)
            .ok_or_else(|| SummaryError::PathNotFound(parent.clone()))?;
        if position > target.children.len() {
            return Err(SummaryError::PositionOutOfRange {
                parent: parent.clone(),
                position,
                len: target.children.len(),
            });
        }
        target.children.insert(position, node);
        Ok(())
    }

    pub fn remove(&mut self, path: &CodeUnitPath) -> Result<SummaryNode, SummaryError> {
        let parent = path
            .parent()
            .ok_or_else(|| SummaryError::PathNotFound(path.clone()))?;
        let segment = path.segments.last().expect("non-root path");
        let node = self
            .node_mut(&parent)
            .ok_or_else(|| SummaryError::PathNotFound(path.clone()))?;
        let i = node
            .child_index(segment)
            .ok_or_else(|| SummaryError::PathNotFound(path.clone()))?;
        Ok(node.children.remove(i))
    }

    /// Every node below the root with its path, depth first.
    pub fn nodes(&self) -> Vec<(CodeUnitPath, &SummaryNode)> {
        fn walk<'a>(
            node: &'a SummaryNode,
            at: &CodeUnitPath,
            out: &mut Vec<(CodeUnitPath, &'a SummaryNode)>,
        ) {
            for (segment, child) in node.child_segments().into_iter().zip(&node.children) {
                let path = at.child(segment);
                out.push((path.clone(), child));
                walk(child, &path, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &self.file_path(), &mut out);
        out
    }

    /// Move the tree to another file path, rewriting the file header.
    pub fn relocate(&mut self, new_path: &str) {
        self.path = new_path.to_string();
        self.root.header = file_header(new_path);
    }
}

pub fn file_header(path: &str) -> String {
    let name = path.rsplit('/').next().unwrap_or(path);
    format!("FILE {name} ({path})")
}

/// The header line the template carries for a code unit.
pub fn expected_header(unit: &CodeUnit, file_path: &str) -> String {
    match unit.kind {
        CodeUnitKind::File => file_header(file_path),
        CodeUnitKind::Class if unit.signature.is_empty() => format!("CLASS {}", unit.name),
        CodeUnitKind::Class => format!("CLASS {} [attrs: {}]", unit.name, unit.signature),
        CodeUnitKind::Function => format!("FUNCTION {}{}", unit.name, unit.signature),
        CodeUnitKind::Main => crate::code_index::MAIN_NAME.to_string(),
    }
}

/// A node for `unit` (and its descendants) with placeholder summaries.
pub fn mechanical_node(unit: &CodeUnit, file_path: &str) -> SummaryNode {
    let summary = match unit.kind {
        CodeUnitKind::File => format!("Module {file_path}."),
        CodeUnitKind::Main => "Module-level statements.".to_string(),
        kind => format!("Summary of {kind} {}.", unit.name),
    };
    SummaryNode {
        kind: unit.kind,
        name: unit.name.clone(),
        header: expected_header(unit, file_path),
        summary,
        children: unit
            .children
            .iter()
            .map(|c| mechanical_node(c, file_path))
            .collect(),
    }
}

/// Summary tree with placeholder text, structurally identical to `code`.
pub fn mechanical_summary(code: &CodeUnitTree) -> SummaryTree {
    let mut root = mechanical_node(&code.root, &code.path);
    if code.degraded {
        root.children.clear();
    }
    if code.root.children.is_empty() && !code.degraded {
        root.summary = EMPTY_MODULE_SUMMARY.to_string();
    }
    SummaryTree {
        path: code.path.clone(),
        root,
        digest: code.digest.clone(),
        meta: GenerationMeta {
            model: "mechanical".into(),
            generated_at: None,
        },
        degraded: code.degraded,
    }
}
