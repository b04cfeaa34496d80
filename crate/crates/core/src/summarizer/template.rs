//! Rule-based extraction of the summary template from LLM output.
//!
//! Grammar: header lines `FILE <name> (<path>)`, `CLASS <name> [attrs: ...]`,
//! `FUNCTION <name><signature>` and `__MAIN__`; nesting by leading
//! indentation; summary prose on the lines after a header, indented deeper
//! than it. Text before the first header and after the block (a line at or
//! left of the block's indentation that is not a header, or a closing code
//! fence) is ignored.

use std::sync::LazyLock;

use regex::Regex;

use crate::code_index::CodeUnitKind;
use crate::summary::{GenerationMeta, SummaryNode, SummaryTree};

static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?P<indent> *)(?:(?:[-*] )?)(?:FILE (?P<fname>\S+) \((?P<fpath>[^)]+)\)|CLASS (?P<cname>[A-Za-z_]\w*)(?: \[attrs:[^\]]*\])?|FUNCTION (?P<func>[A-Za-z_]\w*)\s*\(.*|__MAIN__)\s*$",
    )
    .expect("header regex")
});

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no summary template found in LLM output")]
pub struct Unparseable;

struct Header {
    indent: usize,
    node: SummaryNode,
    file_path: Option<String>,
}

fn header(line: &str) -> Option<Header> {
    let caps = HEADER.captures(line)?;
    let indent = caps["indent"].len();
    let text = line.trim().trim_start_matches(['-', '*']).trim().to_string();
    let (kind, name, file_path) = if let Some(path) = caps.name("fpath") {
        (CodeUnitKind::File, String::new(), Some(path.as_str().to_string()))
    } else if let Some(name) = caps.name("cname") {
        (CodeUnitKind::Class, name.as_str().to_string(), None)
    } else if let Some(name) = caps.name("func") {
        (CodeUnitKind::Function, name.as_str().to_string(), None)
    } else {
        (CodeUnitKind::Main, String::new(), None)
    };
    Some(Header {
        indent,
        node: SummaryNode::new(kind, name, normalize_header(&text)),
        file_path,
    })
}

fn normalize_header(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start_matches(' ').len()
}

/// Top-level nodes of the first template block, with prose attached.
fn parse_block(text: &str) -> Vec<(SummaryNode, Option<String>)> {
    // Arena of (indent, node, parent, file path); assembled at the end.
    let mut arena: Vec<(usize, SummaryNode, Option<usize>, Option<String>)> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut base_indent = None;
    let mut in_fence = false;

    for raw in text.lines() {
        let line = raw.trim_end().replace('\t', "    ");
        let trimmed = line.trim();
        if trimmed.starts_with("```") {
            if base_indent.is_some() {
                break;
            }
            in_fence = !in_fence;
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        if let Some(h) = header(&line) {
            if let Some(base) = base_indent {
                let top_is_file = stack
                    .first()
                    .is_some_and(|&i| arena[i].1.kind == CodeUnitKind::File);
                if h.node.kind == CodeUnitKind::File && (top_is_file || h.indent <= base) && !arena.is_empty() {
                    break;
                }
                if h.indent < base {
                    break;
                }
            } else {
                base_indent = Some(h.indent);
            }
            while stack.last().is_some_and(|&i| arena[i].0 >= h.indent) {
                stack.pop();
            }
            let parent = stack.last().copied();
            arena.push((h.indent, h.node, parent, h.file_path));
            stack.push(arena.len() - 1);
            continue;
        }
        let Some(base) = base_indent else { continue };
        let Some(&current) = stack.last() else { continue };
        if indent_of(&line) <= base && !in_fence {
            break;
        }
        let summary = &mut arena[current].1.summary;
        if !summary.is_empty() {
            summary.push(' ');
        }
        summary.push_str(trimmed);
    }

    // Attach children to parents, last first so indices stay valid.
    let mut nodes: Vec<Option<SummaryNode>> = Vec::with_capacity(arena.len());
    let mut meta = Vec::with_capacity(arena.len());
    for (_, node, parent, path) in arena {
        nodes.push(Some(node));
        meta.push((parent, path));
    }
    for i in (0..nodes.len()).rev() {
        if let Some(parent) = meta[i].0 {
            let child = nodes[i].take().expect("each node attached once");
            nodes[parent]
                .as_mut()
                .expect("parent precedes child")
                .children
                .insert(0, child);
        }
    }
    nodes
        .into_iter()
        .zip(meta)
        .filter_map(|(node, (_, path))| node.map(|n| (n, path)))
        .collect()
}

/// Parse a file template (`FILE` header first) into an unvalidated tree.
/// The digest is left empty.
pub fn parse_llm_summary(text: &str) -> Result<SummaryTree, Unparseable> {
    let (root, path) = parse_block(text)
        .into_iter()
        .find(|(n, _)| n.kind == CodeUnitKind::File)
        .ok_or(Unparseable)?;
    Ok(SummaryTree {
        path: path.unwrap_or_default(),
        root,
        digest: String::new(),
        meta: GenerationMeta::default(),
        degraded: false,
    })
}

/// Parse the nodes of a unit-level answer. A `FILE` wrapper, when present,
/// is looked through.
pub fn parse_llm_units(text: &str) -> Result<Vec<SummaryNode>, Unparseable> {
    let mut out = Vec::new();
    for (node, _) in parse_block(text) {
        if node.kind == CodeUnitKind::File {
            out.extend(node.children);
        } else {
            out.push(node);
        }
    }
    if out.is_empty() {
        Err(Unparseable)
    } else {
        Ok(out)
    }
}
