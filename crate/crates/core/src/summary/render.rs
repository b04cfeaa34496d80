use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{SummaryError, SummaryNode, SummaryStore, SummaryTree};

/// One nesting level in the template.
pub const INDENT: &str = "  ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RenderLevel {
    /// `<path> — <file summary>`, one line per file.
    FileOneLiner,
    /// The whole template per file.
    FullFile,
}

/// Render the requested files (all files when `files` is `None`) in path
/// order.
pub fn render(
    store: &SummaryStore,
    level: RenderLevel,
    files: Option<&[String]>,
) -> Result<String, SummaryError> {
    let mut selected: Vec<&SummaryTree> = match files {
        None => store.trees().collect(),
        Some(files) => files
            .iter()
            .map(|f| store.get(f).ok_or_else(|| SummaryError::UnknownFile(f.clone())))
            .collect::<Result<_, _>>()?,
    };
    selected.sort_by(|a, b| a.path.cmp(&b.path));
    selected.dedup_by(|a, b| a.path == b.path);

    let mut out = String::new();
    for (i, tree) in selected.iter().enumerate() {
        match level {
            RenderLevel::FileOneLiner => one_liner(tree, &mut out),
            RenderLevel::FullFile => {
                if i > 0 {
                    out.push('\n');
                }
                out.push_str(&render_tree(tree));
            }
        }
    }
    Ok(out)
}

pub(crate) fn one_liner(tree: &SummaryTree, out: &mut String) {
    let _ = writeln!(out, "{} — {}", tree.path, flatten(&tree.root.summary));
}

fn flatten(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The template for one file: each header at two spaces per nesting level,
/// its summary one level deeper on the following line.
pub fn render_tree(tree: &SummaryTree) -> String {
    let mut out = String::new();
    render_node(&tree.root, 0, &mut out);
    out
}

fn render_node(node: &SummaryNode, depth: usize, out: &mut String) {
    let pad = INDENT.repeat(depth);
    let _ = writeln!(out, "{pad}{}", node.header);
    for line in node.summary.lines().filter(|l| !l.trim().is_empty()) {
        let _ = writeln!(out, "{pad}{INDENT}{}", line.trim());
    }
    for child in &node.children {
        render_node(child, depth + 1, out);
    }
}
