use serde::{Deserialize, Serialize};

use super::{expected_header, BoxError, SummaryError, SummaryNode, SummaryTree};
use crate::code_index::{CodeUnit, CodeUnitPath, CodeUnitTree, PathSegment};

/// Discrepancies between a summary tree and the code it claims to describe.
/// Each discrepancy lands in exactly one bucket.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Code units with no summary node.
    pub missing: Vec<CodeUnitPath>,
    /// Summary nodes with no code unit.
    pub orphaned: Vec<CodeUnitPath>,
    /// Parents whose shared children appear in a different order.
    pub misordered: Vec<CodeUnitPath>,
    pub mismatched_headers: Vec<CodeUnitPath>,
}

impl AlignmentReport {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
            && self.orphaned.is_empty()
            && self.misordered.is_empty()
            && self.mismatched_headers.is_empty()
    }

    pub fn len(&self) -> usize {
        self.missing.len() + self.orphaned.len() + self.misordered.len() + self.mismatched_headers.len()
    }
}

/// Children the summary is expected to carry for a code unit. Degraded
/// files are summarised at file level only.
fn code_children<'a>(unit: &'a CodeUnit, tree: &CodeUnitTree) -> &'a [CodeUnit] {
    if tree.degraded && unit.kind == crate::code_index::CodeUnitKind::File {
        &[]
    } else {
        &unit.children
    }
}

/// Compare `summary` against `code` node by node in source order.
pub fn align(summary: &SummaryTree, code: &CodeUnitTree) -> AlignmentReport {
    let mut report = AlignmentReport::default();
    align_node(
        &summary.root,
        &code.root,
        &code.file_path(),
        code,
        &mut report,
    );
    report
}

fn align_node(
    node: &SummaryNode,
    unit: &CodeUnit,
    at: &CodeUnitPath,
    code: &CodeUnitTree,
    report: &mut AlignmentReport,
) {
    if node.header != expected_header(unit, &code.path) {
        report.mismatched_headers.push(at.clone());
    }
    let code_kids = code_children(unit, code);
    let code_keys: Vec<PathSegment> = code_kids.iter().map(CodeUnit::segment).collect();
    let summary_keys = node.child_segments();

    for key in &code_keys {
        if !summary_keys.contains(key) {
            report.missing.push(at.child(key.clone()));
        }
    }
    for key in &summary_keys {
        if !code_keys.contains(key) {
            report.orphaned.push(at.child(key.clone()));
        }
    }
    let shared_in_code: Vec<&PathSegment> =
        code_keys.iter().filter(|k| summary_keys.contains(k)).collect();
    let shared_in_summary: Vec<&PathSegment> =
        summary_keys.iter().filter(|k| code_keys.contains(k)).collect();
    if shared_in_code != shared_in_summary {
        report.misordered.push(at.clone());
    }

    for (key, child) in summary_keys.iter().zip(&node.children) {
        if let Some(i) = code_keys.iter().position(|k| k == key) {
            align_node(child, &code_kids[i], &at.child(key.clone()), code, report);
        }
    }
}

/// Bring `summary` into alignment with `code`: reorder shared nodes into
/// code order, drop orphans, rewrite stale headers, and fill missing nodes
/// through `regenerate`. Nodes the callback returns are themselves conformed,
/// so gaps inside them trigger further (deeper) callbacks.
pub fn repair<F>(
    summary: &SummaryTree,
    code: &CodeUnitTree,
    mut regenerate: F,
) -> Result<SummaryTree, SummaryError>
where
    F: FnMut(&CodeUnitPath, &CodeUnit) -> Result<SummaryNode, BoxError>,
{
    let root = conform(
        &summary.root,
        &code.root,
        &code.file_path(),
        code,
        &mut regenerate,
    )?;
    Ok(SummaryTree {
        path: summary.path.clone(),
        root,
        digest: code.digest.clone(),
        meta: summary.meta.clone(),
        degraded: code.degraded,
    })
}

fn conform<F>(
    node: &SummaryNode,
    unit: &CodeUnit,
    at: &CodeUnitPath,
    code: &CodeUnitTree,
    regenerate: &mut F,
) -> Result<SummaryNode, SummaryError>
where
    F: FnMut(&CodeUnitPath, &CodeUnit) -> Result<SummaryNode, BoxError>,
{
    let summary_keys = node.child_segments();
    let mut children = Vec::new();
    for child_unit in code_children(unit, code) {
        let key = child_unit.segment();
        let path = at.child(key.clone());
        let existing = summary_keys
            .iter()
            .position(|k| *k == key)
            .map(|i| node.children[i].clone());
        let source = match existing {
            Some(existing) => existing,
            None => regenerate(&path, child_unit).map_err(|source| {
                SummaryError::RegenerationFailed {
                    path: path.clone(),
                    source,
                }
            })?,
        };
        children.push(conform(&source, child_unit, &path, code, regenerate)?);
    }
    Ok(SummaryNode {
        kind: unit.kind,
        name: unit.name.clone(),
        header: expected_header(unit, &code.path),
        summary: node.summary.clone(),
        children,
    })
}
