//! Persistence for summary trees.
//!
//! On disk a store is a directory mirroring the repository layout: every
//! `dir/file.py` gets `dir/file.py.summary.json` holding a
//! [`SummaryDocument`], and the top-level `index` file carries one JSON
//! record per line, `{path, digest, one_liner}`, so the file-level view can
//! be read without touching the per-file documents.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{file_header, GenerationMeta, SummaryError, SummaryNode, SummaryTree};
use crate::code_index::CodeUnitKind;

pub const INDEX_FILE: &str = "index";
const DOC_SUFFIX: &str = ".summary.json";

/// Per-unit record of a summary document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitDocument {
    pub kind: CodeUnitKind,
    pub name: String,
    pub header: String,
    pub summary: String,
    #[serde(default)]
    pub children: Vec<UnitDocument>,
}

/// One file's summary as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub path: String,
    pub digest: String,
    pub summary: String,
    pub units: Vec<UnitDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<String>,
    #[serde(default)]
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub path: String,
    pub digest: String,
    pub one_liner: String,
}

fn unit_to_doc(node: &SummaryNode) -> UnitDocument {
    UnitDocument {
        kind: node.kind,
        name: node.name.clone(),
        header: node.header.clone(),
        summary: node.summary.clone(),
        children: node.children.iter().map(unit_to_doc).collect(),
    }
}

fn doc_to_unit(doc: UnitDocument) -> Result<SummaryNode, String> {
    if doc.kind == CodeUnitKind::File {
        return Err(format!("unit `{}` has kind file below the root", doc.name));
    }
    Ok(SummaryNode {
        kind: doc.kind,
        name: doc.name,
        header: doc.header,
        summary: doc.summary,
        children: doc
            .children
            .into_iter()
            .map(doc_to_unit)
            .collect::<Result<_, _>>()?,
    })
}

impl From<&SummaryTree> for SummaryDocument {
    fn from(tree: &SummaryTree) -> Self {
        let default_header = file_header(&tree.path);
        SummaryDocument {
            path: tree.path.clone(),
            digest: tree.digest.clone(),
            summary: tree.root.summary.clone(),
            units: tree.root.children.iter().map(unit_to_doc).collect(),
            header: (tree.root.header != default_header).then(|| tree.root.header.clone()),
            model: tree.meta.model.clone(),
            generated_at: tree.meta.generated_at.clone(),
            degraded: tree.degraded,
        }
    }
}

impl TryFrom<SummaryDocument> for SummaryTree {
    type Error = String;

    fn try_from(doc: SummaryDocument) -> Result<Self, String> {
        let header = doc.header.unwrap_or_else(|| file_header(&doc.path));
        Ok(SummaryTree {
            root: SummaryNode {
                kind: CodeUnitKind::File,
                name: String::new(),
                header,
                summary: doc.summary,
                children: doc
                    .units
                    .into_iter()
                    .map(doc_to_unit)
                    .collect::<Result<_, _>>()?,
            },
            path: doc.path,
            digest: doc.digest,
            meta: GenerationMeta {
                model: doc.model,
                generated_at: doc.generated_at,
            },
            degraded: doc.degraded,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StoreDocument {
    files: Vec<SummaryDocument>,
}

/// All summary trees of a repository version, keyed by file path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SummaryStore {
    files: BTreeMap<String, SummaryTree>,
}

fn json_offset(bytes: &[u8], err: &serde_json::Error) -> usize {
    if err.line() == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, line) in bytes.split_inclusive(|b| *b == b'\n').enumerate() {
        if i + 1 == err.line() {
            return (offset + err.column().saturating_sub(1)).min(bytes.len());
        }
        offset += line.len();
    }
    bytes.len()
}

fn malformed(offset: usize, message: impl Into<String>) -> SummaryError {
    SummaryError::MalformedStore {
        offset,
        message: message.into(),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp~");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(tmp, path)
}

impl SummaryStore {
    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn get(&self, path: &str) -> Option<&SummaryTree> {
        self.files.get(path)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut SummaryTree> {
        self.files.get_mut(path)
    }

    pub fn insert(&mut self, tree: SummaryTree) -> Option<SummaryTree> {
        self.files.insert(tree.path.clone(), tree)
    }

    pub fn remove(&mut self, path: &str) -> Option<SummaryTree> {
        self.files.remove(path)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.files.contains_key(path)
    }

    /// Trees in path order.
    pub fn trees(&self) -> impl Iterator<Item = &SummaryTree> {
        self.files.values()
    }

    pub fn paths(&self) -> impl Iterator<Item = &String> {
        self.files.keys()
    }

    pub fn index_records(&self) -> Vec<IndexRecord> {
        self.trees()
            .map(|t| IndexRecord {
                path: t.path.clone(),
                digest: t.digest.clone(),
                one_liner: t.root.summary.split_whitespace().collect::<Vec<_>>().join(" "),
            })
            .collect()
    }

    pub fn serialize(&self) -> Vec<u8> {
        let doc = StoreDocument {
            files: self.trees().map(SummaryDocument::from).collect(),
        };
        serde_json::to_vec_pretty(&doc).expect("summary store serializes")
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, SummaryError> {
        let doc: StoreDocument = serde_json::from_slice(bytes)
            .map_err(|e| malformed(json_offset(bytes, &e), e.to_string()))?;
        let mut store = SummaryStore::default();
        for file in doc.files {
            let path = file.path.clone();
            let tree = SummaryTree::try_from(file).map_err(|m| malformed(0, m))?;
            if store.insert(tree).is_some() {
                return Err(malformed(0, format!("duplicate file {path}")));
            }
        }
        Ok(store)
    }

    fn doc_path(root: &Path, file: &str) -> PathBuf {
        root.join(format!("{file}{DOC_SUFFIX}"))
    }

    /// Write one file's document and refresh the index.
    pub fn save_file(&self, root: &Path, file: &str) -> Result<(), SummaryError> {
        let tree = self
            .get(file)
            .ok_or_else(|| SummaryError::UnknownFile(file.to_string()))?;
        let bytes = serde_json::to_vec_pretty(&SummaryDocument::from(tree))
            .expect("summary document serializes");
        write_atomic(&Self::doc_path(root, file), &bytes)?;
        self.save_index(root)
    }

    fn save_index(&self, root: &Path) -> Result<(), SummaryError> {
        let mut index = String::new();
        for record in self.index_records() {
            index.push_str(&serde_json::to_string(&record).expect("index record serializes"));
            index.push('\n');
        }
        write_atomic(&root.join(INDEX_FILE), index.as_bytes())?;
        Ok(())
    }

    /// Write the whole store as a directory, removing documents of files
    /// that are no longer present.
    pub fn save_dir(&self, root: &Path) -> Result<(), SummaryError> {
        fs::create_dir_all(root)?;
        if let Ok(old) = Self::load_index(root) {
            for record in old.iter().filter(|r| !self.contains(&r.path)) {
                let stale = Self::doc_path(root, &record.path);
                if stale.exists() {
                    fs::remove_file(stale)?;
                }
            }
        }
        for tree in self.trees() {
            let bytes = serde_json::to_vec_pretty(&SummaryDocument::from(tree))
                .expect("summary document serializes");
            write_atomic(&Self::doc_path(root, &tree.path), &bytes)?;
        }
        self.save_index(root)
    }

    pub fn load_index(root: &Path) -> Result<Vec<IndexRecord>, SummaryError> {
        let bytes = fs::read(root.join(INDEX_FILE))?;
        let mut records = Vec::new();
        let mut offset = 0;
        for line in bytes.split_inclusive(|b| *b == b'\n') {
            let trimmed = line.trim_ascii();
            if !trimmed.is_empty() {
                let record = serde_json::from_slice(trimmed)
                    .map_err(|e| malformed(offset + e.column().saturating_sub(1), e.to_string()))?;
                records.push(record);
            }
            offset += line.len();
        }
        Ok(records)
    }

    pub fn load_dir(root: &Path) -> Result<Self, SummaryError> {
        let mut store = SummaryStore::default();
        for record in Self::load_index(root)? {
            let bytes = fs::read(Self::doc_path(root, &record.path))?;
            let doc: SummaryDocument = serde_json::from_slice(&bytes)
                .map_err(|e| malformed(json_offset(&bytes, &e), format!("{}: {e}", record.path)))?;
            if doc.digest != record.digest || doc.path != record.path {
                return Err(malformed(0, format!("index disagrees with {}", record.path)));
            }
            store.insert(SummaryTree::try_from(doc).map_err(|m| malformed(0, m))?);
        }
        Ok(store)
    }
}
