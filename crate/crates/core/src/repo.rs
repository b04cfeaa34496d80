//! The Python sources of one repository version.

use std::collections::BTreeMap;
use std::path::Path;

use crate::code_index::CodeUnitTree;
use crate::diff::{self, DiffError, FilePatch, FileStatus};

const SKIPPED_DIRS: &[&str] = &[".git", ".hg", ".tox", ".venv", "venv", "node_modules", "__pycache__", "build", "dist"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub text: String,
    pub tree: CodeUnitTree,
}

impl SourceFile {
    pub fn new(path: &str, text: impl Into<String>) -> Self {
        let text = text.into();
        let tree = CodeUnitTree::index(&text, path);
        SourceFile { text, tree }
    }
}

/// Repository-relative path → parsed file, Python files only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Snapshot {
    files: BTreeMap<String, SourceFile>,
}

pub fn is_python(path: &str) -> bool {
    path.ends_with(".py")
}

impl Snapshot {
    pub fn new() -> Self {
        Snapshot::default()
    }

    pub fn from_texts<'a>(files: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut snapshot = Snapshot::new();
        for (path, text) in files {
            snapshot.insert(path, text);
        }
        snapshot
    }

    /// Every `.py` file below `root`, skipping VCS and environment folders.
    pub fn load_dir(root: &Path) -> std::io::Result<Self> {
        let mut snapshot = Snapshot::new();
        let walker = walkdir::WalkDir::new(root)
            .sort_by_file_name()
            .into_iter()
            .filter_entry(|e| {
                e.depth() == 0
                    || !(e.file_type().is_dir()
                        && e.file_name().to_str().is_some_and(|n| SKIPPED_DIRS.contains(&n)))
            });
        for entry in walker {
            let entry = entry.map_err(std::io::Error::other)?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(root)
                .expect("walk stays under root")
                .to_string_lossy()
                .replace('\\', "/");
            if !is_python(&rel) {
                continue;
            }
            let bytes = std::fs::read(entry.path())?;
            let (tree, text) = CodeUnitTree::index_bytes(&bytes, &rel);
            snapshot.files.insert(rel, SourceFile { text, tree });
        }
        Ok(snapshot)
    }

    pub fn insert(&mut self, path: &str, text: impl Into<String>) {
        self.files.insert(path.to_string(), SourceFile::new(path, text));
    }

    pub fn remove(&mut self, path: &str) -> Option<SourceFile> {
        self.files.remove(path)
    }

    pub fn get(&self, path: &str) -> Option<&SourceFile> {
        self.files.get(path)
    }

    pub fn paths(&self) -> impl Iterator<Item = &String> {
        self.files.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &SourceFile)> {
        self.files.iter()
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// The version obtained by applying `patches` (non-Python entries are
    /// ignored).
    pub fn apply(&self, patches: &[FilePatch]) -> Result<Snapshot, DiffError> {
        let mut next = self.clone();
        for patch in patches {
            let old = patch.old_path.as_deref().filter(|p| is_python(p));
            let new = patch.new_path.as_deref().filter(|p| is_python(p));
            let pre = match old {
                Some(path) => {
                    let file = self.get(path).ok_or_else(|| DiffError::PatchMismatch {
                        file: path.to_string(),
                        hunk: 0,
                        message: "file does not exist".into(),
                    })?;
                    file.text.as_str()
                }
                None => "",
            };
            if let Some(path) = old {
                next.remove(path);
            }
            if patch.status == FileStatus::Deleted {
                continue;
            }
            if let Some(path) = new {
                next.insert(path, diff::apply(pre, patch)?);
            }
        }
        Ok(next)
    }
}
