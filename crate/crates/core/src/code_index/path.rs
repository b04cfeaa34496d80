use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const MAIN_NAME: &str = "__MAIN__";
const SEPARATOR: &str = "::";

/// One step below a file in a [`CodeUnitPath`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PathSegment {
    Named { name: String, ordinal: usize },
    Main,
}

impl PathSegment {
    pub fn named(name: impl Into<String>) -> Self {
        PathSegment::Named {
            name: name.into(),
            ordinal: 0,
        }
    }

    pub fn is_main(&self) -> bool {
        matches!(self, PathSegment::Main)
    }
}

impl fmt::Display for PathSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathSegment::Main => f.write_str(MAIN_NAME),
            PathSegment::Named { name, ordinal: 0 } => f.write_str(name),
            PathSegment::Named { name, ordinal } => write!(f, "{name}#{ordinal}"),
        }
    }
}

/// Stable address of a code unit: a repository-relative file path followed by
/// the names of the enclosing classes/functions.
///
/// The canonical text form is `dir/file.py::Outer::inner`, with `::__MAIN__`
/// for the module-level pseudo-unit and a `#k` suffix for the k-th (k > 0)
/// same-named sibling. Equality, hashing and ordering all follow that text
/// form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CodeUnitPath {
    pub file: String,
    pub segments: Vec<PathSegment>,
}

impl CodeUnitPath {
    pub fn file(file: impl Into<String>) -> Self {
        CodeUnitPath {
            file: file.into(),
            segments: Vec::new(),
        }
    }

    pub fn main(file: impl Into<String>) -> Self {
        CodeUnitPath {
            file: file.into(),
            segments: vec![PathSegment::Main],
        }
    }

    pub fn child(&self, segment: PathSegment) -> Self {
        let mut segments = self.segments.clone();
        segments.push(segment);
        CodeUnitPath {
            file: self.file.clone(),
            segments,
        }
    }

    pub fn parent(&self) -> Option<Self> {
        if self.segments.is_empty() {
            return None;
        }
        let mut segments = self.segments.clone();
        segments.pop();
        Some(CodeUnitPath {
            file: self.file.clone(),
            segments,
        })
    }

    pub fn is_file(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn is_main(&self) -> bool {
        self.segments.last().is_some_and(PathSegment::is_main)
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    /// True when `self` equals `other` or lies underneath it.
    pub fn starts_with(&self, other: &CodeUnitPath) -> bool {
        self.file == other.file
            && self.segments.len() >= other.segments.len()
            && self.segments[..other.segments.len()] == other.segments[..]
    }

    pub fn with_file(&self, file: impl Into<String>) -> Self {
        CodeUnitPath {
            file: file.into(),
            segments: self.segments.clone(),
        }
    }
}

impl fmt::Display for CodeUnitPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.file)?;
        for segment in &self.segments {
            write!(f, "{SEPARATOR}{segment}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid code unit path `{0}`")]
pub struct InvalidPath(pub String);

impl FromStr for CodeUnitPath {
    type Err = InvalidPath;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let text = text.trim();
        let mut parts = text.split(SEPARATOR);
        let file = parts.next().unwrap_or_default().trim();
        if file.is_empty() || file.contains(char::is_whitespace) {
            return Err(InvalidPath(text.to_string()));
        }
        let mut segments = Vec::new();
        for part in parts {
            let part = part.trim();
            if part == MAIN_NAME {
                segments.push(PathSegment::Main);
                continue;
            }
            let (name, ordinal) = match part.rsplit_once('#') {
                Some((name, k)) => (
                    name,
                    k.parse::<usize>()
                        .map_err(|_| InvalidPath(text.to_string()))?,
                ),
                None => (part, 0),
            };
            if !is_identifier(name) {
                return Err(InvalidPath(text.to_string()));
            }
            segments.push(PathSegment::Named {
                name: name.to_string(),
                ordinal,
            });
        }
        Ok(CodeUnitPath {
            file: file.to_string(),
            segments,
        })
    }
}

pub(crate) fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_alphanumeric())
}

impl Ord for CodeUnitPath {
    fn cmp(&self, other: &Self) -> Ordering {
        self.to_string().cmp(&other.to_string())
    }
}

impl PartialOrd for CodeUnitPath {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for CodeUnitPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CodeUnitPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
