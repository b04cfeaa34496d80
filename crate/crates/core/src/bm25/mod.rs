//! BM25 baselines over file or function documents.

mod localize;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::llm::LlmError;

pub use localize::{
    build_file_index, build_function_index, file_mode_localize, function_mode_localize, pack,
    FileModeOutcome,
};

#[derive(Debug, thiserror::Error)]
pub enum Bm25Error {
    #[error("unknown document {0}")]
    UnknownDoc(String),
    #[error("the index has no documents")]
    EmptyIndex,
    #[error("the query has no terms")]
    EmptyQuery,
    #[error("no file fits the {budget}-token budget (smallest is {smallest})")]
    NoFilesFit { budget: usize, smallest: usize },
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
    #[error("top_k must be at least 1")]
    InvalidTopK,
    #[error("LLM unavailable: {0}")]
    LlmUnavailable(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdfVariant {
    /// Classic Okapi: `ln((N − df + 0.5)/(df + 0.5))`.
    #[default]
    Rsj,
    /// BM25-Plus: `ln((N + 1)/df)` with the δ offset.
    RobertsonWalker,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub delta: f64,
    pub idf_variant: IdfVariant,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.5,
            b: 0.75,
            delta: 1.0,
            idf_variant: IdfVariant::Rsj,
        }
    }
}

impl Bm25Params {
    pub fn plus() -> Self {
        Bm25Params {
            idf_variant: IdfVariant::RobertsonWalker,
            ..Bm25Params::default()
        }
    }

    pub fn validate(&self) -> Result<(), Bm25Error> {
        if self.k1.is_nan() || self.k1 <= 0.0 {
            return Err(Bm25Error::InvalidParams(format!("k1 = {} must be > 0", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Bm25Error::InvalidParams(format!("b = {} must be in [0, 1]", self.b)));
        }
        if self.delta.is_nan() || self.delta < 0.0 {
            return Err(Bm25Error::InvalidParams(format!("delta = {} must be >= 0", self.delta)));
        }
        Ok(())
    }
}

/// Lowercased terms split on non-alphanumerics, underscores, camel-case
/// humps and letter/digit boundaries.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut terms = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        let chars: Vec<char> = word.chars().collect();
        let mut start = 0;
        for i in 1..=chars.len() {
            let boundary = i == chars.len() || {
                let (prev, cur) = (chars[i - 1], chars[i]);
                let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
                (prev.is_lowercase() && cur.is_uppercase())
                    || (prev.is_uppercase() && cur.is_uppercase() && next_lower)
                    || (prev.is_alphabetic() != cur.is_alphabetic())
            };
            if boundary {
                if i > start {
                    terms.push(chars[start..i].iter().collect::<String>().to_lowercase());
                }
                start = i;
            }
        }
    }
    terms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: usize,
    pub tf: usize,
}

/// Inverted index over named documents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    names: Vec<String>,
    lengths: Vec<usize>,
    postings: HashMap<String, Vec<Posting>>,
    avg_len: f64,
}

impl Bm25Index {
    /// Index `(name, text)` documents; tokenisation runs in parallel.
    pub fn build(docs: Vec<(String, String)>) -> Self {
        let tokenized: Vec<(String, Vec<String>)> = docs
            .into_par_iter()
            .map(|(name, text)| {
                let terms = tokenize(&text);
                (name, terms)
            })
            .collect();
        Self::from_terms(tokenized)
    }

    /// Index pre-tokenised documents.
    pub fn from_terms(docs: Vec<(String, Vec<String>)>) -> Self {
        let mut index = Bm25Index::default();
        for (doc, (name, terms)) in docs.into_iter().enumerate() {
            let mut tf: HashMap<String, usize> = HashMap::new();
            for term in &terms {
                *tf.entry(term.clone()).or_default() += 1;
            }
            for (term, count) in tf {
                index.postings.entry(term).or_default().push(Posting { doc, tf: count });
            }
            index.names.push(name);
            index.lengths.push(terms.len());
        }
        let total: usize = index.lengths.iter().sum();
        index.avg_len = if index.names.is_empty() {
            0.0
        } else {
            total as f64 / index.names.len() as f64
        };
        index
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn doc_id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn tf(&self, term: &str, doc: usize) -> usize {
        self.postings
            .get(term)
            .and_then(|p| p.iter().find(|p| p.doc == doc))
            .map_or(0, |p| p.tf)
    }

    pub fn doc_len(&self, doc: usize) -> usize {
        self.lengths[doc]
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    fn idf(&self, df: usize, params: &Bm25Params) -> f64 {
        let n = self.names.len() as f64;
        let df = df as f64;
        match params.idf_variant {
            IdfVariant::Rsj => ((n - df + 0.5) / (df + 0.5)).ln(),
            IdfVariant::RobertsonWalker => ((n + 1.0) / df).ln(),
        }
    }

    fn term_weight(&self, tf: usize, doc: usize, params: &Bm25Params) -> f64 {
        let tf = tf as f64;
        let norm = params.k1 * ((1.0 - params.b) + params.b * self.lengths[doc] as f64 / self.avg_len);
        let fraction = (params.k1 + 1.0) * tf / (norm + tf);
        match params.idf_variant {
            IdfVariant::Rsj => fraction,
            IdfVariant::RobertsonWalker => fraction + params.delta,
        }
    }

    fn score_id(&self, query: &[String], doc: usize, params: &Bm25Params) -> f64 {
        query
            .iter()
            .filter_map(|term| {
                let postings = self.postings.get(term)?;
                let tf = postings.iter().find(|p| p.doc == doc).map_or(0, |p| p.tf);
                Some(self.idf(postings.len(), params) * self.term_weight(tf, doc, params))
            })
            .sum()
    }

    /// Score of one document. Query terms absent from the corpus contribute
    /// nothing; repeated query terms count once per occurrence.
    pub fn score(&self, query: &[String], doc: &str, params: &Bm25Params) -> Result<f64, Bm25Error> {
        let id = self
            .doc_id(doc)
            .ok_or_else(|| Bm25Error::UnknownDoc(doc.to_string()))?;
        Ok(self.score_id(query, id, params))
    }

    /// The `top_k` best documents, by descending score, ties by name.
    pub fn rank(&self, query: &[String], params: &Bm25Params, top_k: usize) -> Result<Vec<(String, f64)>, Bm25Error> {
        if top_k == 0 {
            return Err(Bm25Error::InvalidTopK);
        }
        if self.is_empty() {
            return Err(Bm25Error::EmptyIndex);
        }
        params.validate()?;
        let mut scored: Vec<(usize, f64)> = (0..self.names.len())
            .map(|doc| (doc, self.score_id(query, doc, params)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.names[a.0].cmp(&self.names[b.0]))
        });
        scored.truncate(top_k);
        Ok(scored
            .into_iter()
            .map(|(doc, score)| (self.names[doc].clone(), score))
            .collect())
    }
}
