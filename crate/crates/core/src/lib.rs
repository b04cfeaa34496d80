//! Hierarchical code summaries, summary-driven bug localisation, BM25
//! baselines and localisation metrics for Python repositories.

pub mod bm25;
pub mod code_index;
pub mod config;
pub mod diff;
pub mod eval;
pub mod llm;
pub mod meta_rag;
pub mod repo;
pub mod summarizer;
pub mod summary;
pub mod tasks;
pub mod tokens;
pub mod updater;
