//! The summary agent: asks the LLM for template-shaped summaries of files
//! and units, parses them, and conforms them to the code structure.

mod prompts;
mod template;

use crate::code_index::{
    parse_file, CodeUnit, CodeUnitKind, CodeUnitPath, CodeUnitTree, IndexError,
};
use crate::llm::{LlmClient, LlmError, LlmRequest};
use crate::summary::{
    align, expected_header, file_header, render_tree, repair, AlignmentReport, GenerationMeta,
    SummaryError, SummaryNode, SummaryTree, EMPTY_MODULE_SUMMARY,
};
use crate::tokens::TokenCounter;

pub use prompts::{PromptSet, PromptTemplate, UnfilledPlaceholder, TEMPLATE_EXAMPLE};
pub use template::{parse_llm_summary, parse_llm_units, Unparseable};

const PLACEHOLDER_SUMMARY: &str = "No description provided.";
const CORRECTION: &str = "\n\nYour previous answer did not follow the template. Answer again using only the template format shown above.";

#[derive(Debug, thiserror::Error)]
pub enum SummarizerError {
    #[error("LLM unavailable: {0}")]
    LlmUnavailable(#[from] LlmError),
    #[error("unparseable summary for {0}")]
    UnparseableSummary(String),
    #[error("summary of {path} still misaligned after {rounds} rounds ({} discrepancies)", report.len())]
    AlignmentUnrepairable {
        path: String,
        rounds: usize,
        report: Box<AlignmentReport>,
    },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Prompt(#[from] UnfilledPlaceholder),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummarizerConfig {
    pub model: String,
    /// Largest prompt (system + user text) sent in one request.
    pub prompt_budget: usize,
    pub max_repair_rounds: usize,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Recorded as `generated_at`; `None` keeps replay output byte-stable.
    pub stamp: Option<String>,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        SummarizerConfig {
            model: "gpt-4o".into(),
            prompt_budget: 100_000,
            max_repair_rounds: 3,
            temperature: 0.0,
            max_output_tokens: 4096,
            stamp: None,
        }
    }
}

pub struct Summarizer<'a> {
    llm: &'a dyn LlmClient,
    counter: &'a dyn TokenCounter,
    config: SummarizerConfig,
    prompts: PromptSet,
}

fn dedent(code: &str) -> String {
    let indent = code
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    code.split_inclusive('\n')
        .map(|l| if l.len() >= indent && l[..indent].trim().is_empty() { &l[indent..] } else { l.trim_start() })
        .collect()
}

fn first_line(text: &str) -> Option<String> {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with("```"))
        .map(str::to_string)
}

/// Fill empty summaries so every node carries text.
fn ensure_text(node: &mut SummaryNode) {
    if node.summary.trim().is_empty() {
        node.summary = PLACEHOLDER_SUMMARY.to_string();
    }
    node.children.iter_mut().for_each(ensure_text);
}

/// Rebuild an LLM-proposed node on the code structure: headers from code,
/// text from the LLM, children the LLM left out omitted.
fn conform_llm(llm: &SummaryNode, unit: &CodeUnit, file: &str) -> SummaryNode {
    let keys = llm.child_segments();
    let children = unit
        .children
        .iter()
        .filter_map(|child| {
            keys.iter()
                .position(|k| *k == child.segment())
                .map(|i| conform_llm(&llm.children[i], child, file))
        })
        .collect();
    let mut node = SummaryNode {
        kind: unit.kind,
        name: unit.name.clone(),
        header: expected_header(unit, file),
        summary: llm.summary.clone(),
        children,
    };
    if node.summary.trim().is_empty() {
        node.summary = PLACEHOLDER_SUMMARY.to_string();
    }
    node
}

impl<'a> Summarizer<'a> {
    pub fn new(llm: &'a dyn LlmClient, counter: &'a dyn TokenCounter, config: SummarizerConfig) -> Self {
        Summarizer {
            llm,
            counter,
            config,
            prompts: PromptSet::default(),
        }
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn config(&self) -> &SummarizerConfig {
        &self.config
    }

    fn request(&self, system: &str, user: String) -> LlmRequest {
        LlmRequest {
            system: system.to_string(),
            user,
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            max_output_tokens: self.config.max_output_tokens,
        }
    }

    fn ask(&self, system: &str, user: String) -> Result<String, SummarizerError> {
        Ok(self.llm.complete(&self.request(system, user))?.text)
    }

    fn fits(&self, system: &str, user: &str) -> bool {
        self.counter.count(&format!("{system}\n\n{user}")) <= self.config.prompt_budget
    }

    fn meta(&self) -> GenerationMeta {
        GenerationMeta {
            model: self.config.model.clone(),
            generated_at: self.config.stamp.clone(),
        }
    }

    fn finish(&self, mut summary: SummaryTree, code: &CodeUnitTree) -> SummaryTree {
        ensure_text(&mut summary.root);
        summary.path = code.path.clone();
        summary.digest = code.digest.clone();
        summary.meta = self.meta();
        summary.degraded = code.degraded;
        summary
    }

    /// Summarise one file version. The result always aligns with `tree`.
    pub fn summarize_file(&self, code_text: &str, tree: &CodeUnitTree) -> Result<SummaryTree, SummarizerError> {
        if code_text.trim().is_empty() {
            let mut root = SummaryNode::new(CodeUnitKind::File, "", file_header(&tree.path));
            root.summary = EMPTY_MODULE_SUMMARY.to_string();
            return Ok(SummaryTree {
                path: tree.path.clone(),
                root,
                digest: tree.digest.clone(),
                meta: self.meta(),
                degraded: tree.degraded,
            });
        }
        if tree.degraded {
            return self.summarize_degraded(code_text, tree);
        }

        let template = &self.prompts.file;
        let user = template.fill(&[
            ("file_path", &tree.path),
            ("code", code_text),
            ("template_example", TEMPLATE_EXAMPLE),
        ])?;
        if !self.fits(&template.system, &user) {
            return self.summarize_chunked(code_text, tree);
        }

        let rounds = self.config.max_repair_rounds.max(1);
        let mut draft: Option<SummaryTree> = None;
        let mut last_report = AlignmentReport::default();
        for round in 0..rounds {
            let current = match draft.take() {
                Some(d) => d,
                None => {
                    let prompt = if round == 0 { user.clone() } else { format!("{user}{CORRECTION}") };
                    match parse_llm_summary(&self.ask(&template.system, prompt)?) {
                        Ok(mut parsed) => {
                            parsed.path = tree.path.clone();
                            parsed
                        }
                        Err(Unparseable) => {
                            last_report = align(&SummaryTree::empty_like(tree), tree);
                            continue;
                        }
                    }
                }
            };
            let repaired = repair(&current, tree, |path, unit| {
                self.regenerate(path, unit, code_text, tree, round)
                    .map_err(|e| Box::new(e) as _)
            });
            match repaired {
                Ok(fixed) => {
                    let report = align(&fixed, tree);
                    if report.is_empty() {
                        return Ok(self.finish(fixed, tree));
                    }
                    last_report = report;
                    draft = Some(fixed);
                }
                Err(SummaryError::RegenerationFailed { source, .. }) => {
                    match source.downcast::<SummarizerError>() {
                        Ok(inner) if matches!(*inner, SummarizerError::LlmUnavailable(_)) => return Err(*inner),
                        _ => {
                            last_report = align(&current, tree);
                            draft = Some(current);
                        }
                    }
                }
                Err(other) => unreachable!("repair only fails through the callback: {other}"),
            }
        }
        Err(SummarizerError::AlignmentUnrepairable {
            path: tree.path.clone(),
            rounds,
            report: Box::new(last_report),
        })
    }

    fn regenerate(
        &self,
        path: &CodeUnitPath,
        _unit: &CodeUnit,
        code_text: &str,
        tree: &CodeUnitTree,
        attempt: usize,
    ) -> Result<SummaryNode, SummarizerError> {
        let code = tree.extract_code(path, code_text)?;
        self.summarize_unit_attempt(&code, path, attempt)
    }

    fn summarize_degraded(&self, code_text: &str, tree: &CodeUnitTree) -> Result<SummaryTree, SummarizerError> {
        let template = &self.prompts.file;
        let code = self.truncate_to_fit(template, &tree.path, code_text);
        let user = template.fill(&[
            ("file_path", &tree.path),
            ("code", &code),
            ("template_example", TEMPLATE_EXAMPLE),
        ])?;
        let answer = self.ask(&template.system, user)?;
        let summary = match parse_llm_summary(&answer) {
            Ok(parsed) if !parsed.root.summary.is_empty() => parsed.root.summary,
            _ => first_line(&answer).unwrap_or_else(|| PLACEHOLDER_SUMMARY.to_string()),
        };
        let root = SummaryNode::new(CodeUnitKind::File, "", file_header(&tree.path)).with_summary(summary);
        Ok(SummaryTree {
            path: tree.path.clone(),
            root,
            digest: tree.digest.clone(),
            meta: self.meta(),
            degraded: true,
        })
    }

    /// Unit-by-unit summarisation for files whose code exceeds the budget.
    fn summarize_chunked(&self, code_text: &str, tree: &CodeUnitTree) -> Result<SummaryTree, SummarizerError> {
        let mut children = Vec::new();
        for unit in &tree.root.children {
            let path = tree.file_path().child(unit.segment());
            let code = tree.extract_code(&path, code_text)?;
            children.push(self.summarize_unit(&code, &path)?);
        }
        let mut draft = SummaryTree {
            path: tree.path.clone(),
            root: SummaryNode::new(CodeUnitKind::File, "", file_header(&tree.path)),
            digest: tree.digest.clone(),
            meta: self.meta(),
            degraded: false,
        };
        draft.root.children = children;
        let outline = render_tree(&draft);

        let template = &self.prompts.file_from_units;
        let summaries = self.truncate_to_fit(template, &tree.path, &outline);
        let user = template.fill(&[
            ("file_path", &tree.path),
            ("summaries", &summaries),
            ("template_example", TEMPLATE_EXAMPLE),
        ])?;
        let answer = self.ask(&template.system, user)?;
        draft.root.summary = match parse_llm_summary(&answer) {
            Ok(parsed) if !parsed.root.summary.is_empty() => parsed.root.summary,
            _ => first_line(&answer).unwrap_or_else(|| PLACEHOLDER_SUMMARY.to_string()),
        };

        let rounds = self.config.max_repair_rounds.max(1);
        for round in 0..rounds {
            let repaired = repair(&draft, tree, |path, unit| {
                self.regenerate(path, unit, code_text, tree, round)
                    .map_err(|e| Box::new(e) as _)
            });
            match repaired {
                Ok(fixed) if align(&fixed, tree).is_empty() => return Ok(self.finish(fixed, tree)),
                Ok(fixed) => draft = fixed,
                Err(SummaryError::RegenerationFailed { source, .. }) => {
                    if let Ok(inner) = source.downcast::<SummarizerError>() {
                        if matches!(*inner, SummarizerError::LlmUnavailable(_)) {
                            return Err(*inner);
                        }
                    }
                }
                Err(other) => unreachable!("repair only fails through the callback: {other}"),
            }
        }
        Err(SummarizerError::AlignmentUnrepairable {
            path: tree.path.clone(),
            rounds,
            report: Box::new(align(&draft, tree)),
        })
    }

    /// Largest prefix of `text` (whole lines) whose prompt fits the budget.
    fn truncate_to_fit(&self, template: &PromptTemplate, file_path: &str, text: &str) -> String {
        let fill = |body: &str| {
            template
                .fill(&[
                    ("file_path", file_path),
                    ("code", body),
                    ("summaries", body),
                    ("template_example", TEMPLATE_EXAMPLE),
                ])
                .unwrap_or_default()
        };
        if self.fits(&template.system, &fill(text)) {
            return text.to_string();
        }
        let overhead = self.counter.count(&format!("{}\n\n{}", template.system, fill("")));
        let allowance = self.config.prompt_budget.saturating_sub(overhead + 8);
        let mut kept = String::new();
        let mut used = 0;
        for line in text.split_inclusive('\n') {
            let cost = self.counter.count(line) + 1;
            if used + cost > allowance {
                break;
            }
            used += cost;
            kept.push_str(line);
        }
        kept.push_str("# ... (truncated)\n");
        kept
    }

    /// Summarise one extracted unit (class, function or module-level code).
    /// Structure and headers come from the code; text from the LLM. Nested
    /// units the LLM leaves out are omitted for the caller's repair pass.
    pub fn summarize_unit(&self, unit_code: &str, path: &CodeUnitPath) -> Result<SummaryNode, SummarizerError> {
        self.summarize_unit_attempt(unit_code, path, 0)
    }

    fn summarize_unit_attempt(
        &self,
        unit_code: &str,
        path: &CodeUnitPath,
        attempt: usize,
    ) -> Result<SummaryNode, SummarizerError> {
        let code = dedent(unit_code);
        let unit = self.unit_structure(&code, path);

        let template = &self.prompts.unit;
        let body = self.truncate_to_fit(template, &path.to_string(), &code);
        let mut user = template.fill(&[
            ("file_path", &path.to_string()),
            ("code", &body),
            ("template_example", TEMPLATE_EXAMPLE),
        ])?;
        if attempt > 0 {
            user.push_str(CORRECTION);
        }
        let answer = self.ask(&template.system, user)?;
        let nodes = parse_llm_units(&answer)
            .map_err(|_| SummarizerError::UnparseableSummary(path.to_string()))?;
        let chosen = nodes
            .iter()
            .find(|n| n.kind == unit.kind && n.name == unit.name)
            .unwrap_or(&nodes[0]);
        Ok(conform_llm(chosen, &unit, &path.file))
    }

    /// The code unit `path` names, re-derived from its own source.
    fn unit_structure(&self, code: &str, path: &CodeUnitPath) -> CodeUnit {
        let leaf = |kind| CodeUnit {
            kind,
            name: match path.segments.last() {
                Some(crate::code_index::PathSegment::Named { name, .. }) => name.clone(),
                _ => String::new(),
            },
            signature: String::new(),
            span: crate::code_index::LineSpan::new(1, 1),
            segments: Vec::new(),
            children: Vec::new(),
            ordinal: 0,
        };
        let Ok(parsed) = parse_file(code, &path.file) else {
            return leaf(if path.is_main() { CodeUnitKind::Main } else { CodeUnitKind::Function });
        };
        if path.is_main() {
            return leaf(CodeUnitKind::Main);
        }
        let name = match path.segments.last() {
            Some(crate::code_index::PathSegment::Named { name, .. }) => name.as_str(),
            _ => "",
        };
        let mut unit = parsed
            .root
            .children
            .iter()
            .find(|c| c.kind != CodeUnitKind::Main && c.name == name)
            .or_else(|| parsed.root.children.iter().find(|c| c.kind != CodeUnitKind::Main))
            .cloned()
            .unwrap_or_else(|| leaf(CodeUnitKind::Function));
        if let Some(crate::code_index::PathSegment::Named { ordinal, .. }) = path.segments.last() {
            unit.ordinal = *ordinal;
        }
        unit
    }
}

impl SummaryTree {
    /// A root-only tree for `code`, used as the baseline when nothing usable
    /// came back from the LLM.
    pub fn empty_like(code: &CodeUnitTree) -> SummaryTree {
        SummaryTree {
            path: code.path.clone(),
            root: SummaryNode::new(CodeUnitKind::File, "", file_header(&code.path)),
            digest: code.digest.clone(),
            meta: GenerationMeta::default(),
            degraded: code.degraded,
        }
    }
}

#[cfg(test)]
mod tests;
