use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Canonical example of the summary template, embedded in every prompt.
pub const TEMPLATE_EXAMPLE: &str = "\
FILE shapes.py (geometry/shapes.py)
  Geometric shape primitives and area helpers.
  CLASS Circle [attrs: radius, center]
    A circle given by its center point and radius.
    FUNCTION __init__(self, radius, center=(0, 0))
      Stores the radius and center.
    FUNCTION area(self) -> float
      Returns the enclosed area.
  FUNCTION total_area(shapes)
    Sums the areas of a list of shapes.
  __MAIN__
    Defines the module-level default precision constant.
";

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{(file_path|code|template_example|summaries)\}").expect("regex"));

#[derive(Debug, thiserror::Error)]
#[error("prompt template `{id}` left placeholder {{{name}}} unfilled")]
pub struct UnfilledPlaceholder {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub system: String,
    /// Instruction text with `{file_path}`, `{code}`, `{template_example}`
    /// and `{summaries}` placeholders.
    pub instruction: String,
}

impl PromptTemplate {
    /// Substitute `values`; every placeholder in the template must be
    /// covered.
    pub fn fill(&self, values: &[(&str, &str)]) -> Result<String, UnfilledPlaceholder> {
        for caps in PLACEHOLDER.captures_iter(&self.instruction) {
            let name = &caps[1];
            if !values.iter().any(|(k, _)| *k == name) {
                return Err(UnfilledPlaceholder {
                    id: self.id.clone(),
                    name: name.to_string(),
                });
            }
        }
        // One pass so substituted text is never re-scanned.
        Ok(PLACEHOLDER
            .replace_all(&self.instruction, |caps: &regex::Captures| {
                values
                    .iter()
                    .find(|(k, _)| *k == &caps[1])
                    .map(|(_, v)| v.to_string())
                    .unwrap_or_default()
            })
            .into_owned())
    }
}

const SYSTEM: &str = "You are a senior software engineer who writes precise, compact summaries of source code.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub file: PromptTemplate,
    pub unit: PromptTemplate,
    pub file_from_units: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            file: PromptTemplate {
                id: "summarize-file".into(),
                system: SYSTEM.into(),
                instruction: "\
Summarise the Python file `{file_path}` using exactly the template below.
Give the file a one-line summary, then one entry per class and function in the
order they appear, nested by two spaces per level as in the code. Class headers
list the class attributes; function headers repeat the full signature. Put code
outside any class or function under __MAIN__. Do not summarise imports.

Template example:
{template_example}
Code:
```python
{code}
```
"
                .into(),
            },
            unit: PromptTemplate {
                id: "summarize-unit".into(),
                system: SYSTEM.into(),
                instruction: "\
Summarise the following code unit from `{file_path}` using the template below,
starting with the unit's own CLASS/FUNCTION/__MAIN__ header and including any
nested classes and functions, nested by two spaces per level.

Template example:
{template_example}
Code:
```python
{code}
```
"
                .into(),
            },
            file_from_units: PromptTemplate {
                id: "summarize-file-from-units".into(),
                system: SYSTEM.into(),
                instruction: "\
The file `{file_path}` is too large to show in full. Its classes and functions
are summarised below. Reply with the FILE header line followed by a one-line
summary of the whole file, in the template format.

Template example:
{template_example}
Unit summaries:
{summaries}
"
                .into(),
            },
        }
    }
}
