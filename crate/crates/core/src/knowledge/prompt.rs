use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;

pub const PLACEHOLDER: &str = "{Diagnostic Category}";

pub const DESIGNED_ID: &str = "designed-v1";
pub const BASELINE_ID: &str = "baseline-v1";

const DESIGNED_TEXT: &str = "Q: According to published literature, what are useful medical visual features for distinguishing {Diagnostic Category} in a photo?";
const BASELINE_TEXT: &str =
    "Q: What are useful visual features for distinguishing {Diagnostic Category} in a photo?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PromptVariant {
    Designed,
    Baseline,
}

impl PromptVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Designed => "designed",
            PromptVariant::Baseline => "baseline",
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "designed" | "dp" => Ok(PromptVariant::Designed),
            "baseline" | "bp" => Ok(PromptVariant::Baseline),
            other => Err(format!("unknown prompt variant `{other}` (expected designed or baseline)")),
        }
    }
}

/// A query string with exactly one `{Diagnostic Category}` slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    id: String,
    text: String,
    variant: PromptVariant,
}

impl PromptTemplate {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        variant: PromptVariant,
    ) -> Result<Self, KnowledgeError> {
        let text = text.into();
        let count = text.matches(PLACEHOLDER).count();
        if count != 1 {
            return Err(KnowledgeError::Template(format!(
                "placeholder {PLACEHOLDER} must occur exactly once, found {count}"
            )));
        }
        Ok(PromptTemplate { id: id.into(), text, variant })
    }

    /// The literature-oriented medical prompt.
    pub fn designed() -> Self {
        PromptTemplate { id: DESIGNED_ID.into(), text: DESIGNED_TEXT.into(), variant: PromptVariant::Designed }
    }

    /// The generic visual-features prompt used for the ablation.
    pub fn baseline() -> Self {
        PromptTemplate { id: BASELINE_ID.into(), text: BASELINE_TEXT.into(), variant: PromptVariant::Baseline }
    }

    pub fn for_variant(variant: PromptVariant) -> Self {
        match variant {
            PromptVariant::Designed => Self::designed(),
            PromptVariant::Baseline => Self::baseline(),
        }
    }

    /// Looks up a builtin template by id.
    pub fn builtin(id: &str) -> Option<Self> {
        [Self::designed(), Self::baseline()].into_iter().find(|t| t.id == id)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn variant(&self) -> PromptVariant {
        self.variant
    }

    pub fn render(&self, category: &str) -> Result<String, KnowledgeError> {
        render_prompt(self, category)
    }
}

/// Substitutes `category` verbatim into the template slot.
pub fn render_prompt(template: &PromptTemplate, category: &str) -> Result<String, KnowledgeError> {
    if category.trim().is_empty() {
        return Err(KnowledgeError::EmptyCategory);
    }
    Ok(template.text.replacen(PLACEHOLDER, category, 1))
}
