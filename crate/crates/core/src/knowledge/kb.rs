use std::collections::HashSet;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::llm::{LlmClient, PromptRequest};
use super::parse::parse_symptoms;
use super::prompt::{render_prompt, PromptTemplate, PromptVariant};
use super::KnowledgeError;

pub const SCHEMA_VERSION: u32 = 1;
pub const CATEGORY_NAME_PROMPT_ID: &str = "category-name";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DescriptorSource {
    Llm,
    Manual,
}

/// One diagnostic category and its symptom phrases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDescriptor {
    pub class_id: String,
    pub display_name: String,
    pub symptoms: Vec<String>,
    pub prompt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    pub source: DescriptorSource,
    pub created_at: DateTime<Utc>,
}

impl ClassDescriptor {
    /// A hand-authored descriptor.
    pub fn manual(
        class_id: impl Into<String>,
        display_name: impl Into<String>,
        symptoms: Vec<String>,
    ) -> Self {
        ClassDescriptor {
            class_id: class_id.into(),
            display_name: display_name.into(),
            symptoms,
            prompt_id: "manual".into(),
            raw_response: None,
            source: DescriptorSource::Manual,
            created_at: Utc::now(),
        }
    }

    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let schema = |msg: String| KnowledgeError::Schema(format!("class `{}`: {msg}", self.class_id));
        if self.class_id.trim().is_empty() {
            return Err(KnowledgeError::Schema("empty class_id".into()));
        }
        if self.symptoms.is_empty() {
            return Err(schema("needs at least one symptom".into()));
        }
        let mut seen = HashSet::new();
        for s in &self.symptoms {
            if s.trim().is_empty() {
                return Err(schema("empty symptom string".into()));
            }
            if !seen.insert(s.as_str()) {
                return Err(schema(format!("duplicate symptom `{s}`")));
            }
        }
        if self.source == DescriptorSource::Llm && self.raw_response.is_none() {
            return Err(schema("LLM-sourced descriptor without raw_response".into()));
        }
        Ok(())
    }
}

/// Ordered per-class symptom lists. Order decides argmax ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeBase {
    pub schema_version: u32,
    pub kb_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_fingerprint: Option<String>,
    pub classes: Vec<ClassDescriptor>,
}

impl KnowledgeBase {
    pub fn new(kb_id: impl Into<String>, classes: Vec<ClassDescriptor>) -> Result<Self, KnowledgeError> {
        let kb = KnowledgeBase {
            schema_version: SCHEMA_VERSION,
            kb_id: kb_id.into(),
            dataset_id: None,
            encoder_fingerprint: None,
            classes,
        };
        kb.validate()?;
        Ok(kb)
    }

    pub fn with_dataset(mut self, dataset_id: impl Into<String>) -> Self {
        self.dataset_id = Some(dataset_id.into());
        self
    }

    pub fn validate(&self) -> Result<(), KnowledgeError> {
        if self.classes.is_empty() {
            return Err(KnowledgeError::Schema("knowledge base has no classes".into()));
        }
        let mut ids = HashSet::new();
        for c in &self.classes {
            c.validate()?;
            if !ids.insert(c.class_id.as_str()) {
                return Err(KnowledgeError::DuplicateClassId(c.class_id.clone()));
            }
        }
        Ok(())
    }

    pub fn class_ids(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.class_id.as_str())
    }

    pub fn class(&self, class_id: &str) -> Option<&ClassDescriptor> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    pub fn symptom_count(&self) -> usize {
        self.classes.iter().map(|c| c.symptoms.len()).sum()
    }

    /// The prompt variant shared by every class, if any.
    pub fn prompt_variant(&self) -> Option<PromptVariant> {
        let first = &self.classes.first()?.prompt_id;
        if self.classes.iter().any(|c| &c.prompt_id != first) {
            return None;
        }
        PromptTemplate::builtin(first).map(|t| t.variant())
    }

    /// Same classes, each described only by its bare category name.
    pub fn category_name_baseline(&self) -> KnowledgeBase {
        KnowledgeBase {
            schema_version: SCHEMA_VERSION,
            kb_id: format!("{}:category-names", self.kb_id),
            dataset_id: self.dataset_id.clone(),
            encoder_fingerprint: None,
            classes: self
                .classes
                .iter()
                .map(|c| ClassDescriptor {
                    class_id: c.class_id.clone(),
                    display_name: c.display_name.clone(),
                    symptoms: vec![c.display_name.clone()],
                    prompt_id: CATEGORY_NAME_PROMPT_ID.into(),
                    raw_response: None,
                    source: DescriptorSource::Manual,
                    created_at: c.created_at,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String, KnowledgeError> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self).expect("serializable") + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, KnowledgeError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| KnowledgeError::Json(e.to_string()))?;
        let version = value
            .get("schema_version")
            .ok_or_else(|| KnowledgeError::Schema("missing schema_version".into()))?
            .as_u64()
            .ok_or_else(|| KnowledgeError::Schema("schema_version must be an integer".into()))?;
        if version > u64::from(SCHEMA_VERSION) {
            return Err(KnowledgeError::Versioning(format!(
                "schema_version {version} is newer than supported version {SCHEMA_VERSION}"
            )));
        }
        if version == 0 {
            return Err(KnowledgeError::Schema("schema_version must be at least 1".into()));
        }
        let kb: KnowledgeBase = serde_json::from_value(value).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("unknown field") {
                KnowledgeError::Versioning(format!("{msg}; file may come from a newer release"))
            } else {
                KnowledgeError::Schema(msg)
            }
        })?;
        kb.validate()?;
        Ok(kb)
    }

    pub fn save(&self, path: &Path) -> Result<(), KnowledgeError> {
        save_kb(self, path)
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        load_kb(path)
    }
}

pub fn save_kb(kb: &KnowledgeBase, path: &Path) -> Result<(), KnowledgeError> {
    let body = kb.to_json()?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|source| KnowledgeError::Io { path: parent.to_path_buf(), source })?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, body).map_err(|source| KnowledgeError::Io { path: tmp.clone(), source })?;
    fs::rename(&tmp, path).map_err(|source| KnowledgeError::Io { path: path.to_path_buf(), source })
}

pub fn load_kb(path: &Path) -> Result<KnowledgeBase, KnowledgeError> {
    let text = fs::read_to_string(path)
        .map_err(|source| KnowledgeError::Io { path: path.to_path_buf(), source })?;
    KnowledgeBase::from_json(&text)
}

/// Lower-case ASCII slug used as class id for a category name.
pub fn class_id_for(category: &str) -> String {
    let mut out = String::with_capacity(category.len());
    for ch in category.trim().chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

/// Queries the LLM once per category and parses the answers.
///
/// Categories are queried concurrently; the result keeps input order. Any
/// failure aborts the whole build and names the class. Each descriptor's
/// timestamp is the capture time of its answer, so rebuilding from a warm
/// cache reproduces the file byte for byte.
pub fn build_kb(
    kb_id: &str,
    categories: &[String],
    template: &PromptTemplate,
    client: &LlmClient,
) -> Result<KnowledgeBase, KnowledgeError> {
    if categories.is_empty() {
        return Err(KnowledgeError::Schema("no categories given".into()));
    }
    let mut seen = HashSet::new();
    for c in categories {
        if c.trim().is_empty() {
            return Err(KnowledgeError::EmptyCategory);
        }
        if !seen.insert(class_id_for(c)) {
            return Err(KnowledgeError::DuplicateCategory(c.clone()));
        }
    }

    let results: Vec<Result<ClassDescriptor, KnowledgeError>> = categories
        .par_iter()
        .map(|category| {
            let with_class = |e: KnowledgeError| KnowledgeError::Class {
                class: category.clone(),
                source: Box::new(e),
            };
            let prompt = render_prompt(template, category).map_err(with_class)?;
            let answer = client
                .query_entry(&PromptRequest { template_id: template.id(), category, prompt: &prompt })
                .map_err(with_class)?;
            let symptoms = parse_symptoms(&answer.response).map_err(with_class)?;
            Ok(ClassDescriptor {
                class_id: class_id_for(category),
                display_name: category.clone(),
                symptoms,
                prompt_id: template.id().to_string(),
                raw_response: Some(answer.response),
                source: DescriptorSource::Llm,
                created_at: answer.captured_at,
            })
        })
        .collect();
    let classes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    KnowledgeBase::new(kb_id, classes)
}
