//! Prompt templates and the registry that renders them.
//!
//! Every template carries exactly one `{body}` placeholder. A registry file
//! is TOML:
//!
//! ```toml
//! version = 1
//! [templates]
//! summarize = "Summarize the following conversation: {body}"
//! ```
//!
//! Keys missing from the file fall back to the built-in text; unknown keys
//! are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const PLACEHOLDER: &str = "{body}";
pub const REGISTRY_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("prompt body is empty")]
    EmptyBody,
    #[error("unknown prompt id \"{0}\"")]
    UnknownId(String),
    #[error("template \"{id}\" must contain exactly one {PLACEHOLDER} placeholder, found {found}")]
    Placeholder { id: PromptId, found: usize },
    #[error("unsupported prompt registry version {0}")]
    Version(u32),
    #[error("invalid prompt registry: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to read prompt registry: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptId {
    Summarize,
    Rewrite,
    Resummarize,
    SummarizeLong,
    SummarizeMedium,
    SummarizeShort,
}

impl PromptId {
    pub const ALL: [PromptId; 6] = [
        PromptId::Summarize,
        PromptId::Rewrite,
        PromptId::Resummarize,
        PromptId::SummarizeLong,
        PromptId::SummarizeMedium,
        PromptId::SummarizeShort,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptId::Summarize => "summarize",
            PromptId::Rewrite => "rewrite",
            PromptId::Resummarize => "resummarize",
            PromptId::SummarizeLong => "summarize-long",
            PromptId::SummarizeMedium => "summarize-medium",
            PromptId::SummarizeShort => "summarize-short",
        }
    }

    fn default_template(self) -> &'static str {
        match self {
            PromptId::Summarize => "Summarize the following conversation: {body}",
            PromptId::Rewrite => "Rewrite the following text by maintaining coherency: {body}",
            PromptId::Resummarize => "Summarize the following text: {body}",
            PromptId::SummarizeLong => "Generate a long and descriptive summary of the following conversation. {body}",
            PromptId::SummarizeMedium => "Generate a summary of the following conversation. {body}",
            PromptId::SummarizeShort => {
                "Generate a very short and concise summary of the following conversation. {body}"
            }
        }
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| PromptError::UnknownId(s.to_owned()))
    }
}

/// Summary length requested by the length-variant prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthVariant {
    Long,
    Medium,
    Short,
}

pub fn length_variant(kind: LengthVariant) -> PromptId {
    match kind {
        LengthVariant::Long => PromptId::SummarizeLong,
        LengthVariant::Medium => PromptId::SummarizeMedium,
        LengthVariant::Short => PromptId::SummarizeShort,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: PromptId,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(id: PromptId, text: impl Into<String>) -> Result<Self, PromptError> {
        let text = text.into();
        let found = text.matches(PLACEHOLDER).count();
        if found != 1 {
            return Err(PromptError::Placeholder { id, found });
        }
        Ok(Self { id, text })
    }

    pub fn render(&self, body: &str) -> Result<String, PromptError> {
        if body.trim().is_empty() {
            return Err(PromptError::EmptyBody);
        }
        Ok(self.text.replacen(PLACEHOLDER, body, 1))
    }

    /// Template text ahead of the placeholder, trailing whitespace removed.
    pub fn instruction(&self) -> &str {
        let end = self.text.find(PLACEHOLDER).unwrap_or(self.text.len());
        self.text[..end].trim_end()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    version: u32,
    #[serde(default)]
    templates: BTreeMap<PromptId, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRegistry {
    version: u32,
    templates: BTreeMap<PromptId, PromptTemplate>,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        let templates = PromptId::ALL
            .into_iter()
            .map(|id| {
                let t = PromptTemplate::new(id, id.default_template()).expect("built-in template");
                (id, t)
            })
            .collect();
        Self {
            version: REGISTRY_VERSION,
            templates,
        }
    }
}

impl PromptRegistry {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let file: RegistryFile = toml::from_str(text)?;
        if file.version != REGISTRY_VERSION {
            return Err(PromptError::Version(file.version));
        }
        let mut registry = Self::default();
        for (id, text) in file.templates {
            registry.templates.insert(id, PromptTemplate::new(id, text)?);
        }
        Ok(registry)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serializes the full registry, including defaults, as TOML.
    pub fn to_toml(&self) -> String {
        let mut out = format!("version = {}\n\n[templates]\n", self.version);
        for (id, t) in &self.templates {
            out.push_str(&format!("{} = {}\n", id.as_str(), toml::Value::String(t.text.clone())));
        }
        out
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn get(&self, id: PromptId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(&self, id: PromptId, body: &str) -> Result<String, PromptError> {
        self.get(id).render(body)
    }

    pub fn instructions(&self) -> Vec<String> {
        self.templates.values().map(|t| t.instruction().to_owned()).collect()
    }
}
