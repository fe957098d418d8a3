//! Application config file (TOML).
//!
//! ```toml
//! [defaults]
//! max_words = 2500
//! parallelism = 4
//! separator = "\n"
//! include_speakers = true
//! prompt_registry = "prompts.toml"   # relative to this file
//!
//! [providers."gpt-3.5"]
//! kind = "openai"
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! model = "gpt-3.5-turbo"
//! auth_env = "OPENAI_API_KEY"
//!
//! [[pricing]]
//! provider = "gpt-3.5"
//! unit = "per_thousand_tokens"
//! input_price = 0.0015
//! output_price = 0.002
//! ```
//!
//! A provider named `mock` is always available unless the file defines one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::corpus::SpeakerRendering;
use crate::costing::{CostError, PricingBook, PricingTable};
use crate::pipeline::PipelineConfig;
use crate::prompting::{PromptError, PromptRegistry};
use crate::provider::{MockParams, ProviderConfig, ProviderError};
use crate::segmenter::DEFAULT_MAX_WORDS;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown provider \"{0}\"")]
    UnknownProvider(String),
    #[error("defaults.{0} must be at least 1")]
    Zero(&'static str),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Defaults {
    pub max_words: usize,
    pub parallelism: usize,
    pub separator: String,
    pub include_speakers: bool,
    pub prompt_registry: Option<PathBuf>,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            max_words: DEFAULT_MAX_WORDS,
            parallelism: 4,
            separator: "\n".into(),
            include_speakers: true,
            prompt_registry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub defaults: Defaults,
    pub providers: BTreeMap<String, ProviderConfig>,
    pub pricing: Vec<PricingTable>,
}

impl AppConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: AppConfig = toml::from_str(text)?;
        for (name, p) in cfg.providers.iter_mut() {
            p.name = name.clone();
            p.validate()?;
        }
        cfg.pricing.iter().try_for_each(PricingTable::validate)?;
        if cfg.defaults.max_words == 0 {
            return Err(ConfigError::Zero("max_words"));
        }
        if cfg.defaults.parallelism == 0 {
            return Err(ConfigError::Zero("parallelism"));
        }
        Ok(cfg)
    }

    /// Loads `path`; a relative `prompt_registry` resolves against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        if let (Some(reg), Some(dir)) = (&cfg.defaults.prompt_registry, path.parent()) {
            if reg.is_relative() {
                cfg.defaults.prompt_registry = Some(dir.join(reg));
            }
        }
        Ok(cfg)
    }

    pub fn provider(&self, name: &str) -> Result<ProviderConfig, ConfigError> {
        match self.providers.get(name) {
            Some(p) => Ok(p.clone()),
            None if name == "mock" => Ok(ProviderConfig::mock("mock", MockParams::default())),
            None => Err(ConfigError::UnknownProvider(name.to_owned())),
        }
    }

    pub fn registry(&self) -> Result<PromptRegistry, ConfigError> {
        Ok(match &self.defaults.prompt_registry {
            Some(path) => PromptRegistry::load(path)?,
            None => PromptRegistry::default(),
        })
    }

    pub fn pricing_book(&self) -> PricingBook {
        PricingBook {
            pricing: self.pricing.clone(),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            separator: self.defaults.separator.clone(),
            parallelism: self.defaults.parallelism,
            rendering: SpeakerRendering {
                include_speakers: self.defaults.include_speakers,
            },
        }
    }
}
