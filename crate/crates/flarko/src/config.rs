//! Run configuration, read from a JSON file.

use std::path::{Path, PathBuf};

use flarko_core::eval::{EvalWindow, HitMode, ScoringOptions};
use flarko_core::kg::{Vocabulary, DEFAULT_NAMESPACE};
use flarko_core::llm::{ContextBudget, GenerationConfig};
use flarko_core::pipeline::{PipelineSettings, PipelineVariant, DEFAULT_FORMAT_INSTRUCTION};
use flarko_core::selection::{HeuristicPolicy, LlmSelectionOptions};
use serde::{Deserialize, Serialize};

use crate::load::{AssetColumns, PriceColumns, TransactionColumns};

pub const DEFAULT_REQUEST: &str =
    "Based on my transaction history and current market conditions, recommend three assets I am likely to buy next.";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub transactions: PathBuf,
    pub prices: PathBuf,
    pub assets: PathBuf,
    #[serde(default)]
    pub transaction_columns: TransactionColumns,
    #[serde(default)]
    pub price_columns: PriceColumns,
    #[serde(default)]
    pub asset_columns: AssetColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SelectorConfig {
    /// Ask the generator to pick entities. `fallback_k` recent entities are
    /// used when the answer names none; `null` disables the fallback.
    Llm {
        #[serde(default = "default_fallback_k")]
        fallback_k: Option<usize>,
    },
    Heuristic { policy: HeuristicPolicy, k: usize },
}

fn default_fallback_k() -> Option<usize> {
    LlmSelectionOptions::default().fallback_k
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig::Llm {
            fallback_k: default_fallback_k(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default = "default_namespace")]
    pub namespace: String,
    pub eval_window: EvalWindow,
    /// Users to evaluate; every user in the transaction file when absent.
    #[serde(default)]
    pub users: Option<Vec<String>>,
    #[serde(default = "default_variants")]
    pub variants: Vec<PipelineVariant>,
    #[serde(default)]
    pub selector: SelectorConfig,
    #[serde(default)]
    pub generator: GeneratorKind,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub budget: ContextBudget,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; defaults to the generation parallelism cap.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_request")]
    pub request: String,
    #[serde(default = "default_format_instruction")]
    pub format_instruction: String,
    #[serde(default = "default_true")]
    pub complete_assets: bool,
    #[serde(default)]
    pub hit_mode: HitMode,
    #[serde(default)]
    pub active_only: bool,
}

fn default_namespace() -> String {
    DEFAULT_NAMESPACE.to_string()
}

fn default_variants() -> Vec<PipelineVariant> {
    PipelineVariant::ALL.to_vec()
}

fn default_request() -> String {
    DEFAULT_REQUEST.to_string()
}

fn default_format_instruction() -> String {
    DEFAULT_FORMAT_INSTRUCTION.to_string()
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    /// Parses `path`; relative data paths and `output_dir` resolve against
    /// the directory holding the file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.data.transactions,
            &mut self.data.prices,
            &mut self.data.assets,
            &mut self.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, p) in [
            ("data.transactions", &self.data.transactions),
            ("data.prices", &self.data.prices),
            ("data.assets", &self.data.assets),
        ] {
            if !p.is_file() {
                return Err(invalid(field, format!("{} does not exist", p.display())));
            }
        }
        if self.variants.is_empty() {
            return Err(invalid("variants", "at least one variant is required"));
        }
        self.eval_window.validate().map_err(|e| invalid("eval_window", e.to_string()))?;
        self.generation.validate().map_err(|e| invalid("generation", e))?;
        if self.budget.chars_per_token == 0 {
            return Err(invalid("budget.chars_per_token", "must be positive"));
        }
        if self.budget.max_context_tokens == 0 {
            return Err(invalid("budget.max_context_tokens", "must be positive"));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be positive"));
        }
        if let SelectorConfig::Heuristic { k: 0, .. } = self.selector {
            return Err(invalid("selector.k", "must be positive"));
        }
        if matches!(self.users.as_deref(), Some([])) {
            return Err(invalid("users", "list is empty"));
        }
        self.vocabulary()?;
        if self.request.trim().is_empty() {
            return Err(invalid("request", "must not be empty"));
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Result<Vocabulary, ConfigError> {
        Vocabulary::new(self.namespace.clone()).map_err(|e| invalid("namespace", e.to_string()))
    }

    pub fn pipeline_settings(&self) -> PipelineSettings {
        PipelineSettings {
            budget: self.budget,
            format_instruction: self.format_instruction.clone(),
            complete_assets: self.complete_assets,
        }
    }

    pub fn scoring(&self) -> ScoringOptions {
        ScoringOptions {
            hit_mode: self.hit_mode,
            active_only: self.active_only,
        }
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(self.generation.parallelism_cap).max(1)
    }

    /// Model label used in reports.
    pub fn model_label(&self) -> String {
        match self.generator {
            GeneratorKind::Mock => format!("mock-{}", self.seed),
            GeneratorKind::Http => self.generation.model_name.clone(),
        }
    }
}
