//! Chat-completion vocabulary shared by every generator backend.

use alloc::string::String;
use core::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }

    /// System and user messages must carry content.
    pub fn is_valid(&self) -> bool {
        self.role == Role::Assistant || !self.content.is_empty()
    }
}

/// Remote generation settings. Temperature defaults to 0 so runs are
/// reproducible against deterministic backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Delay before the first retry; doubles on every further retry.
    pub retry_backoff_ms: u64,
    pub parallelism_cap: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            endpoint_url: String::from("http://localhost:8000/v1/chat/completions"),
            model_name: String::from("mock"),
            temperature: 0.0,
            max_output_tokens: 512,
            timeout_secs: 120,
            max_retries: 3,
            retry_backoff_ms: 500,
            parallelism_cap: 4,
        }
    }
}

impl GenerationConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    /// Backoff before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64 << retry.saturating_sub(1).min(16);
        Duration::from_millis(self.retry_backoff_ms.saturating_mul(factor))
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0) {
            return Err(String::from("temperature must be >= 0"));
        }
        if self.max_output_tokens == 0 {
            return Err(String::from("max_output_tokens must be positive"));
        }
        if self.parallelism_cap == 0 {
            return Err(String::from("parallelism_cap must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextBudget {
    pub max_context_tokens: usize,
    pub chars_per_token: usize,
}

impl Default for ContextBudget {
    fn default() -> Self {
        Self {
            max_context_tokens: 32_768,
            chars_per_token: 4,
        }
    }
}

impl ContextBudget {
    pub fn new(max_context_tokens: usize, chars_per_token: usize) -> Self {
        assert!(chars_per_token > 0, "chars_per_token must be positive");
        Self {
            max_context_tokens,
            chars_per_token,
        }
    }

    pub fn fits(&self, messages: &[ChatMessage]) -> bool {
        estimate_tokens(messages, self) <= self.max_context_tokens
    }
}

/// Rough token count: `ceil(chars / chars_per_token)` per message, summed.
pub fn estimate_tokens(messages: &[ChatMessage], budget: &ContextBudget) -> usize {
    let div = budget.chars_per_token.max(1);
    messages.iter().map(|m| m.content.chars().count().div_ceil(div)).sum()
}

/// Which pipeline step a generator call belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CallStage {
    #[serde(rename = "PTR")]
    Ptr,
    #[serde(rename = "MR")]
    Mr,
    #[serde(rename = "GEN")]
    Generation,
}

impl CallStage {
    pub fn as_str(self) -> &'static str {
        match self {
            CallStage::Ptr => "PTR",
            CallStage::Mr => "MR",
            CallStage::Generation => "GEN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallContext<'a> {
    pub instance_id: &'a str,
    pub stage: CallStage,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("prompt needs ~{estimated} tokens, budget is {limit}")]
    Budget { estimated: usize, limit: usize },
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("unparseable response: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// A chat-completion text generator.
pub trait Generator: Sync {
    fn complete(&self, call: &CallContext<'_>, messages: &[ChatMessage]) -> Result<String, GatewayError>;
}

impl<G: Generator + ?Sized> Generator for &G {
    fn complete(&self, call: &CallContext<'_>, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        (**self).complete(call, messages)
    }
}
