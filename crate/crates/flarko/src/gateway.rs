//! Chat-completion access with a context budget, retries, an admission
//! gate and an audit trail.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use flarko_core::llm::{estimate_tokens, CallContext, CallStage, ChatMessage, ContextBudget, GatewayError, GenerationConfig, Generator};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const API_KEY_VAR: &str = "FLARKO_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    /// Worth retrying: timeouts, refused connections, 429 and 5xx.
    #[error("{0}")]
    Transient(String),
    #[error("{0}")]
    Fatal(String),
    #[error("{0}")]
    Protocol(String),
}

/// One round trip to a generator backend.
pub trait Transport: Send + Sync {
    fn send(&self, call: &CallContext<'_>, config: &GenerationConfig, messages: &[ChatMessage]) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub instance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub stage: CallStage,
    pub messages: Vec<ChatMessage>,
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub attempts: u32,
    pub latency_ms: u64,
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn enter(&self) -> GatePass<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GatePass(self)
    }
}

struct GatePass<'a>(&'a Gate);

impl Drop for GatePass<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct Gateway<T> {
    transport: T,
    config: GenerationConfig,
    budget: ContextBudget,
    gate: Gate,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    audit: Option<Mutex<Vec<AuditRecord>>>,
}

impl<T: Transport> Gateway<T> {
    pub fn new(transport: T, config: GenerationConfig, budget: ContextBudget) -> Self {
        let gate = Gate::new(config.parallelism_cap);
        Self {
            transport,
            config,
            budget,
            gate,
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            audit: None,
        }
    }

    /// Keep an [`AuditRecord`] for every call made through [`Generator::complete`].
    pub fn with_audit(mut self) -> Self {
        self.audit = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.config
    }

    /// Most requests that were ever in flight at once.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn take_audit(&self) -> Vec<AuditRecord> {
        self.audit
            .as_ref()
            .map(|a| std::mem::take(&mut *a.lock().unwrap_or_else(|e| e.into_inner())))
            .unwrap_or_default()
    }

    /// Runs one call and returns its audit record alongside the outcome.
    pub fn call(&self, call: &CallContext<'_>, messages: &[ChatMessage]) -> (Result<String, GatewayError>, AuditRecord) {
        let mut record = AuditRecord {
            instance_id: call.instance_id.to_string(),
            variant: None,
            stage: call.stage,
            messages: messages.to_vec(),
            response: None,
            error: None,
            attempts: 0,
            latency_ms: 0,
        };
        let result = self.call_inner(call, messages, &mut record);
        match &result {
            Ok(r) => record.response = Some(r.clone()),
            Err(e) => record.error = Some(e.to_string()),
        }
        (result, record)
    }

    fn call_inner(&self, call: &CallContext<'_>, messages: &[ChatMessage], record: &mut AuditRecord) -> Result<String, GatewayError> {
        if let Some(bad) = messages.iter().find(|m| !m.is_valid()) {
            return Err(GatewayError::InvalidRequest(format!("empty {:?} message", bad.role)));
        }
        let estimated = estimate_tokens(messages, &self.budget);
        if estimated > self.budget.max_context_tokens {
            return Err(GatewayError::Budget {
                estimated,
                limit: self.budget.max_context_tokens,
            });
        }

        let _pass = self.gate.enter();
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        let started = Instant::now();
        let mut attempts = 0;
        let result = loop {
            attempts += 1;
            match self.transport.send(call, &self.config, messages) {
                Ok(text) => break Ok(text),
                Err(TransportError::Protocol(m)) => break Err(GatewayError::Protocol(m)),
                Err(TransportError::Fatal(message)) => break Err(GatewayError::Transport { attempts, message }),
                Err(TransportError::Transient(message)) => {
                    if attempts > self.config.max_retries {
                        break Err(GatewayError::Transport { attempts, message });
                    }
                    log::debug!("{} {}: attempt {attempts} failed: {message}", call.instance_id, call.stage.as_str());
                    std::thread::sleep(self.config.backoff(attempts));
                }
            }
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        record.attempts = attempts;
        record.latency_ms = started.elapsed().as_millis() as u64;
        result
    }
}

impl<T: Transport> Generator for Gateway<T> {
    fn complete(&self, call: &CallContext<'_>, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        let (result, record) = self.call(call, messages);
        if let Some(audit) = &self.audit {
            audit.lock().unwrap_or_else(|e| e.into_inner()).push(record);
        }
        result
    }
}

/// OpenAI-compatible `chat/completions` over HTTP(S).
pub struct HttpTransport {
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpTransport {
    /// Reads the bearer token from `FLARKO_API_KEY` if it is set.
    pub fn new(config: &GenerationConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout()).build();
        Self {
            agent,
            api_key: std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty()),
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, _: &CallContext<'_>, config: &GenerationConfig, messages: &[ChatMessage]) -> Result<String, TransportError> {
        let body = json!({
            "model": config.model_name,
            "messages": messages,
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
        });
        let mut req = self.agent.post(&config.endpoint_url);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let text = r.into_string().unwrap_or_default();
                let msg = format!("HTTP {code}: {}", text.chars().take(200).collect::<String>());
                return Err(if code == 429 || code >= 500 {
                    TransportError::Transient(msg)
                } else {
                    TransportError::Fatal(msg)
                });
            }
            Err(ureq::Error::Transport(t)) => return Err(TransportError::Transient(t.to_string())),
        };
        let v: serde_json::Value = resp.into_json().map_err(|e| TransportError::Protocol(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| TransportError::Protocol("missing choices[0].message.content".into()))
    }
}

/// Replays a fixed list of outcomes, then repeats the last one.
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<String, TransportError>>>,
    last: Mutex<Option<Result<String, TransportError>>>,
    calls: AtomicUsize,
}

impl ScriptedTransport {
    pub fn new(script: impl IntoIterator<Item = Result<String, TransportError>>) -> Self {
        Self {
            script: Mutex::new(script.into_iter().collect()),
            last: Mutex::new(None),
            calls: AtomicUsize::new(0),
        }
    }

    /// Fails `failures` times with a transient error, then answers `reply`.
    pub fn flaky(failures: usize, reply: &str) -> Self {
        Self::new(
            std::iter::repeat_with(|| Err(TransportError::Transient("connection reset".into())))
                .take(failures)
                .chain([Ok(reply.to_string())]),
        )
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, _: &CallContext<'_>, _: &GenerationConfig, _: &[ChatMessage]) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let next = self.script.lock().unwrap_or_else(|e| e.into_inner()).pop_front();
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        match next {
            Some(r) => {
                *last = Some(r.clone());
                r
            }
            None => last.clone().unwrap_or_else(|| Err(TransportError::Fatal("script exhausted".into()))),
        }
    }
}
