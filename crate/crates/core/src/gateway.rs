//! Chat-completion gateway: an OpenAI-compatible HTTP backend, an offline scripted
//! backend, and per-phase token accounting.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Design,
    Routing,
    NodeExecution,
    Baseline,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::Design,
        Phase::Routing,
        Phase::NodeExecution,
        Phase::Baseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Design => "design",
            Phase::Routing => "routing",
            Phase::NodeExecution => "node_execution",
            Phase::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub phase: Phase,
    /// Node being executed, when the call belongs to one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub fn new(phase: Phase, system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            phase,
            node: None,
            system: system.into(),
            user: user.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: PhaseLimits::default().for_phase(phase),
        }
    }

    pub fn for_node(mut self, node: impl Into<String>) -> Self {
        self.node = Some(node.into());
        self
    }

    /// Stable digest of phase and prompt text, used to key scripted responses.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.phase.as_str());
        h.update([0]);
        h.update(&self.system);
        h.update([0]);
        h.update(&self.user);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum GatewayError {
    #[error("network error: {0}")]
    Network(String),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("scripted backend has no response left for phase {0}")]
    ScriptExhausted(Phase),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    fn name(&self) -> String;
}

/// Per-phase output-token ceilings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseLimits {
    pub design: u32,
    pub routing: u32,
    pub node_execution: u32,
    pub baseline: u32,
}

impl Default for PhaseLimits {
    fn default() -> Self {
        Self {
            design: 4096,
            routing: 512,
            node_execution: 2048,
            baseline: 2048,
        }
    }
}

impl PhaseLimits {
    pub fn for_phase(&self, phase: Phase) -> u32 {
        match phase {
            Phase::Design => self.design,
            Phase::Routing => self.routing,
            Phase::NodeExecution => self.node_execution,
            Phase::Baseline => self.baseline,
        }
    }
}

/// Shared handle to a backend; cheap to clone across runs and threads.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.name())
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: impl ChatBackend + 'static) -> Self {
        Self {
            backend: Arc::new(backend),
        }
    }

    pub fn from_arc(backend: Arc<dyn ChatBackend>) -> Self {
        Self { backend }
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.backend.complete(req)
    }

    pub fn backend_name(&self) -> String {
        self.backend.name()
    }

    /// Performs the call and captures it, success or failure, as a record.
    pub fn call(&self, request: ChatRequest) -> CallRecord {
        match self.backend.complete(&request) {
            Ok(resp) => CallRecord {
                request,
                response: Some(resp.text),
                usage: resp.usage,
                error: None,
            },
            Err(e) => CallRecord {
                request,
                response: None,
                usage: Usage::default(),
                error: Some(e),
            },
        }
    }
}

/// One gateway call as persisted in traces: the request verbatim and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub request: ChatRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    pub usage: Usage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<GatewayError>,
}

impl CallRecord {
    pub fn text(&self) -> Result<&str, &GatewayError> {
        match (&self.response, &self.error) {
            (Some(t), _) => Ok(t),
            (None, Some(e)) => Err(e),
            (None, None) => unreachable!("call record without response or error"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseUsage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl PhaseUsage {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLedger {
    phases: BTreeMap<Phase, PhaseUsage>,
}

impl UsageLedger {
    pub fn record(&mut self, phase: Phase, usage: Usage) {
        let entry = self.phases.entry(phase).or_default();
        entry.calls += 1;
        entry.prompt_tokens += usage.prompt_tokens;
        entry.completion_tokens += usage.completion_tokens;
    }

    pub fn phase(&self, phase: Phase) -> PhaseUsage {
        self.phases.get(&phase).copied().unwrap_or_default()
    }

    pub fn total(&self) -> PhaseUsage {
        self.phases
            .values()
            .fold(PhaseUsage::default(), |acc, p| PhaseUsage {
                calls: acc.calls + p.calls,
                prompt_tokens: acc.prompt_tokens + p.prompt_tokens,
                completion_tokens: acc.completion_tokens + p.completion_tokens,
            })
    }

    /// Ledger over the successful calls among `calls`.
    pub fn from_calls<'a>(calls: impl IntoIterator<Item = &'a CallRecord>) -> Self {
        let mut ledger = Self::default();
        for c in calls {
            if c.response.is_some() {
                ledger.record(c.request.phase, c.usage);
            }
        }
        ledger
    }

    pub fn merge(&mut self, other: &UsageLedger) {
        for (phase, u) in &other.phases {
            let entry = self.phases.entry(*phase).or_default();
            entry.calls += u.calls;
            entry.prompt_tokens += u.prompt_tokens;
            entry.completion_tokens += u.completion_tokens;
        }
    }
}

/// Deterministic token estimate: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

pub fn scripted_usage(req: &ChatRequest, response: &str) -> Usage {
    Usage {
        prompt_tokens: (req.system.chars().count() as u64 + req.user.chars().count() as u64)
            .div_ceil(4),
        completion_tokens: estimate_tokens(response),
    }
}

/// One line of a scripted manifest. A missing phase matches any call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    pub response: String,
}

impl ScriptEntry {
    pub fn new(phase: Phase, response: impl Into<String>) -> Self {
        Self {
            phase: Some(phase),
            response: response.into(),
        }
    }
}

/// Offline backend answering from a fingerprint table first, then from an ordered queue.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<ScriptEntry>>,
    table: HashMap<String, String>,
}

impl ScriptedBackend {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        Self {
            queue: Mutex::new(entries.into_iter().collect()),
            table: HashMap::new(),
        }
    }

    pub fn with_table(mut self, table: HashMap<String, String>) -> Self {
        self.table = table;
        self
    }

    /// Reads a JSONL manifest of `{"phase": ..., "response": ...}` lines.
    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<ScriptEntry>, _>>()?;
        Ok(Self::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("script lock").len()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let text = if let Some(text) = self.table.get(&req.fingerprint()) {
            text.clone()
        } else {
            let mut queue = self.queue.lock().expect("script lock");
            let idx = queue
                .iter()
                .position(|e| e.phase.is_none_or(|p| p == req.phase))
                .ok_or(GatewayError::ScriptExhausted(req.phase))?;
            queue.remove(idx).expect("index in range").response
        };
        Ok(ChatResponse {
            usage: scripted_usage(req, &text),
            text,
        })
    }

    fn name(&self) -> String {
        "scripted".into()
    }
}

/// Backend driven by a closure; usage follows the scripted token rule.
pub struct FnBackend<F> {
    name: String,
    respond: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, respond: F) -> Self {
        Self {
            name: name.into(),
            respond,
        }
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let text = (self.respond)(req)?;
        Ok(ChatResponse {
            usage: scripted_usage(req, &text),
            text,
        })
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
            factor: 2,
        }
    }
}

impl RetryPolicy {
    fn delay_before(&self, attempt: u32) -> Duration {
        self.base_delay * self.factor.saturating_pow(attempt.saturating_sub(1))
    }
}

pub const API_KEY_ENV: &str = "BIGMAS_API_KEY";
pub const BASE_URL_ENV: &str = "BIGMAS_BASE_URL";
pub const MODEL_ENV: &str = "BIGMAS_MODEL";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: None,
            model: model.into(),
            timeout: Duration::from_secs(300),
            retry: RetryPolicy::default(),
        }
    }

    /// Reads `BIGMAS_BASE_URL`, `BIGMAS_API_KEY` (falling back to `OPENAI_API_KEY`) and `BIGMAS_MODEL`.
    pub fn from_env() -> Self {
        let base =
            std::env::var(BASE_URL_ENV).unwrap_or_else(|_| "https://api.openai.com/v1".into());
        let model = std::env::var(MODEL_ENV).unwrap_or_else(|_| "gpt-4o-mini".into());
        let mut cfg = Self::new(base, model);
        cfg.api_key = std::env::var(API_KEY_ENV)
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .ok();
        cfg
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions` client.
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self { config, agent }
    }

    pub fn request_body(&self, req: &ChatRequest) -> Value {
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<ChatResponse, (GatewayError, bool)> {
        let url = format!("{}/chat/completions", self.config.base_url);
        let mut call = self
            .agent
            .post(&url)
            .set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = match call.send_json(body.clone()) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                let body = r.into_string().unwrap_or_default();
                let retry = status == 429 || status >= 500;
                return Err((GatewayError::Http { status, body }, retry));
            }
            Err(ureq::Error::Transport(t)) => {
                return Err((GatewayError::Network(t.to_string()), true));
            }
        };
        let doc: Value = resp
            .into_json()
            .map_err(|e| (GatewayError::Network(e.to_string()), true))?;
        parse_completion(&doc).map_err(|e| (e, false))
    }
}

/// Reads `choices[0].message.content` and `usage` from a completion body.
pub fn parse_completion(doc: &Value) -> Result<ChatResponse, GatewayError> {
    let text = doc
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Protocol("missing choices[0].message.content".into()))?;
    let usage = Usage {
        prompt_tokens: doc
            .pointer("/usage/prompt_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
        completion_tokens: doc
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    };
    Ok(ChatResponse {
        text: text.to_string(),
        usage,
    })
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let body = self.request_body(req);
        let mut attempt = 1;
        loop {
            match self.attempt(&body) {
                Ok(r) => return Ok(r),
                Err((err, retryable)) => {
                    if !retryable || attempt >= self.config.retry.max_attempts {
                        return Err(err);
                    }
                    std::thread::sleep(self.config.retry.delay_before(attempt));
                    attempt += 1;
                }
            }
        }
    }

    fn name(&self) -> String {
        format!("http:{}", self.config.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(phase: Phase, user: &str) -> ChatRequest {
        ChatRequest::new(phase, "", user)
    }

    #[test]
    fn scripted_queue_order_and_usage() {
        let backend = ScriptedBackend::new([
            ScriptEntry {
                phase: None,
                response: "A".into(),
            },
            ScriptEntry {
                phase: None,
                response: "B".into(),
            },
        ]);
        assert_eq!(
            backend.complete(&req(Phase::Design, "x")).unwrap().text,
            "A"
        );
        assert_eq!(
            backend.complete(&req(Phase::Design, "x")).unwrap().text,
            "B"
        );
        assert_eq!(
            backend.complete(&req(Phase::Design, "x")),
            Err(GatewayError::ScriptExhausted(Phase::Design))
        );

        let b = ScriptedBackend::new([ScriptEntry::new(Phase::NodeExecution, "12345678")]);
        let r = b.complete(&req(Phase::NodeExecution, "123456789")).unwrap();
        assert_eq!(r.usage.completion_tokens, 2);
        assert_eq!(r.usage.prompt_tokens, 3);
    }

    #[test]
    fn scripted_phase_matching_and_table() {
        let b = ScriptedBackend::new([
            ScriptEntry::new(Phase::NodeExecution, "node"),
            ScriptEntry::new(Phase::Routing, "route"),
        ]);
        assert_eq!(b.complete(&req(Phase::Routing, "")).unwrap().text, "route");
        assert_eq!(
            b.complete(&req(Phase::NodeExecution, "")).unwrap().text,
            "node"
        );

        let r = req(Phase::Design, "design please");
        let table = HashMap::from([(r.fingerprint(), "tabled".to_string())]);
        let b = ScriptedBackend::new([]).with_table(table);
        assert_eq!(b.complete(&r).unwrap().text, "tabled");
        assert_eq!(b.complete(&r).unwrap().text, "tabled");
        assert!(b.complete(&req(Phase::Design, "other")).is_err());
    }

    #[test]
    fn manifest_parsing() {
        let text = "{\"phase\":\"design\",\"response\":\"d\"}\n\n{\"response\":\"any\"}\n";
        let b = ScriptedBackend::from_jsonl(text).unwrap();
        assert_eq!(b.remaining(), 2);
        assert!(ScriptedBackend::from_jsonl("{\"phase\":\"nope\",\"response\":\"\"}").is_err());
    }

    #[test]
    fn ledger_accounting() {
        let mut ledger = UsageLedger::default();
        ledger.record(
            Phase::Design,
            Usage {
                prompt_tokens: 100,
                completion_tokens: 50,
            },
        );
        assert_eq!(
            ledger.phase(Phase::Design),
            PhaseUsage {
                calls: 1,
                prompt_tokens: 100,
                completion_tokens: 50
            }
        );
        ledger.record(
            Phase::Routing,
            Usage {
                prompt_tokens: 10,
                completion_tokens: 1,
            },
        );
        ledger.record(
            Phase::Routing,
            Usage {
                prompt_tokens: 5,
                completion_tokens: 2,
            },
        );
        assert_eq!(ledger.phase(Phase::Routing).calls, 2);
        assert_eq!(ledger.phase(Phase::Routing).prompt_tokens, 15);
        assert_eq!(ledger.phase(Phase::Design).calls, 1);
        let total = ledger.total();
        assert_eq!(
            (total.calls, total.prompt_tokens, total.completion_tokens),
            (3, 115, 53)
        );
        let mut merged = UsageLedger::default();
        merged.merge(&ledger);
        merged.merge(&ledger);
        assert_eq!(merged.total().calls, 6);
    }

    #[test]
    fn completion_body_parsing() {
        let doc = json!({"choices": [{"message": {"content": "hi"}}], "usage": {"prompt_tokens": 3, "completion_tokens": 1}});
        let r = parse_completion(&doc).unwrap();
        assert_eq!(r.text, "hi");
        assert_eq!(r.usage.total(), 4);
        assert!(parse_completion(&json!({"choices": []})).is_err());
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_before(1), Duration::from_secs(1));
        assert_eq!(p.delay_before(2), Duration::from_secs(2));
    }
}
