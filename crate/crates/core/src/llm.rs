//! Provider-agnostic chat gateway with token accounting and record/replay.
//!
//! Every request passes through [`Gateway::chat`], which stamps the
//! security-researcher system text for the active vulnerability class,
//! enforces token limits, and either forwards the request to a live provider
//! (persisting the exchange) or serves it from a recorded transcript.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::report_store::VulnClass;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no recorded exchange for request digest {0}")]
    ReplayMiss(String),
    #[error("provider failure after retry: {0}")]
    Provider(String),
    #[error("token budget exhausted ({tokens_in} in / {tokens_out} out)")]
    Budget { tokens_in: u64, tokens_out: u64 },
    #[error("transcript i/o: {0}")]
    Transcript(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// A function the model may call instead of answering in text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDeclaration {
    pub name: String,
    pub description: String,
    /// JSON schema of the arguments object.
    pub parameters: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Free-form label of the pipeline step issuing the request
    /// (`classify`, `rank`, `generate`, ...). Part of the digest.
    #[serde(default)]
    pub purpose: String,
    #[serde(default)]
    pub system_text: String,
    #[serde(default)]
    pub messages: Vec<Message>,
    #[serde(default)]
    pub tool_declarations: Vec<ToolDeclaration>,
}

impl ChatRequest {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            messages: vec![Message::user(content)],
            ..Self::default()
        }
    }

    pub fn with_purpose(mut self, purpose: &str) -> Self {
        self.purpose = purpose.to_string();
        self
    }

    pub fn with_tool(mut self, tool: ToolDeclaration) -> Self {
        self.tool_declarations.push(tool);
        self
    }

    /// Canonical JSON text: sorted keys, message texts with runs of
    /// whitespace collapsed to one space.
    pub fn canonical_json(&self) -> String {
        let mut normalized = self.clone();
        normalized.system_text = normalize_ws(&normalized.system_text);
        for m in &mut normalized.messages {
            m.content = normalize_ws(&m.content);
        }
        // serde_json's default map is ordered, so going through Value sorts keys.
        let value = serde_json::to_value(&normalized).expect("request serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChatResponse {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default)]
    pub tokens_in: u64,
    #[serde(default)]
    pub tokens_out: u64,
}

impl ChatResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Self::default()
        }
    }
}

/// One persisted request/response pair. Hand-written transcripts may leave
/// `request_digest` empty, in which case the entry is served positionally.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChatExchange {
    #[serde(default)]
    pub request: ChatRequest,
    pub response: ChatResponse,
    #[serde(default)]
    pub request_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub tokens_in: u64,
    pub tokens_out: u64,
}

/// Adds one exchange to the running totals.
pub fn account(totals: Usage, exchange: &ChatExchange) -> Usage {
    Usage {
        tokens_in: totals.tokens_in + exchange.response.tokens_in,
        tokens_out: totals.tokens_out + exchange.response.tokens_out,
    }
}

/// Reads a JSON-Lines transcript. Blank lines are ignored.
pub fn load_transcript(path: &Path) -> Result<Vec<ChatExchange>, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))?;
    parse_transcript(&text)
}

pub fn parse_transcript(text: &str) -> Result<Vec<ChatExchange>, GatewayError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| GatewayError::Transcript(format!("line {}: {e}", i + 1))))
        .collect()
}

/// Backend of live mode.
pub trait ChatProvider: Send {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, String>;
}

/// OpenAI-compatible chat-completions endpoint.
pub struct OpenAiProvider {
    agent: ureq::Agent,
    url: String,
    key: String,
    pub model: String,
    pub temperature: f64,
}

pub const DEFAULT_MODEL: &str = "gpt-4o-mini-2024-07-18";
pub const DEFAULT_URL: &str = "https://api.openai.com/v1/chat/completions";

impl OpenAiProvider {
    /// Reads `POCGEN_LLM_KEY`, `POCGEN_LLM_URL` and `POCGEN_LLM_MODEL`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let key = std::env::var("POCGEN_LLM_KEY")
            .map_err(|_| GatewayError::Provider("POCGEN_LLM_KEY is not set".into()))?;
        let url = std::env::var("POCGEN_LLM_URL").unwrap_or_else(|_| DEFAULT_URL.to_string());
        let model = std::env::var("POCGEN_LLM_MODEL").unwrap_or_else(|_| DEFAULT_MODEL.to_string());
        Ok(Self::new(url, key, model))
    }

    pub fn new(url: String, key: String, model: String) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            url,
            key,
            model,
            temperature: 0.0,
        }
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut messages = vec![serde_json::json!({"role": "system", "content": request.system_text})];
        messages.extend(
            request
                .messages
                .iter()
                .map(|m| serde_json::json!({"role": m.role, "content": m.content})),
        );
        let mut body = serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": messages,
        });
        if !request.tool_declarations.is_empty() {
            body["tools"] = request
                .tool_declarations
                .iter()
                .map(|t| {
                    serde_json::json!({
                        "type": "function",
                        "function": {"name": t.name, "description": t.description, "parameters": t.parameters}
                    })
                })
                .collect();
        }
        body
    }
}

impl ChatProvider for OpenAiProvider {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, String> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(self.body(request))
            .map_err(|e| e.to_string())?;
        let value: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        parse_openai_response(&value)
    }
}

pub fn parse_openai_response(value: &Value) -> Result<ChatResponse, String> {
    let message = value
        .pointer("/choices/0/message")
        .ok_or_else(|| format!("response without choices: {value}"))?;
    let text = message.get("content").and_then(Value::as_str).unwrap_or_default().to_string();
    let tool_calls = message
        .get("tool_calls")
        .and_then(Value::as_array)
        .map(|calls| {
            calls
                .iter()
                .filter_map(|c| {
                    let f = c.get("function")?;
                    let name = f.get("name")?.as_str()?.to_string();
                    let arguments = match f.get("arguments") {
                        Some(Value::String(s)) => serde_json::from_str(s).unwrap_or(Value::String(s.clone())),
                        Some(v) => v.clone(),
                        None => Value::Null,
                    };
                    Some(ToolCall { name, arguments })
                })
                .collect()
        })
        .unwrap_or_default();
    let usage = |k: &str| value.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Ok(ChatResponse {
        text,
        tool_calls,
        tokens_in: usage("prompt_tokens"),
        tokens_out: usage("completion_tokens"),
    })
}

enum Backend {
    Live {
        provider: Box<dyn ChatProvider>,
        transcript_path: Option<PathBuf>,
    },
    Replay {
        entries: Vec<ChatExchange>,
        consumed: Vec<bool>,
    },
}

/// Token ceilings checked before each request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenLimits {
    pub max_tokens_in: u64,
    pub max_tokens_out: u64,
}

/// A chat session confined to one pipeline instance.
pub struct Gateway {
    backend: Backend,
    class: Option<VulnClass>,
    limits: Option<TokenLimits>,
    usage: Usage,
    log: Vec<ChatExchange>,
}

impl Gateway {
    pub fn live(provider: Box<dyn ChatProvider>, transcript_path: Option<PathBuf>) -> Self {
        Self::with_backend(Backend::Live {
            provider,
            transcript_path,
        })
    }

    pub fn replay(entries: Vec<ChatExchange>) -> Self {
        let consumed = vec![false; entries.len()];
        Self::with_backend(Backend::Replay { entries, consumed })
    }

    pub fn replay_file(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::replay(load_transcript(path)?))
    }

    fn with_backend(backend: Backend) -> Self {
        Self {
            backend,
            class: None,
            limits: None,
            usage: Usage::default(),
            log: Vec::new(),
        }
    }

    pub fn set_class(&mut self, class: VulnClass) {
        self.class = Some(class);
    }

    pub fn set_limits(&mut self, limits: TokenLimits) {
        self.limits = Some(limits);
    }

    pub fn usage(&self) -> Usage {
        self.usage
    }

    /// Exchanges performed by this session, in order.
    pub fn exchanges(&self) -> &[ChatExchange] {
        &self.log
    }

    /// Replay entries not yet served; always 0 in live mode.
    pub fn remaining(&self) -> usize {
        match &self.backend {
            Backend::Replay { consumed, .. } => consumed.iter().filter(|c| !**c).count(),
            Backend::Live { .. } => 0,
        }
    }

    pub fn chat(&mut self, mut request: ChatRequest) -> Result<ChatResponse, GatewayError> {
        if let Some(limits) = self.limits {
            if self.usage.tokens_in > limits.max_tokens_in || self.usage.tokens_out > limits.max_tokens_out {
                return Err(GatewayError::Budget {
                    tokens_in: self.usage.tokens_in,
                    tokens_out: self.usage.tokens_out,
                });
            }
        }
        request.system_text = system_text(self.class);
        let digest = request.digest();

        let response = match &mut self.backend {
            Backend::Replay { entries, consumed } => {
                let by_digest = (0..entries.len()).find(|&i| !consumed[i] && entries[i].request_digest == digest);
                let idx = by_digest
                    .or_else(|| (0..entries.len()).find(|&i| !consumed[i] && entries[i].request_digest.is_empty()))
                    .ok_or_else(|| GatewayError::ReplayMiss(digest.clone()))?;
                consumed[idx] = true;
                entries[idx].response.clone()
            }
            Backend::Live {
                provider,
                transcript_path,
            } => {
                let response = match provider.complete(&request) {
                    Ok(r) => r,
                    Err(first) => {
                        tracing::warn!(error = %first, "provider call failed, retrying once");
                        provider.complete(&request).map_err(GatewayError::Provider)?
                    }
                };
                if let Some(path) = transcript_path {
                    let exchange = ChatExchange {
                        request: request.clone(),
                        response: response.clone(),
                        request_digest: digest.clone(),
                    };
                    append_exchange(path, &exchange)?;
                }
                response
            }
        };

        let exchange = ChatExchange {
            request,
            response: response.clone(),
            request_digest: digest,
        };
        self.usage = account(self.usage, &exchange);
        self.log.push(exchange);
        Ok(response)
    }
}

fn append_exchange(path: &Path, exchange: &ChatExchange) -> Result<(), GatewayError> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))?;
    let line = serde_json::to_string(exchange).expect("exchange serializes");
    writeln!(file, "{line}").map_err(|e| GatewayError::Transcript(e.to_string()))
}

/// Role assignment sent with every request.
pub fn system_text(class: Option<VulnClass>) -> String {
    match class {
        Some(c) => format!(
            "You are a security researcher specialized in creating exploits for {} vulnerabilities in npm packages. \
             Answer precisely and put code in fenced code blocks.",
            c.display_name()
        ),
        None => "You are a security researcher specialized in analyzing vulnerabilities in npm packages and creating exploits for them. \
                 Answer precisely and put code in fenced code blocks."
            .to_string(),
    }
}
