//! Access to the language model, plus token and cost accounting.

use std::fs;
use std::ops::{Add, AddAssign};
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_uncached: u64,
    pub input_cached: u64,
    pub output: u64,
}

impl TokenUsage {
    pub fn new(input_uncached: u64, input_cached: u64, output: u64) -> TokenUsage {
        TokenUsage {
            input_uncached,
            input_cached,
            output,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_uncached + self.input_cached + self.output
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            input_uncached: self.input_uncached + rhs.input_uncached,
            input_cached: self.input_cached + rhs.input_cached,
            output: self.output + rhs.output,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

/// Prices in US dollars per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PricingModel {
    pub per_million_input: f64,
    pub per_million_output: f64,
    pub cached_input_divisor: f64,
}

impl Default for PricingModel {
    fn default() -> Self {
        PricingModel {
            per_million_input: 0.4,
            per_million_output: 1.6,
            cached_input_divisor: 4.0,
        }
    }
}

pub fn cost(usage: &TokenUsage, pricing: &PricingModel) -> f64 {
    let input = pricing.per_million_input / 1e6;
    usage.input_uncached as f64 * input
        + usage.input_cached as f64 * input / pricing.cached_input_divisor
        + usage.output as f64 * pricing.per_million_output / 1e6
}

pub const DEFAULT_CHARS_PER_TOKEN: usize = 4;

pub fn estimate_tokens(text: &str, chars_per_token: usize) -> u64 {
    text.chars().count().div_ceil(chars_per_token.max(1)) as u64
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub response: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider returned an unusable response: {0}")]
    Provider(String),
    #[error("replay script exhausted after {served} responses")]
    ScriptExhausted { served: usize },
    #[error("prompt for call {cycle} has hash {actual}, script expects {expected}")]
    PromptMismatch { cycle: u32, expected: String, actual: String },
    #[error("invalid replay script: {0}")]
    Script(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff_ms: 500,
        }
    }
}

/// Calls `model`, retrying retryable failures with exponential backoff.
pub fn complete_with_retry(model: &dyn LanguageModel, prompt: &str, policy: &RetryPolicy) -> Result<Completion, GatewayError> {
    let mut backoff = Duration::from_millis(policy.initial_backoff_ms);
    let mut attempt = 1;
    loop {
        match model.complete(prompt) {
            Err(e) if e.is_retryable() && attempt < policy.attempts.max(1) => {
                tracing::warn!(attempt, error = %e, "model call failed, retrying");
                thread::sleep(backoff);
                backoff *= 2;
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// One record of a replay script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// 1-based index of the model call this entry answers.
    pub cycle: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_prompt_hash: Option<String>,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Default)]
struct ReplayCursor {
    served: usize,
    previous_prompt: Option<String>,
}

/// Deterministic backend answering calls from a script.
///
/// Entries are served in `cycle` order. Without recorded usage, usage is
/// synthesized from the prompt: the prefix shared with the previous prompt
/// counts as cached input.
#[derive(Debug)]
pub struct ScriptedGateway {
    entries: Vec<ScriptEntry>,
    repeat_last: bool,
    chars_per_token: usize,
    cursor: Mutex<ReplayCursor>,
}

impl ScriptedGateway {
    pub fn new(mut entries: Vec<ScriptEntry>) -> Result<ScriptedGateway, GatewayError> {
        entries.sort_by_key(|e| e.cycle);
        for (i, e) in entries.iter().enumerate() {
            if e.cycle != i as u32 + 1 {
                return Err(GatewayError::Script(format!(
                    "cycles must run 1..={} without gaps, found {} at position {}",
                    entries.len(),
                    e.cycle,
                    i + 1
                )));
            }
        }
        Ok(ScriptedGateway {
            entries,
            repeat_last: false,
            chars_per_token: DEFAULT_CHARS_PER_TOKEN,
            cursor: Mutex::new(ReplayCursor::default()),
        })
    }

    /// Script built from bare responses, numbered in order.
    pub fn from_responses<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> ScriptedGateway {
        let entries = responses
            .into_iter()
            .enumerate()
            .map(|(i, r)| ScriptEntry {
                cycle: i as u32 + 1,
                expected_prompt_hash: None,
                response: r.into(),
                usage: None,
            })
            .collect();
        ScriptedGateway::new(entries).expect("sequential cycles")
    }

    /// A backend answering every call with the same response, forever.
    pub fn repeating(response: impl Into<String>) -> ScriptedGateway {
        let mut g = ScriptedGateway::from_responses([response.into()]);
        g.repeat_last = true;
        g
    }

    pub fn parse(text: &str) -> Result<ScriptedGateway, GatewayError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line).map_err(|e| GatewayError::Script(format!("line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        ScriptedGateway::new(entries)
    }

    pub fn load(path: &Path) -> Result<ScriptedGateway, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))?;
        ScriptedGateway::parse(&text)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn served(&self) -> usize {
        self.cursor.lock().unwrap_or_else(|p| p.into_inner()).served
    }

    fn synthetic_usage(&self, prompt: &str, previous: Option<&str>, response: &str) -> TokenUsage {
        let shared = previous.map_or(0, |p| common_prefix_chars(p, prompt));
        let total = prompt.chars().count();
        let per = self.chars_per_token;
        TokenUsage {
            input_uncached: (total - shared).div_ceil(per) as u64,
            input_cached: (shared / per) as u64,
            output: estimate_tokens(response, per),
        }
    }
}

fn common_prefix_chars(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count()
}

impl LanguageModel for ScriptedGateway {
    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        if prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let mut cursor = self.cursor.lock().unwrap_or_else(|p| p.into_inner());
        let index = if cursor.served < self.entries.len() {
            cursor.served
        } else if self.repeat_last && !self.entries.is_empty() {
            self.entries.len() - 1
        } else {
            return Err(GatewayError::ScriptExhausted { served: cursor.served });
        };
        let entry = &self.entries[index];
        if let Some(expected) = &entry.expected_prompt_hash {
            let actual = prompt_hash(prompt);
            if &actual != expected {
                return Err(GatewayError::PromptMismatch {
                    cycle: cursor.served as u32 + 1,
                    expected: expected.clone(),
                    actual,
                });
            }
        }
        let usage = entry
            .usage
            .unwrap_or_else(|| self.synthetic_usage(prompt, cursor.previous_prompt.as_deref(), &entry.response));
        cursor.served += 1;
        cursor.previous_prompt = Some(prompt.to_string());
        Ok(Completion {
            response: entry.response.clone(),
            usage,
        })
    }
}

pub const ENV_ENDPOINT: &str = "WARNMEND_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "WARNMEND_LLM_API_KEY";
pub const ENV_MODEL: &str = "WARNMEND_LLM_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    /// When set, sent as a system message ahead of the prompt.
    pub system_message: Option<String>,
    pub timeout_secs: u64,
    pub chars_per_token: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: String::new(),
            model: String::new(),
            api_key: None,
            temperature: 0.0,
            system_message: None,
            timeout_secs: 300,
            chars_per_token: DEFAULT_CHARS_PER_TOKEN,
        }
    }
}

impl HttpConfig {
    /// Fills endpoint, key and model from the environment where unset.
    pub fn with_env(mut self) -> HttpConfig {
        if self.endpoint.is_empty() {
            self.endpoint = std::env::var(ENV_ENDPOINT).unwrap_or_default();
        }
        if self.api_key.is_none() {
            self.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        }
        if self.model.is_empty() {
            self.model = std::env::var(ENV_MODEL).unwrap_or_default();
        }
        self
    }
}

/// Chat-completion backend over HTTP.
pub struct HttpGateway {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpGateway {
    pub fn new(config: HttpConfig) -> Result<HttpGateway, GatewayError> {
        if config.endpoint.is_empty() {
            return Err(GatewayError::Script(format!("no endpoint configured (set {ENV_ENDPOINT})")));
        }
        if config.model.is_empty() {
            return Err(GatewayError::Script(format!("no model configured (set {ENV_MODEL})")));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(HttpGateway { config, agent })
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &self.config.system_message {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": prompt}));
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        })
    }
}

/// Extracts the reply text and usage from a chat-completion envelope.
pub fn parse_envelope(envelope: &Value, prompt: &str, chars_per_token: usize) -> Result<Completion, GatewayError> {
    let response = envelope
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Provider("no choices[0].message.content in response".into()))?
        .to_string();
    let usage = match envelope.get("usage") {
        Some(u) => {
            let prompt_tokens = u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0);
            let cached = u
                .pointer("/prompt_tokens_details/cached_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0)
                .min(prompt_tokens);
            TokenUsage {
                input_uncached: prompt_tokens - cached,
                input_cached: cached,
                output: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
            }
        }
        None => TokenUsage {
            input_uncached: estimate_tokens(prompt, chars_per_token),
            input_cached: 0,
            output: estimate_tokens(&response, chars_per_token),
        },
    };
    Ok(Completion { response, usage })
}

impl LanguageModel for HttpGateway {
    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        if prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let mut request = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(self.request_body(prompt)).map_err(|e| match e {
            ureq::Error::StatusCode(code) if (400..500).contains(&code) && code != 429 => {
                GatewayError::Provider(format!("HTTP status {code}"))
            }
            other => GatewayError::Transport(other.to_string()),
        })?;
        let envelope: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| GatewayError::Provider(format!("unreadable body: {e}")))?;
        parse_envelope(&envelope, prompt, self.config.chars_per_token)
    }
}
