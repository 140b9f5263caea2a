//! LLM client boundary: the [`LlmClient`] trait, an OpenAI-compatible HTTP
//! implementation with bounded retries, deterministic mocks, and
//! record/replay wrappers keyed by request hash.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClientError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no recorded completion for request {0}")]
    ReplayMiss(String),
    #[error("replay log error: {0}")]
    Log(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub settings: GenerationSettings,
}

impl CompletionRequest {
    pub fn new(model: impl Into<String>, prompt: impl Into<String>, settings: GenerationSettings) -> Self {
        CompletionRequest {
            model: model.into(),
            prompt: prompt.into(),
            settings,
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub trait LlmClient: Send + Sync {
    /// Model name placed into requests built for this client.
    fn model(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError>;
}

impl<C: LlmClient + ?Sized> LlmClient for Box<C> {
    fn model(&self) -> &str {
        (**self).model()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts including the first one.
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.min(20);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpClientConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

/// Chat-completion client speaking `{model, messages, temperature}`.
pub struct HttpClient {
    config: HttpClientConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fail(ClientError),
}

impl HttpClient {
    /// Reads the credential from `config.api_key_env`; a missing variable is
    /// an error unless `allow_anonymous` (local servers).
    pub fn new(config: HttpClientConfig, allow_anonymous: bool) -> Result<Self, ClientError> {
        let api_key = match std::env::var(&config.api_key_env) {
            Ok(key) => Some(key),
            Err(_) if allow_anonymous => None,
            Err(_) => return Err(ClientError::MissingCredential(config.api_key_env.clone())),
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpClient {
            config,
            api_key,
            agent,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &ChatRequest<'_>) -> Attempt {
        let mut req = self.agent.post(&self.endpoint());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(resp) => resp,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(text) => text,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}: {text}"));
        }
        if status >= 400 {
            return Attempt::Fail(ClientError::Http { status, body: text });
        }
        match serde_json::from_str::<ChatResponse>(&text) {
            Ok(parsed) => match parsed.choices.into_iter().next().and_then(|c| c.message.content) {
                Some(content) => Attempt::Done(content),
                None => Attempt::Fail(ClientError::Malformed("response has no message content".into())),
            },
            Err(e) => Attempt::Fail(ClientError::Malformed(e.to_string())),
        }
    }
}

impl LlmClient for HttpClient {
    fn model(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let body = ChatRequest {
            model: &request.model,
            messages: vec![ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.settings.temperature,
            max_tokens: request.settings.max_tokens,
        };
        let attempts = self.config.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(err) => return Err(err),
                Attempt::Retry(msg) => {
                    log::warn!("LLM request attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                    if attempt + 1 < attempts {
                        std::thread::sleep(self.config.retry.delay(attempt));
                    }
                }
            }
        }
        Err(ClientError::RetriesExhausted { attempts, last })
    }
}

/// Answers an ICL prompt with the label of its first demonstration.
///
/// With this client, accuracy equals the top-1 label-match rate of the
/// retrieval strategy.
#[derive(Debug, Clone, Default)]
pub struct EchoFirstDemonstration;

impl LlmClient for EchoFirstDemonstration {
    fn model(&self) -> &str {
        "mock-echo-first-demonstration"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let demos = request
            .prompt
            .split_once(super::prompt::DEMONSTRATIONS_HEADER)
            .map(|(_, rest)| rest)
            .ok_or_else(|| ClientError::Malformed("prompt has no demonstrations block".into()))?;
        demos
            .lines()
            .find_map(|line| line.trim_start().strip_prefix(super::prompt::DEMO_LABEL_PREFIX))
            .map(|label| format!("Label: {}", label.trim()))
            .ok_or_else(|| ClientError::Malformed("demonstrations block has no labels".into()))
    }
}

/// Produces one canned description per label listed in a rationale prompt.
#[derive(Debug, Clone, Default)]
pub struct TemplateRationales;

impl LlmClient for TemplateRationales {
    fn model(&self) -> &str {
        "mock-template-rationales"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let labels = super::prompt::labels_from_rationale_prompt(&request.prompt)
            .ok_or_else(|| ClientError::Malformed("prompt has no label list".into()))?;
        let mut out = String::new();
        for label in labels {
            out.push_str(&format!(
                "{label}: Lexical Patterns: wording typical of {label} texts. \
                 Semantic-Pragmatic Features: stance consistent with {label}. \
                 Domain-Attribute Associations: attributes usually judged {label}.\n"
            ));
        }
        Ok(out)
    }
}

/// Always answers with the same text.
#[derive(Debug, Clone)]
pub struct FixedResponse {
    pub text: String,
}

impl LlmClient for FixedResponse {
    fn model(&self) -> &str {
        "mock-fixed"
    }

    fn complete(&self, _request: &CompletionRequest) -> Result<String, ClientError> {
        Ok(self.text.clone())
    }
}

/// One line of the request/response log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub request_hash: String,
    pub slot: String,
    pub request: CompletionRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Appends every exchange of the wrapped client to a JSON-lines log.
pub struct Recording<C> {
    inner: C,
    slot: String,
    sink: Mutex<File>,
}

impl<C: LlmClient> Recording<C> {
    pub fn new(inner: C, slot: impl Into<String>, log_path: &Path) -> std::io::Result<Self> {
        let sink = OpenOptions::new().create(true).append(true).open(log_path)?;
        Ok(Recording {
            inner,
            slot: slot.into(),
            sink: Mutex::new(sink),
        })
    }
}

impl<C: LlmClient> LlmClient for Recording<C> {
    fn model(&self) -> &str {
        self.inner.model()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let result = self.inner.complete(request);
        let entry = LogEntry {
            request_hash: request.hash(),
            slot: self.slot.clone(),
            request: request.clone(),
            completion: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| e.to_string()),
        };
        let mut line = serde_json::to_string(&entry).expect("log entry serializes");
        line.push('\n');
        let mut sink = self.sink.lock().expect("log lock poisoned");
        sink.write_all(line.as_bytes())
            .map_err(|e| ClientError::Log(e.to_string()))?;
        result
    }
}

/// Serves completions from a recorded log; never touches the network.
pub struct Replay {
    model: String,
    entries: HashMap<String, Result<String, String>>,
}

impl Replay {
    /// Loads the entries recorded for `slot` (all slots when `None`).
    pub fn from_log(path: &Path, slot: Option<&str>) -> Result<Self, ClientError> {
        let file = File::open(path).map_err(|e| ClientError::Log(format!("{}: {e}", path.display())))?;
        let mut entries = HashMap::new();
        let mut model = String::from("replay");
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ClientError::Log(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LogEntry = serde_json::from_str(&line)
                .map_err(|e| ClientError::Log(format!("{}:{}: {e}", path.display(), idx + 1)))?;
            if slot.is_some_and(|s| s != entry.slot) {
                continue;
            }
            model = entry.request.model.clone();
            let value = match (entry.completion, entry.error) {
                (Some(c), _) => Ok(c),
                (None, Some(e)) => Err(e),
                (None, None) => Err("empty log entry".to_string()),
            };
            entries.insert(entry.request_hash, value);
        }
        Ok(Replay { model, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl LlmClient for Replay {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let hash = request.hash();
        match self.entries.get(&hash) {
            Some(Ok(text)) => Ok(text.clone()),
            Some(Err(msg)) => Err(ClientError::Transport(msg.clone())),
            None => Err(ClientError::ReplayMiss(hash)),
        }
    }
}

/// Where a client slot gets its completions from.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientSource {
    Http(HttpClientConfig),
    EchoMock,
    RationaleMock,
    Replay(PathBuf),
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Read;
    use std::net::TcpListener;

    fn request(prompt: &str) -> CompletionRequest {
        CompletionRequest::new("m", prompt, GenerationSettings::default())
    }

    #[test]
    fn request_hash_is_stable_and_sensitive() {
        let a = request("hello");
        assert_eq!(a.hash(), request("hello").hash());
        assert_ne!(a.hash(), request("hello!").hash());
        let mut b = a.clone();
        b.settings.temperature = 0.5;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn backoff_is_bounded() {
        let p = RetryPolicy {
            max_attempts: 10,
            base_delay_ms: 100,
            max_delay_ms: 1000,
        };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(2), Duration::from_millis(400));
        assert_eq!(p.delay(9), Duration::from_millis(1000));
    }

    /// Serves the given raw HTTP responses in order, one per connection, and
    /// returns the request bodies it saw.
    fn serve(responses: Vec<String>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for resp in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf).to_string();
                    if let Some(idx) = text.find("\r\n\r\n") {
                        let len = text
                            .lines()
                            .find_map(|l| {
                                let lower = l.to_ascii_lowercase();
                                lower.strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if buf.len() >= idx + 4 + len {
                            seen.push(text[idx + 4..].to_string());
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                stream.write_all(resp.as_bytes()).unwrap();
            }
            seen
        });
        (format!("http://{addr}"), handle)
    }

    fn http_response(status: &str, body: &str) -> String {
        format!(
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
    }

    fn config(base_url: String) -> HttpClientConfig {
        HttpClientConfig {
            base_url,
            model: "test-model".into(),
            api_key_env: "MKGP_TEST_KEY_THAT_IS_NOT_SET".into(),
            timeout_secs: 5,
            retry: RetryPolicy {
                max_attempts: 3,
                base_delay_ms: 1,
                max_delay_ms: 2,
            },
        }
    }

    #[test]
    fn http_client_retries_server_errors() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"Label: positive"}}]}"#;
        let (url, handle) = serve(vec![
            http_response("503 Service Unavailable", "{}"),
            http_response("200 OK", ok),
        ]);
        let client = HttpClient::new(config(url), true).unwrap();
        let out = client.complete(&request("classify this")).unwrap();
        assert_eq!(out, "Label: positive");
        let bodies = handle.join().unwrap();
        assert_eq!(bodies.len(), 2);
        let body: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "classify this");
        assert_eq!(body["temperature"], 0.0);
    }

    #[test]
    fn http_client_gives_up_after_bounded_attempts() {
        let (url, handle) = serve(vec![
            http_response("500 Internal Server Error", "{}"),
            http_response("429 Too Many Requests", "{}"),
            http_response("502 Bad Gateway", "{}"),
        ]);
        let client = HttpClient::new(config(url), true).unwrap();
        let err = client.complete(&request("x")).unwrap_err();
        assert!(matches!(err, ClientError::RetriesExhausted { attempts: 3, .. }), "{err:?}");
        assert_eq!(handle.join().unwrap().len(), 3);
    }

    #[test]
    fn http_client_does_not_retry_client_errors() {
        let (url, handle) = serve(vec![http_response("401 Unauthorized", r#"{"error":"bad key"}"#)]);
        let client = HttpClient::new(config(url), true).unwrap();
        let err = client.complete(&request("x")).unwrap_err();
        assert!(matches!(err, ClientError::Http { status: 401, .. }));
        assert_eq!(handle.join().unwrap().len(), 1);
    }

    #[test]
    fn missing_credential_is_reported() {
        let err = HttpClient::new(config("http://localhost:1".into()), false).err().unwrap();
        assert_eq!(err, ClientError::MissingCredential("MKGP_TEST_KEY_THAT_IS_NOT_SET".into()));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("llm.jsonl");
        let recorder = Recording::new(
            FixedResponse {
                text: "Label: 2".into(),
            },
            "icl",
            &log,
        )
        .unwrap();
        assert_eq!(recorder.complete(&request("a")).unwrap(), "Label: 2");
        drop(recorder);
        let replay = Replay::from_log(&log, Some("icl")).unwrap();
        assert_eq!(replay.len(), 1);
        assert_eq!(replay.complete(&request("a")).unwrap(), "Label: 2");
        assert!(matches!(replay.complete(&request("b")), Err(ClientError::ReplayMiss(_))));
        assert!(Replay::from_log(&log, Some("rationale")).unwrap().is_empty());
    }
}
