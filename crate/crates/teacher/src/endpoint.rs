use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tagdistill_core::hashing::derive_seed;
use tagdistill_core::teacher::{canonical_reply, mock_teacher_annotate, MessageSequence, MockTeacher};
use thiserror::Error;

/// Environment variable holding the bearer token for the endpoint.
pub const API_KEY_ENV: &str = "TEACHER_API_KEY";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("could not reach endpoint: {0}")]
    Connect(String),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint answered {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

impl TransportError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Connect(_) => "Connect",
            Self::Timeout => "Timeout",
            Self::Status { .. } => "HttpStatus",
            Self::Decode(_) => "BadResponse",
        }
    }
}

#[async_trait]
pub trait ChatEndpoint: Send + Sync {
    /// Recorded as `model_id` on produced annotations.
    fn model_id(&self) -> &str;

    /// Returns the assistant message content.
    async fn complete(&self, messages: &MessageSequence, temperature: f64) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Full URL of the chat-completions route.
    pub url: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
}

impl EndpointConfig {
    /// Config with the API key taken from [`API_KEY_ENV`] when set.
    pub fn from_env(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout_secs: 120,
        }
    }
}

/// Client for the common chat-completions wire shape: POST
/// `{model, messages, temperature}`, read `choices[0].message.content`.
pub struct HttpEndpoint {
    client: reqwest::Client,
    config: EndpointConfig,
}

impl HttpEndpoint {
    pub fn new(config: EndpointConfig) -> Result<Self, TransportError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        Ok(Self { client, config })
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

#[async_trait]
impl ChatEndpoint for HttpEndpoint {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    async fn complete(&self, messages: &MessageSequence, temperature: f64) -> Result<String, TransportError> {
        let body = json!({
            "model": self.config.model,
            "messages": messages.messages(),
            "temperature": temperature,
        });
        let mut req = self.client.post(&self.config.url).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| TransportError::Decode(e.to_string()))?;
        if !status.is_success() {
            let body: String = text.chars().take(200).collect();
            return Err(TransportError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError::Decode("no choices[0].message.content".into()))
    }
}

/// Offline teacher: labels the prompt's document with the keyword mock and
/// answers in the canonical reply format. Noise draws are seeded by the
/// document text, so replies do not depend on request order.
pub struct MockEndpoint {
    teacher: MockTeacher,
    seed: u64,
    model_id: String,
}

impl MockEndpoint {
    pub fn new(teacher: MockTeacher, seed: u64) -> Self {
        let model_id = format!("mock-keyword-eps{}", teacher.noise);
        Self {
            teacher,
            seed,
            model_id,
        }
    }
}

#[async_trait]
impl ChatEndpoint for MockEndpoint {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    async fn complete(&self, messages: &MessageSequence, _temperature: f64) -> Result<String, TransportError> {
        let text = messages.document();
        let spans = mock_teacher_annotate(text, &self.teacher, derive_seed(self.seed, text));
        Ok(canonical_reply(text, &spans))
    }
}

type Responder = dyn Fn(&str, usize) -> Result<String, TransportError> + Send + Sync;

/// Test endpoint answering from a closure of `(document text, attempt)`,
/// where `attempt` counts calls for that document starting at 1.
pub struct ScriptedEndpoint {
    model_id: String,
    responder: Box<Responder>,
    calls: Mutex<HashMap<String, usize>>,
    delay: Duration,
    in_flight: Mutex<(usize, usize)>,
}

impl ScriptedEndpoint {
    pub fn new(
        model_id: impl Into<String>,
        responder: impl Fn(&str, usize) -> Result<String, TransportError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            responder: Box::new(responder),
            calls: Mutex::new(HashMap::new()),
            delay: Duration::ZERO,
            in_flight: Mutex::new((0, 0)),
        }
    }

    /// Holds every request open for `delay` before answering.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Calls received for a document so far.
    pub fn calls_for(&self, text: &str) -> usize {
        self.calls.lock().unwrap().get(text).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> usize {
        self.calls.lock().unwrap().values().sum()
    }

    /// Largest number of requests observed in flight at once.
    pub fn peak_in_flight(&self) -> usize {
        self.in_flight.lock().unwrap().1
    }
}

#[async_trait]
impl ChatEndpoint for ScriptedEndpoint {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    async fn complete(&self, messages: &MessageSequence, _temperature: f64) -> Result<String, TransportError> {
        let text = messages.document().to_string();
        let attempt = {
            let mut calls = self.calls.lock().unwrap();
            let n = calls.entry(text.clone()).or_insert(0);
            *n += 1;
            *n
        };
        {
            let mut f = self.in_flight.lock().unwrap();
            f.0 += 1;
            f.1 = f.1.max(f.0);
        }
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        self.in_flight.lock().unwrap().0 -= 1;
        (self.responder)(&text, attempt)
    }
}
