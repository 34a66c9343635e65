//! "Send transcript, receive text": an OpenAI-compatible chat-completion
//! client and deterministic mock models behind one [`ChatModel`] trait.

use std::fmt;
use std::io::Read;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Label;
use crate::promptkit::{Message, Role, Symbol, Transcript};

/// Environment variable holding the bearer token for HTTP endpoints.
pub const API_KEY_ENV: &str = "STEREOPROBE_API_KEY";

pub const REFUSAL_TEXT: &str = "I cannot answer that.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub n: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            max_tokens: 5,
            temperature: 0.1,
            n: 1,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<(), AdapterError> {
        if self.max_tokens == 0 || self.n == 0 || self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(AdapterError::Config(format!(
                "invalid decode params: max_tokens={}, temperature={}, n={}",
                self.max_tokens, self.temperature, self.n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdapterError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("protocol error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Protocol { status: Option<u16>, message: String },
    #[error("adapter configuration: {0}")]
    Config(String),
}

impl AdapterError {
    pub fn class(&self) -> &'static str {
        match self {
            AdapterError::Transport { .. } => "transport",
            AdapterError::Protocol { .. } => "protocol",
            AdapterError::Config(_) => "config",
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            AdapterError::Protocol { status, .. } => *status,
            _ => None,
        }
    }

    pub fn attempts(&self) -> u32 {
        match self {
            AdapterError::Transport { attempts, .. } => *attempts,
            _ => 1,
        }
    }
}

/// A secret that never prints.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Secret(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

/// Exponential backoff with multiplicative jitter in `[1, 1.5)`, capped.
/// Successive delays never decrease.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub base: Duration,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_millis(500),
            cap: Duration::from_secs(30),
        }
    }
}

impl Backoff {
    /// Delay before retry number `retry` (0-based). `jitter` is clamped to `[0, 1)`.
    pub fn delay(&self, retry: u32, jitter: f64) -> Duration {
        let jitter = jitter.clamp(0.0, 0.999_999);
        let factor = 2f64.powi(retry.min(30) as i32) * (1.0 + jitter / 2.0);
        self.base.mul_f64(factor).min(self.cap)
    }
}

#[derive(Debug, Clone)]
pub struct AdapterEndpoint {
    pub base_url: String,
    pub model_name: String,
    pub auth_token: Option<Secret>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff: Backoff,
}

impl AdapterEndpoint {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Result<Self, AdapterError> {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        let rest = base_url
            .strip_prefix("http://")
            .or_else(|| base_url.strip_prefix("https://"));
        if rest.is_none_or(|r| r.is_empty() || r.starts_with('/')) {
            return Err(AdapterError::Config(format!(
                "base_url must be an absolute http(s) URL, got {base_url:?}"
            )));
        }
        Ok(Self {
            base_url,
            model_name: model_name.into(),
            auth_token: None,
            timeout: Duration::from_secs(30),
            max_retries: 3,
            backoff: Backoff::default(),
        })
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

/// One call: the transcript plus, for mock models, the symbol→label mapping
/// of the item being asked about.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub transcript: &'a Transcript,
    pub params: &'a DecodeParams,
    pub choices: Option<&'a [(Symbol, Label)]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawReply {
    pub text: String,
    pub latency: Duration,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HealthStatus {
    Reachable { latency: Duration },
    Unreachable { reason: String },
    Failed(AdapterError),
}

impl HealthStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, HealthStatus::Reachable { .. })
    }
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<RawReply, AdapterError>;

    /// Stable identity recorded in run manifests.
    fn identity(&self) -> String;

    fn health_check(&self) -> HealthStatus {
        let transcript = Transcript {
            messages: vec![Message::user("Reply with A.")],
        };
        let params = DecodeParams::default();
        let start = Instant::now();
        match self.complete(&ChatRequest {
            transcript: &transcript,
            params: &params,
            choices: None,
        }) {
            Ok(_) => HealthStatus::Reachable {
                latency: start.elapsed(),
            },
            Err(AdapterError::Transport { message, .. }) => HealthStatus::Unreachable { reason: message },
            Err(other) => HealthStatus::Failed(other),
        }
    }
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<RawReply, AdapterError> {
        (**self).complete(request)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }

    fn health_check(&self) -> HealthStatus {
        (**self).health_check()
    }
}

impl<T: ChatModel + ?Sized> ChatModel for Box<T> {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<RawReply, AdapterError> {
        (**self).complete(request)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }

    fn health_check(&self) -> HealthStatus {
        (**self).health_check()
    }
}

pub fn health_check(model: &dyn ChatModel) -> HealthStatus {
    model.health_check()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MockPolicy {
    AlwaysStereotype,
    AlwaysAnti,
    FixedSymbol(Symbol),
    SeededRandom(u64),
    Refuser,
    /// Echo the payload of the last user message, with a leading
    /// `"paraphrase: "` or instruction line removed.
    Identity,
}

impl fmt::Display for MockPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MockPolicy::AlwaysStereotype => f.write_str("mock:always_stereotype"),
            MockPolicy::AlwaysAnti => f.write_str("mock:always_anti"),
            MockPolicy::FixedSymbol(s) => write!(f, "mock:fixed:{s}"),
            MockPolicy::SeededRandom(seed) => write!(f, "mock:random:seed={seed}"),
            MockPolicy::Refuser => f.write_str("mock:refuser"),
            MockPolicy::Identity => f.write_str("mock:identity"),
        }
    }
}

impl FromStr for MockPolicy {
    type Err = AdapterError;

    fn from_str(s: &str) -> Result<Self, AdapterError> {
        let bad = || AdapterError::Config(format!("unknown mock adapter {s:?}"));
        let rest = s.strip_prefix("mock:").ok_or_else(bad)?;
        let mut parts = rest.splitn(2, ':');
        let kind = parts.next().unwrap_or_default();
        let arg = parts.next();
        Ok(match (kind, arg) {
            ("always_stereotype", None) => MockPolicy::AlwaysStereotype,
            ("always_anti", None) => MockPolicy::AlwaysAnti,
            ("refuser", None) => MockPolicy::Refuser,
            ("identity", None) => MockPolicy::Identity,
            ("fixed" | "fixed_symbol", Some(sym)) => {
                MockPolicy::FixedSymbol(sym.parse().map_err(|_| bad())?)
            }
            ("random" | "seeded_random", arg) => {
                let seed = match arg {
                    None => 0,
                    Some(a) => a
                        .strip_prefix("seed=")
                        .unwrap_or(a)
                        .parse()
                        .map_err(|_| bad())?,
                };
                MockPolicy::SeededRandom(seed)
            }
            _ => return Err(bad()),
        })
    }
}

/// Deterministic in-process model. Replies cost no I/O and report zero
/// latency so run records are byte-stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockModel {
    pub policy: MockPolicy,
}

impl MockModel {
    pub fn new(policy: MockPolicy) -> Self {
        Self { policy }
    }

    fn reply_text(&self, request: &ChatRequest<'_>) -> Result<String, AdapterError> {
        let by_label = |label: Label| {
            let choices = request.choices.ok_or_else(|| AdapterError::Protocol {
                status: None,
                message: format!("{} needs the item binding", self.policy),
            })?;
            choices
                .iter()
                .find(|(_, l)| *l == label)
                .map(|(s, _)| s.to_string())
                .ok_or_else(|| AdapterError::Protocol {
                    status: None,
                    message: format!("no option labelled {}", label.as_str()),
                })
        };
        match self.policy {
            MockPolicy::AlwaysStereotype => by_label(Label::Stereotype),
            MockPolicy::AlwaysAnti => by_label(Label::AntiStereotype),
            MockPolicy::FixedSymbol(s) => Ok(s.to_string()),
            MockPolicy::Refuser => Ok(REFUSAL_TEXT.to_string()),
            MockPolicy::Identity => Ok(echo_payload(request.transcript)),
            MockPolicy::SeededRandom(seed) => {
                let symbols: Vec<Symbol> = match request.choices {
                    Some(c) => c.iter().map(|(s, _)| *s).collect(),
                    None => transcript_symbols(request.transcript),
                };
                if symbols.is_empty() {
                    return Ok(Symbol::A.to_string());
                }
                let mut hasher = Sha256::new();
                hasher.update(seed.to_le_bytes());
                hasher.update(serde_json::to_vec(request.transcript).expect("serializable"));
                let digest = hasher.finalize();
                let mut word = [0u8; 8];
                word.copy_from_slice(&digest[..8]);
                let pick = u64::from_le_bytes(word) % symbols.len() as u64;
                Ok(symbols[pick as usize].to_string())
            }
        }
    }
}

fn echo_payload(transcript: &Transcript) -> String {
    let last = transcript.last_user().unwrap_or_default();
    if let Some(rest) = last.strip_prefix("paraphrase: ") {
        return rest.to_string();
    }
    match last.split_once('\n') {
        Some((_, rest)) => rest.to_string(),
        None => last.to_string(),
    }
}

/// Symbols offered by `"X: ..."` user messages, in order of appearance.
pub fn transcript_symbols(transcript: &Transcript) -> Vec<Symbol> {
    transcript
        .messages
        .iter()
        .filter(|m| m.role == Role::User)
        .filter_map(|m| {
            let (head, _) = m.content.split_once(": ")?;
            Symbol::ALL.into_iter().find(|s| s.as_str() == head)
        })
        .collect()
}

impl ChatModel for MockModel {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<RawReply, AdapterError> {
        Ok(RawReply {
            text: self.reply_text(request)?,
            latency: Duration::ZERO,
            attempt_count: 1,
        })
    }

    fn identity(&self) -> String {
        self.policy.to_string()
    }

    fn health_check(&self) -> HealthStatus {
        HealthStatus::Reachable {
            latency: Duration::ZERO,
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    max_tokens: u32,
    temperature: f64,
    n: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

/// Canonical request body: fields in the order model, messages, max_tokens,
/// temperature, n.
pub fn request_body(model: &str, transcript: &Transcript, params: &DecodeParams) -> String {
    serde_json::to_string(&WireRequest {
        model,
        messages: &transcript.messages,
        max_tokens: params.max_tokens,
        temperature: params.temperature,
        n: params.n,
    })
    .expect("in-memory serialization cannot fail")
}

/// First choice's message content.
pub fn parse_response_body(body: &str) -> Result<String, AdapterError> {
    let resp: WireResponse = serde_json::from_str(body).map_err(|e| AdapterError::Protocol {
        status: None,
        message: format!("malformed response: {e}"),
    })?;
    resp.choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| AdapterError::Protocol {
            status: None,
            message: "response has no choices[0].message.content".into(),
        })
}

fn excerpt(body: &str) -> String {
    const MAX: usize = 200;
    match body.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}…", &body[..i]),
        None => body.to_string(),
    }
}

enum Attempt {
    Done(String),
    Retry(String),
    Fail(AdapterError),
}

/// Blocking HTTP client for `POST {base_url}/chat/completions`.
pub struct HttpModel {
    endpoint: AdapterEndpoint,
    agent: ureq::Agent,
}

impl HttpModel {
    pub fn new(endpoint: AdapterEndpoint) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(endpoint.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { endpoint, agent }
    }

    pub fn endpoint(&self) -> &AdapterEndpoint {
        &self.endpoint
    }

    fn attempt(&self, body: &str) -> Attempt {
        let mut req = self
            .agent
            .post(self.endpoint.completions_url())
            .header("Content-Type", "application/json");
        if let Some(token) = &self.endpoint.auth_token {
            req = req.header("Authorization", format!("Bearer {}", token.expose()));
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(e @ (ureq::Error::BadUri(_) | ureq::Error::Http(_))) => {
                return Attempt::Fail(AdapterError::Transport {
                    message: e.to_string(),
                    attempts: 1,
                })
            }
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let mut text = String::new();
        if let Err(e) = resp.body_mut().as_reader().read_to_string(&mut text) {
            return Attempt::Retry(format!("reading response body: {e}"));
        }
        match status {
            200..=299 => match parse_response_body(&text) {
                Ok(content) => Attempt::Done(content),
                Err(e) => Attempt::Fail(e),
            },
            429 | 500..=599 => Attempt::Retry(format!("HTTP {status}: {}", excerpt(&text))),
            _ => Attempt::Fail(AdapterError::Protocol {
                status: Some(status),
                message: excerpt(&text),
            }),
        }
    }
}

impl ChatModel for HttpModel {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<RawReply, AdapterError> {
        request.params.validate()?;
        let body = request_body(&self.endpoint.model_name, request.transcript, request.params);
        let start = Instant::now();
        let mut rng = rand::thread_rng();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Attempt::Done(text) => {
                    return Ok(RawReply {
                        text,
                        latency: start.elapsed(),
                        attempt_count: attempts,
                    })
                }
                Attempt::Fail(AdapterError::Transport { message, .. }) => {
                    return Err(AdapterError::Transport { message, attempts })
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(message) => {
                    if attempts > self.endpoint.max_retries {
                        return Err(AdapterError::Transport { message, attempts });
                    }
                    let delay = self.endpoint.backoff.delay(attempts - 1, rng.gen());
                    std::thread::sleep(delay);
                }
            }
        }
    }

    fn identity(&self) -> String {
        format!("http:{}#{}", self.endpoint.base_url, self.endpoint.model_name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptkit::{bind_symbols, build_transcript, BindingPolicy, PromptMode, PromptPlan};

    fn hispanic() -> crate::corpus::BiasItem {
        crate::testutil::hispanic_item()
    }

    #[test]
    fn defaults_match_decoding_setup() {
        let p = DecodeParams::default();
        assert_eq!((p.max_tokens, p.temperature, p.n), (5, 0.1, 1));
    }

    #[test]
    fn always_stereotype_picks_bound_symbol() {
        let item = hispanic();
        let b = bind_symbols(&item, BindingPolicy::FileOrder, 0);
        let t = build_transcript(&item, &b, &PromptPlan::new(PromptMode::Implicit));
        let choices = b.labelled(&item);
        let req = ChatRequest {
            transcript: &t,
            params: &DecodeParams::default(),
            choices: Some(&choices),
        };
        assert_eq!(MockModel::new(MockPolicy::AlwaysStereotype).complete(&req).unwrap().text, "C");
        assert_eq!(MockModel::new(MockPolicy::AlwaysAnti).complete(&req).unwrap().text, "A");
        assert_eq!(MockModel::new(MockPolicy::Refuser).complete(&req).unwrap().text, REFUSAL_TEXT);
        let r = MockModel::new(MockPolicy::SeededRandom(1));
        assert_eq!(r.complete(&req).unwrap(), r.complete(&req).unwrap());
    }

    #[test]
    fn mock_spec_strings_round_trip() {
        for s in [
            "mock:always_stereotype",
            "mock:always_anti",
            "mock:refuser",
            "mock:identity",
            "mock:fixed:B",
            "mock:random:seed=1",
        ] {
            let p: MockPolicy = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("mock:fixed:D".parse::<MockPolicy>().is_err());
        assert!("always_anti".parse::<MockPolicy>().is_err());
    }

    #[test]
    fn backoff_is_capped() {
        let b = Backoff {
            base: Duration::from_millis(100),
            cap: Duration::from_secs(1),
        };
        assert_eq!(b.delay(0, 0.0), Duration::from_millis(100));
        assert_eq!(b.delay(1, 0.0), Duration::from_millis(200));
        assert_eq!(b.delay(10, 0.5), Duration::from_secs(1));
    }

    #[test]
    fn endpoint_requires_absolute_url() {
        assert!(AdapterEndpoint::new("localhost:8080", "m").is_err());
        assert!(AdapterEndpoint::new("http://", "m").is_err());
        let e = AdapterEndpoint::new("http://127.0.0.1:9/v1/", "m").unwrap();
        assert_eq!(e.completions_url(), "http://127.0.0.1:9/v1/chat/completions");
    }

    #[test]
    fn response_parsing() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"B"}},{"message":{"content":"A"}}]}"#;
        assert_eq!(parse_response_body(ok).unwrap(), "B");
        assert!(matches!(parse_response_body("{"), Err(AdapterError::Protocol { .. })));
        assert!(parse_response_body(r#"{"choices":[]}"#).is_err());
    }

    #[test]
    fn secret_is_redacted() {
        assert_eq!(format!("{:?}", Secret::new("sk-123")), "Secret(***)");
    }
}
