//! Text generation backends: an OpenAI-compatible chat-completions client
//! and a deterministic offline mock.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AugmentError, AugmentationKind, NO_ASSUMPTIONS};

fn default_temperature() -> f64 {
    0.7
}
fn default_max_tokens() -> u32 {
    512
}
fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_timeout() -> f64 {
    60.0
}
fn default_parallel() -> usize {
    4
}
fn default_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub request_timeout: f64,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First retry delay; doubles on each further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl ProviderConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            api_key_env: default_api_key_env(),
            request_timeout: default_timeout(),
            max_parallel: default_parallel(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: &str| Err(AugmentError::InvalidConfig(m.to_string()));
        if self.max_parallel == 0 {
            return bad("max_parallel must be at least 1");
        }
        if !(self.request_timeout > 0.0) {
            return bad("request_timeout must be positive");
        }
        if !(self.temperature >= 0.0) {
            return bad("temperature must be non-negative");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }
}

/// Something that turns a rendered prompt into a completion.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn model(&self) -> &str;
    fn temperature(&self) -> f64;
    fn complete(&self, kind: AugmentationKind, prompt: &str) -> Result<String, AugmentError>;
    /// Number of completion requests issued so far, cache hits excluded.
    fn requests_issued(&self) -> usize;
    /// Timestamp recorded in generation metadata.
    fn timestamp(&self) -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
    fn max_parallel(&self) -> usize {
        1
    }
}

/// Hash identifying a (kind, prompt) pair, hex-encoded SHA-256.
pub fn prompt_hash(kind: AugmentationKind, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_str().as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

const MOCK_OPENERS: [&str; 6] = [
    "The argument",
    "The claim",
    "This reasoning",
    "The main point",
    "The conclusion",
    "The position",
];
const MOCK_PREDICATES: [&str; 8] = [
    "lacks supporting evidence",
    "relies on a broad generalization",
    "is clearly stated",
    "could address opposing views",
    "appeals mostly to emotion",
    "uses a concrete example",
    "needs a clearer structure",
    "stays on topic",
];
const MOCK_ASSUMPTIONS: [&str; 5] = [
    "people act rationally",
    "the cited trend will continue",
    "all readers share the same values",
    "costs are negligible",
    "the current policy has failed",
];

/// Offline provider whose output depends only on (kind, prompt hash, seed).
#[derive(Debug, Default)]
pub struct MockProvider {
    seed: u64,
    canned: HashMap<String, String>,
    requests: AtomicUsize,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            canned: HashMap::new(),
            requests: AtomicUsize::new(0),
        }
    }

    /// Fixed responses keyed by [`prompt_hash`]; other prompts fall back to
    /// the generated text.
    pub fn with_canned(mut self, canned: HashMap<String, String>) -> Self {
        self.canned = canned;
        self
    }

    fn rng_for(&self, kind: AugmentationKind, hash: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(kind.as_str().as_bytes());
        h.update(hash.as_bytes());
        h.update(self.seed.to_le_bytes());
        let digest: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }

    pub fn render(&self, kind: AugmentationKind, prompt: &str) -> String {
        let hash = prompt_hash(kind, prompt);
        if let Some(text) = self.canned.get(&hash) {
            return text.clone();
        }
        let mut rng = self.rng_for(kind, &hash);
        match kind {
            AugmentationKind::Feedback => {
                let n = rng.gen_range(2..=4);
                (0..n)
                    .map(|_| {
                        format!(
                            "- {} {}.",
                            MOCK_OPENERS.choose(&mut rng).unwrap(),
                            MOCK_PREDICATES.choose(&mut rng).unwrap()
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            AugmentationKind::Assumptions => {
                if rng.gen_bool(0.25) {
                    NO_ASSUMPTIONS.to_string()
                } else {
                    let n = rng.gen_range(1..=3);
                    (0..n)
                        .map(|_| format!("- Assumes that {}.", MOCK_ASSUMPTIONS.choose(&mut rng).unwrap()))
                        .collect::<Vec<_>>()
                        .join("\n")
                }
            }
            AugmentationKind::SimilarQuality | AugmentationKind::CounterArgument => {
                let lead = if kind == AugmentationKind::CounterArgument {
                    "On the other hand,"
                } else {
                    "Similarly,"
                };
                let n = rng.gen_range(2..=3);
                let body = (0..n)
                    .map(|_| {
                        format!(
                            "{} {}",
                            MOCK_OPENERS.choose(&mut rng).unwrap().to_lowercase(),
                            MOCK_PREDICATES.choose(&mut rng).unwrap()
                        )
                    })
                    .collect::<Vec<_>>()
                    .join(", and ");
                format!("{lead} {body}.")
            }
        }
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn model(&self) -> &str {
        "mock"
    }

    fn temperature(&self) -> f64 {
        0.0
    }

    fn complete(&self, kind: AugmentationKind, prompt: &str) -> Result<String, AugmentError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        Ok(self.render(kind, prompt))
    }

    fn requests_issued(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    // Fixed so repeated offline runs emit identical files.
    fn timestamp(&self) -> String {
        "1970-01-01T00:00:00Z".to_string()
    }
}

pub fn mock_provider(seed: u64) -> MockProvider {
    MockProvider::new(seed)
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
    max_tokens: u32,
}

pub fn chat_request_body(config: &ProviderConfig, prompt: &str) -> serde_json::Value {
    serde_json::to_value(ChatRequest {
        model: &config.model_name,
        messages: vec![ChatMessage {
            role: "user",
            content: prompt,
        }],
        temperature: config.temperature,
        max_tokens: config.max_tokens,
    })
    .expect("request serializes")
}

/// Pull `choices[0].message.content` out of a chat-completions response.
pub fn parse_chat_response(body: &str) -> Result<String, AugmentError> {
    let v: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| AugmentError::ProviderError(200, format!("invalid JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| AugmentError::ProviderError(200, excerpt(body)))
}

pub(crate) fn excerpt(body: &str) -> String {
    body.chars().take(200).collect()
}

#[cfg(feature = "http")]
pub use http::HttpProvider;

#[cfg(feature = "http")]
mod http {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    use super::{chat_request_body, excerpt, parse_chat_response, Provider, ProviderConfig};
    use crate::augment::{AugmentError, AugmentationKind};

    pub struct HttpProvider {
        config: ProviderConfig,
        agent: ureq::Agent,
        api_key: Option<String>,
        requests: AtomicUsize,
    }

    impl HttpProvider {
        pub fn new(config: ProviderConfig) -> Result<Self, AugmentError> {
            config.validate()?;
            let agent = ureq::AgentBuilder::new()
                .timeout(Duration::from_secs_f64(config.request_timeout))
                .build();
            let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
            Ok(Self {
                config,
                agent,
                api_key,
                requests: AtomicUsize::new(0),
            })
        }

        fn endpoint(&self) -> String {
            format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
        }

        fn attempt(&self, prompt: &str) -> Result<String, AugmentError> {
            self.requests.fetch_add(1, Ordering::SeqCst);
            let mut req = self.agent.post(&self.endpoint());
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            match req.send_json(chat_request_body(&self.config, prompt)) {
                Ok(resp) => {
                    let body = resp
                        .into_string()
                        .map_err(|e| AugmentError::ProviderError(0, e.to_string()))?;
                    parse_chat_response(&body)
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let body = resp.into_string().unwrap_or_default();
                    Err(AugmentError::ProviderError(code, excerpt(&body)))
                }
                Err(ureq::Error::Transport(t)) => {
                    let msg = t.to_string();
                    if msg.to_ascii_lowercase().contains("timed out") {
                        Err(AugmentError::Timeout)
                    } else {
                        Err(AugmentError::ProviderError(0, excerpt(&msg)))
                    }
                }
            }
        }
    }

    fn retryable(e: &AugmentError) -> bool {
        match e {
            AugmentError::Timeout => true,
            AugmentError::ProviderError(code, _) => *code == 0 || *code == 429 || *code >= 500,
            _ => false,
        }
    }

    impl Provider for HttpProvider {
        fn name(&self) -> &str {
            "openai-compatible"
        }

        fn model(&self) -> &str {
            &self.config.model_name
        }

        fn temperature(&self) -> f64 {
            self.config.temperature
        }

        fn complete(&self, _kind: AugmentationKind, prompt: &str) -> Result<String, AugmentError> {
            let mut delay = self.config.backoff_ms;
            let mut attempt = 0;
            loop {
                match self.attempt(prompt) {
                    Err(e) if attempt < self.config.retries && retryable(&e) => {
                        log::warn!("request failed ({e}), retrying in {delay} ms");
                        std::thread::sleep(Duration::from_millis(delay));
                        delay = delay.saturating_mul(2);
                        attempt += 1;
                    }
                    other => return other,
                }
            }
        }

        fn requests_issued(&self) -> usize {
            self.requests.load(Ordering::SeqCst)
        }

        fn max_parallel(&self) -> usize {
            self.config.max_parallel
        }
    }
}
