use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::embed::{normalize, tokenize};
use super::retry::{is_transient_status, Attempt};
use super::{
    ChatClient, ChatRequest, ChatResponse, EmbeddingCapability, Embedder, GatewayError,
    InflightLimiter, RetryPolicy, TokenEmbeddings, Usage,
};

/// Where and as whom to send requests. `url` is the full endpoint URL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model_id: String,
}

struct Transport {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
    retry: RetryPolicy,
    limiter: InflightLimiter,
}

impl Transport {
    fn new(
        config: EndpointConfig,
        retry: RetryPolicy,
        limiter: InflightLimiter,
    ) -> Result<Self, GatewayError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self { config, http, retry, limiter })
    }

    fn post_json(&self, body: &serde_json::Value) -> Result<serde_json::Value, GatewayError> {
        self.retry.run(|| {
            let _slot = self.limiter.acquire();
            let mut req = self.http.post(&self.config.url).json(body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => return Attempt::Transient(e.to_string()),
            };
            let status = resp.status().as_u16();
            if resp.status().is_success() {
                return match resp.json::<serde_json::Value>() {
                    Ok(v) => Attempt::Done(v),
                    Err(e) => Attempt::Fatal(GatewayError::Decode(e.to_string())),
                };
            }
            let text = resp.text().unwrap_or_default();
            match status {
                401 | 403 => Attempt::Fatal(GatewayError::Auth { status, body: text }),
                s if is_transient_status(s) => Attempt::Transient(format!("HTTP {s}: {text}")),
                _ => Attempt::Fatal(GatewayError::Http { status, body: text }),
            }
        })
    }
}

/// Chat-completions client: `{model, messages[], temperature, max_tokens}` in,
/// `choices[0].message.content` out.
pub struct HttpChatClient {
    transport: Transport,
}

impl HttpChatClient {
    pub fn new(
        config: EndpointConfig,
        retry: RetryPolicy,
        limiter: InflightLimiter,
    ) -> Result<Self, GatewayError> {
        Ok(Self { transport: Transport::new(config, retry, limiter)? })
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl ChatClient for HttpChatClient {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        let body = json!({
            "model": req.model_id,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let value = self.transport.post_json(&body)?;
        let parsed: CompletionBody =
            serde_json::from_value(value).map_err(|e| GatewayError::Decode(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Decode("response has no choices[0].message.content".into()))?;
        let usage = parsed.usage.map_or_else(Usage::default, |u| Usage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
            cached: false,
        });
        Ok(ChatResponse { text, usage })
    }

    fn endpoint(&self) -> &str {
        &self.transport.config.url
    }
}

/// Embedding client returning vectors under `data[].embedding`.
///
/// In token mode the locally tokenized text is sent as an input array and one
/// vector per token is expected back. A sentence-only backend refuses
/// [`Embedder::embed_tokens`] so callers cannot mistake pooled vectors for
/// token vectors.
pub struct HttpEmbedder {
    transport: Transport,
    capability: EmbeddingCapability,
}

#[derive(Deserialize)]
struct EmbeddingBody {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl HttpEmbedder {
    pub fn new(
        config: EndpointConfig,
        capability: EmbeddingCapability,
        retry: RetryPolicy,
        limiter: InflightLimiter,
    ) -> Result<Self, GatewayError> {
        Ok(Self { transport: Transport::new(config, retry, limiter)?, capability })
    }

    fn fetch(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let body = json!({ "model": self.transport.config.model_id, "input": inputs });
        let value = self.transport.post_json(&body)?;
        let mut parsed: EmbeddingBody =
            serde_json::from_value(value).map_err(|e| GatewayError::Decode(e.to_string()))?;
        if parsed.data.len() != inputs.len() {
            return Err(GatewayError::Decode(format!(
                "expected {} embeddings, got {}",
                inputs.len(),
                parsed.data.len()
            )));
        }
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        let dim = parsed.data.first().map_or(0, |d| d.embedding.len());
        if dim == 0 || parsed.data.iter().any(|d| d.embedding.len() != dim) {
            return Err(GatewayError::Decode("embeddings have inconsistent dimension".into()));
        }
        Ok(parsed
            .data
            .into_iter()
            .map(|d| {
                let mut v = d.embedding;
                normalize(&mut v);
                v
            })
            .collect())
    }
}

impl Embedder for HttpEmbedder {
    fn capability(&self) -> EmbeddingCapability {
        self.capability
    }

    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, GatewayError> {
        if self.capability == EmbeddingCapability::SentenceOnly {
            return Err(GatewayError::InvalidRequest(
                "embedder only provides sentence-level vectors".into(),
            ));
        }
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Ok(TokenEmbeddings { tokens, vectors: Vec::new(), dimension: 0 });
        }
        let vectors = self.fetch(&tokens)?;
        let dimension = vectors[0].len();
        Ok(TokenEmbeddings {
            tokens,
            vectors: vectors.into_iter().map(Arc::from).collect(),
            dimension,
        })
    }

    fn embed_sentence(&self, text: &str) -> Result<Option<Vec<f64>>, GatewayError> {
        if self.capability == EmbeddingCapability::TokenLevel {
            return Ok(None);
        }
        if text.trim().is_empty() {
            return Ok(None);
        }
        Ok(self.fetch(&[text.to_string()])?.pop())
    }
}
