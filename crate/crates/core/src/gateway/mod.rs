//! Client layer over chat-completion and embedding endpoints.
//!
//! Everything that talks to a model goes through [`ChatClient`] or
//! [`Embedder`]. The HTTP implementations share one retry policy and one
//! in-flight limiter; [`CachingClient`] adds the content-addressed on-disk
//! cache in front of any client, including the offline mocks in [`mock`].

mod cache;
mod embed;
mod http;
mod limiter;
pub mod mock;
mod retry;

use serde::{Deserialize, Serialize};

pub use cache::{CachingClient, ResponseCache};
pub use embed::{
    cosine, tokenize, EmbeddingCapability, Embedder, StubEmbedder, TokenEmbeddings,
};
pub use http::{EndpointConfig, HttpChatClient, HttpEmbedder};
pub use limiter::{InflightGuard, InflightLimiter};
pub use retry::RetryPolicy;

pub const ENV_ENDPOINT: &str = "UADX_ENDPOINT";
pub const ENV_API_KEY: &str = "UADX_API_KEY";
pub const ENV_MODEL: &str = "UADX_MODEL";
pub const ENV_EMBED_ENDPOINT: &str = "UADX_EMBED_ENDPOINT";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication rejected (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Decode(String),
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

impl GatewayError {
    /// Network-level failures, as opposed to a reachable endpoint refusing the request.
    pub fn is_transport(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            temperature: 0.0,
            max_tokens: 1024,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.messages.first() {
            None => return Err(GatewayError::InvalidRequest("messages are empty".into())),
            Some(m) if m.role == Role::Assistant => {
                return Err(GatewayError::InvalidRequest(
                    "first message must be system or user".into(),
                ))
            }
            Some(_) => {}
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Content of the last user turn; mocks key their scripts on it.
    pub fn last_user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(default)]
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    /// Identity of the backing endpoint; part of the cache key.
    fn endpoint(&self) -> &str {
        ""
    }
}

impl<C: ChatClient + ?Sized> ChatClient for &C {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(req)
    }

    fn endpoint(&self) -> &str {
        (**self).endpoint()
    }
}

impl<C: ChatClient + ?Sized> ChatClient for std::sync::Arc<C> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(req)
    }

    fn endpoint(&self) -> &str {
        (**self).endpoint()
    }
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(req)
    }

    fn endpoint(&self) -> &str {
        (**self).endpoint()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        let ok = ChatRequest::new("m", vec![Message::user("hi")]);
        assert!(ok.validate().is_ok());
        assert!(ChatRequest::new("m", vec![]).validate().is_err());
        assert!(ChatRequest::new("m", vec![Message::assistant("x")]).validate().is_err());
        let mut hot = ok.clone();
        hot.temperature = -0.1;
        assert!(hot.validate().is_err());
        let mut zero = ok;
        zero.max_tokens = 0;
        assert!(zero.validate().is_err());
    }
}
