//! Offline chat clients for tests and dry runs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{ChatClient, ChatRequest, ChatResponse, GatewayError, Usage};

/// Answers from a table keyed by the last user message.
///
/// Unknown prompts get the default reply, or a decode error when none is set.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    replies: HashMap<String, String>,
    default: Option<String>,
    calls: AtomicUsize,
}

impl ScriptedClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(mut self, reply: impl Into<String>) -> Self {
        self.default = Some(reply.into());
        self
    }

    pub fn insert(&mut self, prompt: impl Into<String>, reply: impl Into<String>) {
        self.replies.insert(prompt.into(), reply.into());
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = req.last_user_content().unwrap_or_default();
        let text = self
            .replies
            .get(prompt)
            .or(self.default.as_ref())
            .cloned()
            .ok_or_else(|| GatewayError::Decode("no scripted reply for prompt".into()))?;
        Ok(ChatResponse {
            usage: Usage {
                prompt_tokens: prompt.split_whitespace().count() as u64,
                completion_tokens: text.split_whitespace().count() as u64,
                cached: false,
            },
            text,
        })
    }

    fn endpoint(&self) -> &str {
        "mock://scripted"
    }
}

/// Wraps a closure; handy for scripting replies that depend on call order.
pub struct FnClient<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> FnClient<F>
where
    F: Fn(&ChatRequest, usize) -> Result<String, GatewayError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> ChatClient for FnClient<F>
where
    F: Fn(&ChatRequest, usize) -> Result<String, GatewayError> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let text = (self.f)(req, n)?;
        Ok(ChatResponse { text, usage: Usage::default() })
    }

    fn endpoint(&self) -> &str {
        "mock://fn"
    }
}
