use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strategy::StrategyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
}

/// What a request is for. Clients may ignore it; scripted ones use it to
/// pick a reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Init,
    Offspring(StrategyKind),
    Refine(StrategyKind),
}

/// `seq` is assigned by the engine in a fixed order, so replies can be tied
/// to requests however calls are scheduled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub seq: u64,
    pub purpose: Purpose,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("no scripted reply for request {0}")]
    Exhausted(u64),
}

impl LlmError {
    /// Worth retrying: network trouble, rate limiting or a server error.
    pub fn is_transient(&self) -> bool {
        match self {
            LlmError::Transport(_) => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait LlmClient: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatReply, LlmError>;
}

type Fallback = Box<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

/// Canned replies, the k-th for the request with `seq == k`. Requests past
/// the script go to the fallback, if any.
pub struct ScriptedClient {
    script: Vec<String>,
    fallback: Option<Fallback>,
    seen: Mutex<Vec<ChatRequest>>,
}

impl ScriptedClient {
    pub fn new(script: Vec<String>) -> Self {
        Self { script, fallback: None, seen: Mutex::new(Vec::new()) }
    }

    pub fn with_fallback(script: Vec<String>, fallback: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static) -> Self {
        Self { script, fallback: Some(Box::new(fallback)), seen: Mutex::new(Vec::new()) }
    }

    /// Every request received so far, in seq order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        let mut seen = self.seen.lock().expect("request log poisoned").clone();
        seen.sort_by_key(|r| r.seq);
        seen
    }
}

impl LlmClient for ScriptedClient {
    fn chat(&self, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        self.seen.lock().expect("request log poisoned").push(request.clone());
        let text = usize::try_from(request.seq)
            .ok()
            .and_then(|k| self.script.get(k).cloned())
            .or_else(|| self.fallback.as_ref().and_then(|f| f(request)))
            .ok_or(LlmError::Exhausted(request.seq))?;
        Ok(ChatReply { text, usage: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(seq: u64) -> ChatRequest {
        ChatRequest { seq, purpose: Purpose::Init, messages: vec![Message::user("hi")], temperature: 1.0 }
    }

    #[test]
    fn script_then_fallback() {
        let c = ScriptedClient::with_fallback(vec!["a".into(), "b".into()], |r| (r.seq < 3).then(|| format!("f{}", r.seq)));
        assert_eq!(c.chat(&req(1)).unwrap().text, "b");
        assert_eq!(c.chat(&req(0)).unwrap().text, "a");
        assert_eq!(c.chat(&req(2)).unwrap().text, "f2");
        assert_eq!(c.chat(&req(3)), Err(LlmError::Exhausted(3)));
        let seqs: Vec<u64> = c.requests().iter().map(|r| r.seq).collect();
        assert_eq!(seqs, [0, 1, 2, 3]);
    }

    #[test]
    fn transient_classification() {
        assert!(LlmError::Transport("reset".into()).is_transient());
        assert!(LlmError::Status { status: 503, body: String::new() }.is_transient());
        assert!(LlmError::Status { status: 429, body: String::new() }.is_transient());
        assert!(!LlmError::Status { status: 401, body: String::new() }.is_transient());
        assert!(!LlmError::Protocol("x".into()).is_transient());
    }
}
