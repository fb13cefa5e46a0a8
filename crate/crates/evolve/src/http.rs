//! Client for chat-completions style HTTP endpoints.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::llm::{ChatReply, ChatRequest, LlmClient, LlmError, Usage};

pub struct HttpClient {
    endpoint: String,
    model: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
    max_attempts: usize,
    backoff: Duration,
    transcript: Option<Mutex<File>>,
}

#[derive(Deserialize)]
struct WireReply {
    choices: Vec<WireChoice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

impl HttpClient {
    /// `base_url` is the API root; requests go to `{base_url}/chat/completions`.
    /// The bearer token is read from `token_var` when that variable is set.
    pub fn new(base_url: &str, model: &str, token_var: Option<&str>, request_timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(request_timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            token: token_var.and_then(|v| std::env::var(v).ok()).filter(|t| !t.is_empty()),
            client,
            max_attempts: 3,
            backoff: Duration::from_millis(500),
            transcript: None,
        })
    }

    /// Retry policy for transient failures; the delay doubles per attempt.
    pub fn with_retries(mut self, max_attempts: usize, backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    /// Appends one JSON line per attempt (request, status, reply or error).
    pub fn with_transcript(mut self, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.transcript = Some(Mutex::new(file));
        Ok(self)
    }

    fn log(&self, record: serde_json::Value) {
        if let Some(file) = &self.transcript {
            let mut f = file.lock().expect("transcript lock poisoned");
            if let Err(e) = writeln!(f, "{record}") {
                log::warn!("could not write transcript: {e}");
            }
        }
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<(u16, String), LlmError> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok((status, text))
    }
}

fn parse_reply(text: &str) -> Result<ChatReply, LlmError> {
    let wire: WireReply = serde_json::from_str(text).map_err(|e| LlmError::Protocol(e.to_string()))?;
    let content = wire
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| LlmError::Protocol("no message content in first choice".into()))?;
    Ok(ChatReply { text: content, usage: wire.usage })
}

impl LlmClient for HttpClient {
    fn chat(&self, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        let body = json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        let mut delay = self.backoff;
        let mut attempt = 1;
        loop {
            let outcome = self.attempt(&body).and_then(|(status, text)| {
                if (200..300).contains(&status) {
                    Ok((status, text.clone(), parse_reply(&text)))
                } else {
                    Err(LlmError::Status { status, body: text })
                }
            });
            match outcome {
                Ok((status, raw, parsed)) => {
                    self.log(json!({"seq": request.seq, "purpose": request.purpose, "attempt": attempt,
                        "request": body, "status": status, "response": raw}));
                    return parsed;
                }
                Err(e) => {
                    self.log(json!({"seq": request.seq, "purpose": request.purpose, "attempt": attempt,
                        "request": body, "error": e.to_string()}));
                    if !e.is_transient() || attempt >= self.max_attempts {
                        return Err(e);
                    }
                    log::warn!("chat request {} failed ({e}); retrying", request.seq);
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_parsing() {
        let r = parse_reply(r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":3,"completion_tokens":1,"total_tokens":4}}"#).unwrap();
        assert_eq!(r.text, "hi");
        assert_eq!(r.usage, Some(Usage { prompt_tokens: 3, completion_tokens: 1 }));
        assert!(matches!(parse_reply(r#"{"choices":[]}"#), Err(LlmError::Protocol(_))));
        assert!(matches!(parse_reply("not json"), Err(LlmError::Protocol(_))));
    }
}
