use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use fairpb_evolve::{ChatRequest, HttpClient, LlmClient, LlmError, Message, Purpose};

/// Serves one canned (status, body) per connection and records each request.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            log.lock().unwrap().push(format!("{head}\n{}", String::from_utf8(payload).unwrap()));
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn request() -> ChatRequest {
    ChatRequest { seq: 7, purpose: Purpose::Init, messages: vec![Message::user("score the projects")], temperature: 1.0 }
}

const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"{idea}\n```\ncost\n```"}}],"usage":{"prompt_tokens":12,"completion_tokens":5}}"#;

#[test]
fn retries_transient_errors_and_sends_auth() {
    let (base, seen) = serve(vec![(503, "busy".into()), (200, OK.into())]);
    std::env::set_var("FAIRPB_TEST_TOKEN", "sekrit");
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("chat.jsonl");
    let client = HttpClient::new(&base, "some-model", Some("FAIRPB_TEST_TOKEN"), Duration::from_secs(10))
        .unwrap()
        .with_retries(3, Duration::from_millis(1))
        .with_transcript(&transcript)
        .unwrap();
    let reply = client.chat(&request()).unwrap();
    assert_eq!(reply.text, "{idea}\n```\ncost\n```");
    assert_eq!(reply.usage.unwrap().prompt_tokens, 12);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert!(seen[1].starts_with("POST /v1/chat/completions"));
    assert!(seen[1].to_ascii_lowercase().contains("authorization: bearer sekrit"));
    let body: serde_json::Value = serde_json::from_str(seen[1].split("\n\n").nth(1).unwrap().trim()).unwrap();
    assert_eq!(body["model"], "some-model");
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["temperature"], 1.0);

    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&transcript)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["attempt"], 1);
    assert!(lines[0]["error"].as_str().unwrap().contains("503"));
    assert_eq!(lines[1]["status"], 200);
    assert_eq!(lines[1]["seq"], 7);
}

#[test]
fn client_errors_are_not_retried() {
    let (base, seen) = serve(vec![(401, "no".into()), (200, OK.into())]);
    let client = HttpClient::new(&base, "m", None, Duration::from_secs(10))
        .unwrap()
        .with_retries(3, Duration::from_millis(1));
    let err = client.chat(&request()).unwrap_err();
    assert!(matches!(err, LlmError::Status { status: 401, .. }));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn gives_up_after_max_attempts() {
    let (base, seen) = serve(vec![(500, "a".into()), (502, "b".into())]);
    let client = HttpClient::new(&base, "m", None, Duration::from_secs(10))
        .unwrap()
        .with_retries(2, Duration::from_millis(1));
    assert!(matches!(client.chat(&request()), Err(LlmError::Status { status: 502, .. })));
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = HttpClient::new(&format!("http://127.0.0.1:{port}"), "m", None, Duration::from_secs(2))
        .unwrap()
        .with_retries(1, Duration::ZERO);
    assert!(matches!(client.chat(&request()), Err(LlmError::Transport(_))));
}
