//! The live backend against a local fixture server that answers from a
//! script and records every request.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use roundtrip_core::backends::{
    BackendError, HttpBackend, HttpConfig, PromptMarker, Provider, RateLimiter, Role, TranslatorBackend,
};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Request {
    headers: Vec<(String, String)>,
    body: Value,
}

impl Request {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

struct Fixture {
    url: String,
    seen: Arc<Mutex<Vec<Request>>>,
}

/// Serves `replies` (status, body) in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> Fixture {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            loop {
                line.clear();
                reader.read_line(&mut line).unwrap();
                let l = line.trim_end();
                if l.is_empty() {
                    break;
                }
                let (k, v) = l.split_once(':').unwrap();
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map_or(0, |(_, v)| v.parse().unwrap());
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Request {
                headers,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    Fixture { url, seen }
}

fn openai_reply(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn config(url: &str, provider: Provider, key_env: &str) -> HttpConfig {
    HttpConfig {
        provider,
        endpoint_url: url.to_string(),
        model: "test-model".into(),
        api_key_env: key_env.into(),
        rate_limit_seconds: 0.0,
        backoff_seconds: 0.0,
        max_retries: 2,
        request_timeout_seconds: 5.0,
        ..HttpConfig::default()
    }
}

fn prompt(body: &str) -> String {
    let marker = PromptMarker {
        role: Role::T1,
        rule_id: "r1".into(),
        iteration: 0,
        attempt: 1,
    };
    format!("{}\n{body}", marker.line())
}

#[test]
fn openai_request_shape_and_bearer_key() {
    std::env::set_var("RT_TEST_KEY_OPENAI", "sk-test");
    let fx = serve(vec![(200, openai_reply("(forall ((v Vehicle)) true)"))]);
    let b = HttpBackend::new("live", config(&fx.url, Provider::OpenAi, "RT_TEST_KEY_OPENAI"), RateLimiter::new(0.0));
    let out = b.complete(&prompt("Formalize this.")).unwrap();
    assert_eq!(out, "(forall ((v Vehicle)) true)");
    let seen = fx.seen.lock().unwrap();
    let r = &seen[0];
    assert_eq!(r.header("authorization"), Some("Bearer sk-test"));
    assert_eq!(r.body["model"], "test-model");
    assert_eq!(r.body["temperature"], 0.3);
    // The bookkeeping marker never reaches the provider.
    assert_eq!(r.body["messages"], json!([{"role": "user", "content": "Formalize this."}]));
    assert_eq!(b.call_count(), 1);
}

#[test]
fn anthropic_headers_and_reply_extraction() {
    std::env::set_var("RT_TEST_KEY_ANTHROPIC", "ak-test");
    let reply = json!({"content": [{"type": "text", "text": "hello"}]}).to_string();
    let fx = serve(vec![(200, reply)]);
    let b = HttpBackend::new(
        "live",
        config(&fx.url, Provider::Anthropic, "RT_TEST_KEY_ANTHROPIC"),
        RateLimiter::new(0.0),
    );
    assert_eq!(b.complete(&prompt("x")).unwrap(), "hello");
    let seen = fx.seen.lock().unwrap();
    assert_eq!(seen[0].header("x-api-key"), Some("ak-test"));
    assert_eq!(seen[0].header("anthropic-version"), Some("2023-06-01"));
    assert_eq!(seen[0].body["max_tokens"], 4096);
}

#[test]
fn transient_failures_are_retried() {
    let fx = serve(vec![(429, "{}".into()), (503, "{}".into()), (200, openai_reply("ok"))]);
    let b = HttpBackend::new("live", config(&fx.url, Provider::OpenAi, ""), RateLimiter::new(0.0));
    assert_eq!(b.complete(&prompt("x")).unwrap(), "ok");
    assert_eq!(fx.seen.lock().unwrap().len(), 3);
    assert_eq!(b.call_count(), 1);
}

#[test]
fn retries_are_bounded() {
    let fx = serve(vec![(500, "{}".into()); 4]);
    let b = HttpBackend::new("live", config(&fx.url, Provider::OpenAi, ""), RateLimiter::new(0.0));
    assert!(matches!(b.complete(&prompt("x")), Err(BackendError::Transport(_))));
    assert_eq!(fx.seen.lock().unwrap().len(), 3);
}

#[test]
fn auth_failure_is_not_retried() {
    let fx = serve(vec![(401, "{}".into()), (200, openai_reply("never"))]);
    let b = HttpBackend::new("live", config(&fx.url, Provider::OpenAi, ""), RateLimiter::new(0.0));
    assert!(matches!(b.complete(&prompt("x")), Err(BackendError::AuthFailure(_))));
    assert_eq!(fx.seen.lock().unwrap().len(), 1);
}

#[test]
fn missing_credential_fails_before_any_request() {
    let fx = serve(vec![]);
    let b = HttpBackend::new(
        "live",
        config(&fx.url, Provider::OpenAi, "RT_TEST_KEY_THAT_IS_NOT_SET"),
        RateLimiter::new(0.0),
    );
    assert!(matches!(b.complete(&prompt("x")), Err(BackendError::AuthFailure(_))));
    assert!(fx.seen.lock().unwrap().is_empty());
}

#[test]
fn unexpected_body_is_malformed() {
    let fx = serve(vec![(200, "{\"choices\": []}".into())]);
    let b = HttpBackend::new("live", config(&fx.url, Provider::OpenAi, ""), RateLimiter::new(0.0));
    assert!(matches!(b.complete(&prompt("x")), Err(BackendError::MalformedResponse(_))));
}

#[test]
fn shared_limiter_spaces_calls() {
    let fx = serve(vec![(200, openai_reply("a")), (200, openai_reply("b")), (200, openai_reply("c"))]);
    let limiter = RateLimiter::new(0.15);
    let one = HttpBackend::new("one", config(&fx.url, Provider::OpenAi, ""), limiter.clone());
    let two = HttpBackend::new("two", config(&fx.url, Provider::OpenAi, ""), limiter);
    let start = Instant::now();
    one.complete(&prompt("x")).unwrap();
    two.complete(&prompt("x")).unwrap();
    one.complete(&prompt("x")).unwrap();
    assert!(start.elapsed() >= Duration::from_millis(300));
}
