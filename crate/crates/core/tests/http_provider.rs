use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use queryforge::provider::{make_provider, read_transcript, Message, ProviderConfig, ProviderMode, RequestKey};
use queryforge::ProviderError;

/// Serves one canned `(status, body)` per connection, recording each
/// request's headers and body.
fn stub(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let (mut sock, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(sock.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(head + &String::from_utf8(buf).unwrap());
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            sock.write_all(resp.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn config(url: String, record: Option<std::path::PathBuf>) -> ProviderConfig {
    ProviderConfig {
        mode: ProviderMode::Http,
        endpoint: url,
        model: "stub-model".into(),
        api_key_env: "QUERYFORGE_TEST_STUB_KEY".into(),
        record_to: record,
        retry_base_ms: 5,
        ..Default::default()
    }
}

#[test]
fn round_trip_records_one_exchange() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("t.jsonl");
    let (url, seen) = stub(vec![(200, ok_body("fixed reply"))]);
    std::env::set_var("QUERYFORGE_TEST_STUB_KEY", "sekrit");
    let p = make_provider(&config(url, Some(rec.clone()))).unwrap();
    let out = p.complete(&RequestKey::new("ex1", 1), &[Message::user("hello")]).unwrap();
    assert_eq!(out, "fixed reply");
    let recs = read_transcript(&rec).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].key, RequestKey::new("ex1", 1));
    let req = seen.lock().unwrap()[0].clone();
    assert!(req.contains("\"temperature\":0.2"));
    assert!(req.contains("\"max_tokens\":10000"));
    assert!(req.to_ascii_lowercase().contains("authorization: bearer sekrit"));
    assert!(!std::fs::read_to_string(&rec).unwrap().contains("sekrit"));
}

#[test]
fn transient_failures_are_retried() {
    let (url, seen) = stub(vec![(500, "{}".into()), (429, "{}".into()), (200, ok_body("third time"))]);
    let p = make_provider(&config(url, None)).unwrap();
    let out = p.complete(&RequestKey::new("ex", 1), &[Message::user("x")]).unwrap();
    assert_eq!(out, "third time");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn exhausted_retries_are_transport_errors() {
    let (url, _) = stub(vec![(503, "{}".into()), (503, "{}".into()), (503, "{}".into())]);
    let p = make_provider(&config(url, None)).unwrap();
    let err = p.complete(&RequestKey::new("ex", 1), &[]).unwrap_err();
    assert!(matches!(err, ProviderError::Transport(_)), "{err}");
    assert!(p.records().is_empty());
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = stub(vec![(400, "{}".into())]);
    let p = make_provider(&config(url, None)).unwrap();
    assert!(p.complete(&RequestKey::new("ex", 1), &[]).is_err());
    assert_eq!(seen.lock().unwrap().len(), 1);
}
