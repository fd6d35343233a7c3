//! Wire-protocol checks for the HTTP scorer against a minimal in-process
//! server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use onsep_core::scorer::{HttpScorer, PromptText, ScorerBackend};
use onsep_core::OnsepError;

/// Serve `n` requests, answering each with `logits` regardless of payload,
/// and hand back the request bodies for inspection.
fn serve_fixed_logits(
    listener: TcpListener,
    logits: Vec<f64>,
    n: usize,
) -> std::thread::JoinHandle<Vec<serde_json::Value>> {
    std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for _ in 0..n {
            let (stream, _) = listener.accept().expect("accept");
            let mut reader = BufReader::new(stream);
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).expect("read header");
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().expect("content length");
                }
            }
            let mut body = vec![0u8; content_length];
            reader.read_exact(&mut body).expect("read body");
            bodies.push(serde_json::from_slice(&body).expect("json body"));

            let payload = serde_json::json!({ "logits": logits }).to_string();
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                payload.len(),
                payload
            );
            reader.into_inner().write_all(response.as_bytes()).expect("write");
        }
        bodies
    })
}

fn prompt() -> PromptText {
    PromptText {
        text: "24:[0,5,0.9]\n48:[0,8,".into(),
        expected_labels: vec![0, 1],
    }
}

#[test]
fn logits_pass_through_unchanged() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let server = serve_fixed_logits(listener, vec![0.3, -1.2], 1);

    let scorer = HttpScorer::new(&url, Duration::from_secs(5)).unwrap();
    let logits = scorer.score(&prompt()).unwrap();
    assert_eq!(logits, vec![0.3, -1.2]);

    let bodies = server.join().unwrap();
    assert_eq!(bodies[0]["prompt"], "24:[0,5,0.9]\n48:[0,8,");
    assert_eq!(bodies[0]["labels"], serde_json::json!(["0", "1"]));
}

#[test]
fn wrong_logit_count_is_a_protocol_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let server = serve_fixed_logits(listener, vec![1.0, 2.0, 3.0], 1);

    let scorer = HttpScorer::new(&url, Duration::from_secs(5)).unwrap();
    match scorer.score(&prompt()) {
        Err(OnsepError::Protocol(msg)) => assert!(msg.contains("2 labels"), "{msg}"),
        other => panic!("expected Protocol error, got {other:?}"),
    }
    server.join().unwrap();
}

#[test]
fn unreachable_service_is_a_backend_error() {
    // bind then drop to get a port nothing listens on
    let port = {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap().port()
    };
    let scorer = HttpScorer::new(&format!("http://127.0.0.1:{port}"), Duration::from_millis(300)).unwrap();
    assert!(matches!(scorer.score(&prompt()), Err(OnsepError::Backend(_))));
}

#[test]
fn transport_retry_succeeds_on_second_attempt() {
    // server that accepts one connection, closes it mid-request, then serves
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().expect("accept");
        drop(stream); // slam the door on attempt one
        let (stream, _) = listener.accept().expect("accept retry");
        let mut reader = BufReader::new(stream);
        let mut content_length = 0usize;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line.trim_end().is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                content_length = v.trim().parse().unwrap();
            }
        }
        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body).unwrap();
        let payload = serde_json::json!({ "logits": [7.0, 8.0] }).to_string();
        let response = format!(
            "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
            payload.len(),
            payload
        );
        reader.into_inner().write_all(response.as_bytes()).unwrap();
    });

    let scorer = HttpScorer::new(&url, Duration::from_secs(5)).unwrap();
    assert_eq!(scorer.score(&prompt()).unwrap(), vec![7.0, 8.0]);
    handle.join().unwrap();
}
