//! The HTTP client against a minimal in-process service.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use sentiment_core::remote::{fetch_remote, EmbedRequest, EmbedResponse, EmbedVector, RemoteConfig, RemoteError};

/// Reads one request; `None` once the client hangs up.
fn read_request(reader: &mut BufReader<TcpStream>) -> Option<(String, Vec<u8>)> {
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).ok()? == 0 {
        return None;
    }
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).ok()?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some((request_line, body))
}

/// Serves `[len(text), position, 1]` vectors in reverse order. The first
/// `failures` requests get a 503.
fn spawn_service(failures: usize) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let counter = Arc::clone(&counter);
            thread::spawn(move || {
                let mut writer = stream.try_clone().unwrap();
                let mut reader = BufReader::new(stream);
                while let Some((line, body)) = read_request(&mut reader) {
                    let n = counter.fetch_add(1, Ordering::SeqCst);
                    let (status, payload) = if !line.starts_with("POST /v1/embed ") {
                        ("404 Not Found", String::new())
                    } else if n < failures {
                        ("503 Service Unavailable", String::new())
                    } else {
                        let request: EmbedRequest = serde_json::from_slice(&body).unwrap();
                        let mut items: Vec<EmbedVector> = request
                            .items
                            .iter()
                            .enumerate()
                            .map(|(i, item)| EmbedVector {
                                id: item.id.clone(),
                                vector: vec![item.text.chars().count() as f32, i as f32, 1.0],
                            })
                            .collect();
                        items.reverse();
                        ("200 OK", serde_json::to_string(&EmbedResponse { items }).unwrap())
                    };
                    let reply = format!(
                        "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{payload}",
                        payload.len()
                    );
                    if writer.write_all(reply.as_bytes()).is_err() {
                        break;
                    }
                }
            });
        }
    });
    (format!("http://{addr}"), hits)
}

fn config(endpoint: String) -> RemoteConfig {
    RemoteConfig {
        retries: 2,
        backoff: Duration::from_millis(5),
        batch_size: 2,
        timeout: Duration::from_secs(10),
        ..RemoteConfig::new(endpoint, 3)
    }
}

fn inputs() -> (Vec<String>, Vec<String>, Vec<usize>) {
    let texts = ["good", "bad film", "Café", "ok", "fine movie"];
    (
        (0..texts.len()).map(|i| format!("r{i}")).collect(),
        texts.iter().map(|t| t.to_string()).collect(),
        vec![1, 0, 0, 1, 1],
    )
}

#[test]
fn records_come_back_in_request_order() {
    let (endpoint, hits) = spawn_service(0);
    let (ids, texts, labels) = inputs();
    let records = fetch_remote(&config(endpoint), &ids, &texts, &labels).unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r.id, ids[i]);
        assert_eq!(r.label, labels[i]);
        assert_eq!(r.pooled_vector(), &[texts[i].chars().count() as f32, (i % 2) as f32, 1.0]);
    }
}

#[test]
fn transient_failures_are_retried() {
    let (endpoint, hits) = spawn_service(2);
    let (ids, texts, labels) = inputs();
    let records = fetch_remote(&config(endpoint), &ids, &texts, &labels).unwrap();
    assert_eq!(records.len(), 5);
    assert_eq!(hits.load(Ordering::SeqCst), 5);
}

#[test]
fn retries_are_bounded() {
    let (endpoint, hits) = spawn_service(usize::MAX);
    let (ids, texts, labels) = inputs();
    let err = fetch_remote(&config(endpoint), &ids, &texts, &labels).unwrap_err();
    assert!(matches!(err, RemoteError::Exhausted { attempts: 3, .. }), "{err:?}");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn wrong_width_is_rejected() {
    let (endpoint, _) = spawn_service(0);
    let (ids, texts, labels) = inputs();
    let cfg = RemoteConfig { dim: 4, ..config(endpoint) };
    assert!(matches!(fetch_remote(&cfg, &ids, &texts, &labels), Err(RemoteError::DimensionMismatch { .. })));
}

#[test]
fn unreachable_service_fails_after_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let (ids, texts, labels) = inputs();
    let err = fetch_remote(&config(format!("http://127.0.0.1:{port}")), &ids, &texts, &labels).unwrap_err();
    assert!(matches!(err, RemoteError::Exhausted { .. }), "{err:?}");
}
