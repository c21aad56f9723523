//! The HTTP clients against a minimal in-process HTTP/1.1 stub.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use ehrqa::backends::{
    Backend, CachedBackend, ChatRequest, DiskCache, EmbedRole, Message, OpenAiBackend,
    OpenAiConfig, RetryPolicy, ScoreServiceBackend,
};
use ehrqa::Error;
use serde_json::{json, Value};

type Handler = Box<dyn Fn(&str, &Value) -> (u16, String) + Send + Sync>;

struct Stub {
    base: String,
    seen: Arc<Mutex<Vec<(String, Value)>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<(String, Value)> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((k, v)) = header.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body).ok()?;
    Some((path, serde_json::from_slice(&body).unwrap_or(Value::Null)))
}

fn serve(handler: Handler) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some((path, body)) = read_request(&mut stream) else {
                continue;
            };
            let (status, reply) = handler(&path, &body);
            log.lock().unwrap().push((path, body));
            let response = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    Stub { base, seen }
}

fn config(base: &str) -> OpenAiConfig {
    OpenAiConfig {
        base_url: format!("{base}/v1"),
        chat_model: Some("tiny".into()),
        embed_model: Some("embedder".into()),
        query_instruction: Some("query: ".into()),
        document_instruction: None,
        retry: RetryPolicy {
            attempts: 3,
            base_delay_ms: 1,
        },
        ..OpenAiConfig::default()
    }
}

fn openai_stub() -> Stub {
    serve(Box::new(|path, body| match path {
        "/v1/chat/completions" => {
            let last = body["messages"].as_array().unwrap().last().unwrap()["content"]
                .as_str()
                .unwrap()
                .to_string();
            (200, json!({"choices": [{"message": {"role": "assistant", "content": format!("re: {last}")}}]}).to_string())
        }
        "/v1/embeddings" => {
            let n = body["input"].as_array().unwrap().len();
            // reversed order, to check that the client sorts by index
            let data: Vec<Value> = (0..n)
                .rev()
                .map(|i| json!({"index": i, "embedding": [i as f64 + 1.0, 1.0]}))
                .collect();
            (200, json!({"data": data}).to_string())
        }
        _ => (404, "{}".into()),
    }))
}

#[test]
fn chat_round_trip_and_request_shape() {
    let stub = openai_stub();
    let backend = OpenAiBackend::new("local", config(&stub.base)).unwrap();
    let req = ChatRequest::new(vec![Message::system("sys"), Message::user("hello")]).seed(7);
    assert_eq!(backend.chat(&req).unwrap(), "re: hello");
    let seen = stub.seen.lock().unwrap();
    let (path, body) = &seen[0];
    assert_eq!(path, "/v1/chat/completions");
    assert_eq!(body["model"], "tiny");
    assert_eq!(body["seed"], 7);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["temperature"], 0.7);
}

#[test]
fn embeddings_sorted_prefixed_and_normalized() {
    let stub = openai_stub();
    let backend = OpenAiBackend::new("local", config(&stub.base)).unwrap();
    let texts = vec!["a".to_string(), "b".to_string()];
    let v = backend.embed(&texts, EmbedRole::Query).unwrap();
    let expect = |x: f64| x / (x * x + 1.0f64).sqrt();
    assert!((v[0].values()[0] - expect(1.0)).abs() < 1e-12);
    assert!((v[1].values()[0] - expect(2.0)).abs() < 1e-12);
    assert_eq!(
        stub.seen.lock().unwrap()[0].1["input"],
        json!(["query: a", "query: b"])
    );
    backend.embed(&texts, EmbedRole::Document).unwrap();
    assert_eq!(stub.seen.lock().unwrap()[1].1["input"], json!(["a", "b"]));
}

#[test]
fn cached_replay_makes_no_requests() {
    let stub = openai_stub();
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(DiskCache::open(dir.path()).unwrap());
    let backend = CachedBackend::new(
        OpenAiBackend::new("local", config(&stub.base)).unwrap(),
        cache.clone(),
    );
    let req = ChatRequest::new(vec![Message::user("same")]);
    let first = backend.chat(&req).unwrap();
    let second = backend.chat(&req).unwrap();
    assert_eq!(first, second);
    assert_eq!(stub.seen.lock().unwrap().len(), 1);
    assert_eq!(cache.stats().calls("chat"), 1);
    assert_eq!(cache.stats().hits, 1);
}

#[test]
fn server_errors_are_retried_then_succeed() {
    let count = Arc::new(Mutex::new(0));
    let c = count.clone();
    let stub = serve(Box::new(move |_, _| {
        let mut n = c.lock().unwrap();
        *n += 1;
        if *n < 3 {
            (503, "busy".into())
        } else {
            (
                200,
                json!({"choices": [{"message": {"content": "ok"}}]}).to_string(),
            )
        }
    }));
    let backend = OpenAiBackend::new("local", config(&stub.base)).unwrap();
    assert_eq!(
        backend
            .chat(&ChatRequest::new(vec![Message::user("x")]))
            .unwrap(),
        "ok"
    );
    assert_eq!(*count.lock().unwrap(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let stub = serve(Box::new(|_, _| (400, "{\"error\": \"bad\"}".into())));
    let backend = OpenAiBackend::new("local", config(&stub.base)).unwrap();
    let err = backend
        .chat(&ChatRequest::new(vec![Message::user("x")]))
        .unwrap_err();
    assert!(
        matches!(err, Error::Transport { attempts: 1, .. }),
        "{err:?}"
    );
    assert_eq!(stub.seen.lock().unwrap().len(), 1);
}

#[test]
fn empty_completion_is_reported() {
    let stub = serve(Box::new(|_, _| {
        (
            200,
            json!({"choices": [{"message": {"content": "  "}}]}).to_string(),
        )
    }));
    let backend = OpenAiBackend::new("local", config(&stub.base)).unwrap();
    let err = backend
        .chat(&ChatRequest::new(vec![Message::user("x")]))
        .unwrap_err();
    assert!(matches!(err, Error::EmptyOutput { .. }));
}

#[test]
fn unreachable_endpoint_exhausts_retries() {
    // bind then drop, so the port is very likely closed
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let backend = OpenAiBackend::new("local", config(&format!("http://127.0.0.1:{port}"))).unwrap();
    let err = backend
        .chat(&ChatRequest::new(vec![Message::user("x")]))
        .unwrap_err();
    assert!(
        matches!(err, Error::Transport { attempts: 3, .. }),
        "{err:?}"
    );
    assert_eq!(err.class().exit_code(), 4);
}

#[test]
fn missing_model_is_a_capability_error() {
    let cfg = OpenAiConfig {
        embed_model: None,
        ..config("http://127.0.0.1:9")
    };
    let backend = OpenAiBackend::new("local", cfg).unwrap();
    assert!(matches!(
        backend.embed(&["x".into()], EmbedRole::Query),
        Err(Error::Capability { .. })
    ));
}

#[test]
fn score_service_returns_p_relevant() {
    let stub = serve(Box::new(|path, body| {
        assert_eq!(path, "/score");
        let n = body["sentences"].as_array().unwrap().len();
        let records: Vec<Value> = (0..n)
            .map(|i| {
                let e = 0.1 * i as f64;
                json!({"p_essential": e, "p_supplementary": 0.2, "p_not_relevant": 0.8 - e, "p_relevant": 0.5 + e})
            })
            .collect();
        (200, json!(records).to_string())
    }));
    let backend = ScoreServiceBackend::new(
        "hydra",
        stub.base.clone(),
        RetryPolicy {
            attempts: 2,
            base_delay_ms: 1,
        },
    )
    .unwrap();
    let scores = backend
        .score_pairs("why dialysis", &["s1".into(), "s2".into(), "s3".into()])
        .unwrap();
    assert_eq!(scores.len(), 3);
    for (i, s) in scores.iter().enumerate() {
        assert!((s - (0.5 + 0.1 * i as f64)).abs() < 1e-12);
    }
    let seen = stub.seen.lock().unwrap();
    assert_eq!(
        seen[0].1,
        json!({"query": "why dialysis", "sentences": ["s1", "s2", "s3"]})
    );
}

#[test]
fn score_service_rejects_malformed_records() {
    let wrong_count = serve(Box::new(|_, _| {
        (200, json!([{"p_essential": 0.2, "p_supplementary": 0.3, "p_not_relevant": 0.5, "p_relevant": 0.5}]).to_string())
    }));
    let backend =
        ScoreServiceBackend::new("hydra", wrong_count.base.clone(), RetryPolicy::default())
            .unwrap();
    assert!(matches!(
        backend.score_pairs("q", &["a".into(), "b".into()]),
        Err(Error::Parse { .. })
    ));

    let bad_sum = serve(Box::new(|_, _| {
        (200, json!([{"p_essential": 0.5, "p_supplementary": 0.5, "p_not_relevant": 0.5, "p_relevant": 1.0}]).to_string())
    }));
    let backend =
        ScoreServiceBackend::new("hydra", bad_sum.base.clone(), RetryPolicy::default()).unwrap();
    assert!(matches!(
        backend.score_pairs("q", &["a".into()]),
        Err(Error::Parse { .. })
    ));
}
