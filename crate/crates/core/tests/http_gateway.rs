//! HttpChatClient and HttpEmbedder against a local fake endpoint.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use uadx::gateway::{
    ChatClient, ChatRequest, Embedder, EmbeddingCapability, EndpointConfig, GatewayError, HttpChatClient,
    HttpEmbedder, InflightLimiter, Message, RetryPolicy,
};

/// Replies with `script[n]` for the n-th request (the last entry repeats).
#[derive(Default)]
struct Fake {
    script: Vec<u16>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    delay_ms: u64,
    auth_seen: parking_lot::Mutex<Vec<String>>,
}

async fn chat(State(f): State<Arc<Fake>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = f.calls.fetch_add(1, Ordering::SeqCst);
    let now = f.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    f.max_in_flight.fetch_max(now, Ordering::SeqCst);
    if let Some(a) = headers.get("authorization") {
        f.auth_seen.lock().push(a.to_str().unwrap().to_string());
    }
    if f.delay_ms > 0 {
        tokio::time::sleep(Duration::from_millis(f.delay_ms)).await;
    }
    f.in_flight.fetch_sub(1, Ordering::SeqCst);
    let code = f.script.get(n).or(f.script.last()).copied().unwrap_or(200);
    if code != 200 {
        return (StatusCode::from_u16(code).unwrap(), Json(json!({"error": "scripted"})));
    }
    let last = body["messages"].as_array().unwrap().last().unwrap()["content"].as_str().unwrap().to_string();
    (
        StatusCode::OK,
        Json(json!({
            "choices": [{"message": {"role": "assistant", "content": format!("echo: {last}")}}],
            "usage": {"prompt_tokens": 3, "completion_tokens": 2}
        })),
    )
}

async fn embed(Json(body): Json<Value>) -> Json<Value> {
    let data: Vec<Value> = body["input"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .rev() // out of order on purpose; the client must sort by index
        .map(|(i, s)| {
            let len = s.as_str().unwrap().len() as f64;
            json!({"index": i, "embedding": [len, 1.0, 0.0]})
        })
        .collect();
    Json(json!({ "data": data }))
}

/// Serves the fake on a background runtime; returns its base URL.
fn serve(fake: Arc<Fake>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = Router::new()
                .route("/v1/chat/completions", post(chat))
                .route("/v1/embeddings", post(embed))
                .with_state(fake);
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(5) }
}

fn client(base: &str, limit: usize) -> HttpChatClient {
    let cfg = EndpointConfig {
        url: format!("{base}/v1/chat/completions"),
        api_key: Some("secret".into()),
        model_id: "m".into(),
    };
    HttpChatClient::new(cfg, fast_retry(), InflightLimiter::new(limit)).unwrap()
}

fn request(text: &str) -> ChatRequest {
    ChatRequest::new("m", vec![Message::user(text)])
}

#[test]
fn rate_limit_then_success_retries_once() {
    let fake = Arc::new(Fake { script: vec![429, 200], ..Default::default() });
    let c = client(&serve(fake.clone()), 4);
    let r = c.complete(&request("hi")).unwrap();
    assert_eq!(r.text, "echo: hi");
    assert_eq!((r.usage.prompt_tokens, r.usage.completion_tokens), (3, 2));
    assert_eq!(fake.calls.load(Ordering::SeqCst), 2);
    assert_eq!(fake.auth_seen.lock()[0], "Bearer secret");
}

#[test]
fn unauthorized_is_not_retried() {
    let fake = Arc::new(Fake { script: vec![401], ..Default::default() });
    let c = client(&serve(fake.clone()), 4);
    let err = c.complete(&request("hi")).unwrap_err();
    assert!(matches!(err, GatewayError::Auth { status: 401, .. }), "{err}");
    assert_eq!(fake.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn persistent_server_errors_exhaust_the_budget() {
    let fake = Arc::new(Fake { script: vec![503], ..Default::default() });
    let c = client(&serve(fake.clone()), 4);
    let err = c.complete(&request("hi")).unwrap_err();
    assert!(err.is_transport(), "{err}");
    assert_eq!(fake.calls.load(Ordering::SeqCst), 3);

    let fake = Arc::new(Fake { script: vec![400], ..Default::default() });
    let c = client(&serve(fake.clone()), 4);
    assert!(matches!(c.complete(&request("hi")), Err(GatewayError::Http { status: 400, .. })));
    assert_eq!(fake.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    // bind then drop to get a port with nothing listening
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let c = client(&format!("http://127.0.0.1:{port}"), 1);
    assert!(c.complete(&request("x")).unwrap_err().is_transport());
}

#[test]
fn inflight_limit_is_respected() {
    let fake = Arc::new(Fake { delay_ms: 30, ..Default::default() });
    let c = client(&serve(fake.clone()), 2);
    std::thread::scope(|s| {
        for i in 0..8 {
            let c = &c;
            s.spawn(move || c.complete(&request(&format!("q{i}"))).unwrap());
        }
    });
    assert_eq!(fake.calls.load(Ordering::SeqCst), 8);
    assert!(fake.max_in_flight.load(Ordering::SeqCst) <= 2);
}

#[test]
fn embedder_orders_and_normalizes() {
    let base = serve(Arc::new(Fake::default()));
    let cfg = EndpointConfig { url: format!("{base}/v1/embeddings"), api_key: None, model_id: "e".into() };
    let tokens = HttpEmbedder::new(cfg.clone(), EmbeddingCapability::TokenLevel, fast_retry(), InflightLimiter::new(2))
        .unwrap();
    let t = tokens.embed_tokens("a bbb").unwrap();
    assert_eq!(t.tokens, ["a", "bbb"]);
    assert_eq!(t.dimension, 3);
    // [1,1,0] and [3,1,0], unit length, in input order
    assert!((t.vectors[0][0] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    assert!((t.vectors[1][0] - 3.0 / 10f64.sqrt()).abs() < 1e-12);
    assert_eq!(tokens.embed_sentence("x").unwrap(), None);

    let sentences = HttpEmbedder::new(cfg, EmbeddingCapability::SentenceOnly, fast_retry(), InflightLimiter::new(2))
        .unwrap();
    assert!(sentences.embed_tokens("a").is_err());
    assert!(sentences.embed_sentence("abc").unwrap().is_some());
}
