use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use clsd_core::embedding::Embedder;
use clsd_core::evaluator::Translator;
use clsd_core::generator::{ChatClient, ChatMessage, ChatParams};
use clsd_providers::{
    CachedEmbedder, EmbeddingCache, HttpChat, HttpEmbedder, HttpTranslator, ProviderConfig,
    ProviderKind, RetryPolicy,
};
use serde_json::{json, Value};

type Handler = dyn Fn(usize, &HeaderMap, &Value) -> (u16, Value) + Send + Sync;

#[derive(Clone)]
struct Mock {
    handler: Arc<Handler>,
    requests: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<Value>>>,
    inflight: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
    delay: Duration,
}

struct Server {
    url: String,
    mock: Mock,
    _shutdown: tokio::sync::oneshot::Sender<()>,
}

impl Server {
    fn requests(&self) -> usize {
        self.mock.requests.load(Ordering::SeqCst)
    }

    fn bodies(&self) -> Vec<Value> {
        self.mock.bodies.lock().unwrap().clone()
    }

    fn peak(&self) -> usize {
        self.mock.peak.load(Ordering::SeqCst)
    }
}

async fn handle(
    State(mock): State<Mock>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let n = mock.requests.fetch_add(1, Ordering::SeqCst);
    let now = mock.inflight.fetch_add(1, Ordering::SeqCst) + 1;
    mock.peak.fetch_max(now, Ordering::SeqCst);
    mock.bodies.lock().unwrap().push(body.clone());
    if !mock.delay.is_zero() {
        tokio::time::sleep(mock.delay).await;
    }
    let (status, reply) = (mock.handler)(n, &headers, &body);
    mock.inflight.fetch_sub(1, Ordering::SeqCst);
    (StatusCode::from_u16(status).unwrap(), Json(reply))
}

fn serve_with_delay<F>(delay: Duration, handler: F) -> Server
where
    F: Fn(usize, &HeaderMap, &Value) -> (u16, Value) + Send + Sync + 'static,
{
    let mock = Mock {
        handler: Arc::new(handler),
        requests: Arc::default(),
        bodies: Arc::default(),
        inflight: Arc::default(),
        peak: Arc::default(),
        delay,
    };
    let app = Router::new()
        .route("/", post(handle))
        .with_state(mock.clone());
    let (addr_tx, addr_rx) = std::sync::mpsc::channel::<SocketAddr>();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            addr_tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
        });
    });
    let addr = addr_rx.recv().unwrap();
    Server {
        url: format!("http://{addr}/"),
        mock,
        _shutdown: stop_tx,
    }
}

fn serve<F>(handler: F) -> Server
where
    F: Fn(usize, &HeaderMap, &Value) -> (u16, Value) + Send + Sync + 'static,
{
    serve_with_delay(Duration::ZERO, handler)
}

fn config(kind: ProviderKind, url: &str) -> ProviderConfig {
    let mut cfg = ProviderConfig::new(kind, url, "test-model");
    cfg.retry = RetryPolicy {
        attempts: 3,
        base_backoff_ms: 1,
    };
    cfg.timeout_ms = 5_000;
    cfg
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Embeds each text as `[chars, 1, position in request]`, listed in reverse.
fn reversed_embeddings(_: usize, _: &HeaderMap, body: &Value) -> (u16, Value) {
    let input = body["input"].as_array().unwrap();
    let data: Vec<Value> = input
        .iter()
        .enumerate()
        .rev()
        .map(|(i, t)| {
            let len = t.as_str().unwrap().chars().count() as f64;
            json!({"index": i, "embedding": [len, 1.0, i as f64]})
        })
        .collect();
    (200, json!({ "data": data }))
}

#[test]
fn five_texts_in_batches_of_two_take_three_requests() {
    let server = serve(reversed_embeddings);
    let mut cfg = config(ProviderKind::Embedding, &server.url);
    cfg.max_batch = 2;
    let emb = HttpEmbedder::new(cfg).unwrap();
    let texts = strings(&["a", "bb", "ccc", "dddd", "eeeee"]);
    let out = emb.embed(&texts).unwrap();
    assert_eq!(server.requests(), 3);
    let lens: Vec<f64> = out.iter().map(|v| v.values[0]).collect();
    assert_eq!(lens, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    let bodies = server.bodies();
    assert!(bodies.iter().all(|b| b["model"] == "test-model"));
}

#[test]
fn cached_embeddings_skip_the_network() {
    let server = serve(reversed_embeddings);
    let dir = tempfile::tempdir().unwrap();
    let emb = CachedEmbedder::new(
        HttpEmbedder::new(config(ProviderKind::Embedding, &server.url)).unwrap(),
        EmbeddingCache::open(dir.path()).unwrap(),
    );
    let first = emb.embed(&strings(&["Die Beamten"])).unwrap();
    let before = server.requests();
    let second = emb.embed(&strings(&["Die Beamten"])).unwrap();
    assert_eq!(server.requests(), before);
    let bytes = |v: &[f64]| v.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>();
    assert_eq!(bytes(&first[0].values), bytes(&second[0].values));
}

#[test]
fn server_errors_are_retried_up_to_the_limit() {
    let server = serve(|_, _, _| (503, json!({"detail": "busy"})));
    let emb = HttpEmbedder::new(config(ProviderKind::Embedding, &server.url)).unwrap();
    let err = emb.embed(&strings(&["x"])).unwrap_err();
    assert!(err.is_provider());
    assert!(err.to_string().contains("after 3 attempts"), "{err}");
    assert_eq!(server.requests(), 3);
}

#[test]
fn unreachable_endpoint_fails_after_retries() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let cfg = config(
        ProviderKind::Embedding,
        &format!("http://127.0.0.1:{port}/"),
    );
    let err = HttpEmbedder::new(cfg)
        .unwrap()
        .embed(&strings(&["x"]))
        .unwrap_err();
    assert!(err.is_provider());
    assert!(err.to_string().contains("after 3 attempts"), "{err}");
}

#[test]
fn rate_limit_then_success() {
    let server = serve(|n, h, b| {
        if n == 0 {
            (429, json!({}))
        } else {
            reversed_embeddings(n, h, b)
        }
    });
    let emb = HttpEmbedder::new(config(ProviderKind::Embedding, &server.url)).unwrap();
    assert_eq!(emb.embed(&strings(&["x"])).unwrap().len(), 1);
    assert_eq!(server.requests(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let server = serve(|_, _, _| (400, json!({"detail": "bad model"})));
    let emb = HttpEmbedder::new(config(ProviderKind::Embedding, &server.url)).unwrap();
    let err = emb.embed(&strings(&["x"])).unwrap_err();
    assert!(err.to_string().contains("400"), "{err}");
    assert_eq!(server.requests(), 1);
}

#[test]
fn error_payload_is_surfaced() {
    let server = serve(|_, _, _| (200, json!({"error": {"message": "model overloaded"}})));
    let emb = HttpEmbedder::new(config(ProviderKind::Embedding, &server.url)).unwrap();
    let err = emb.embed(&strings(&["x"])).unwrap_err();
    assert!(err.to_string().contains("model overloaded"), "{err}");
}

#[test]
fn mixed_dimensions_are_rejected() {
    let server = serve(|_, _, body| {
        let n = body["input"].as_array().unwrap().len();
        let data: Vec<Value> = (0..n)
            .map(|i| json!({"index": i, "embedding": vec![1.0; i + 1]}))
            .collect();
        (200, json!({ "data": data }))
    });
    let emb = HttpEmbedder::new(config(ProviderKind::Embedding, &server.url)).unwrap();
    let err = emb.embed(&strings(&["a", "b"])).unwrap_err();
    assert!(err.to_string().contains("dimension mismatch"), "{err}");
}

#[test]
fn concurrency_stays_within_max_inflight() {
    let server = serve_with_delay(Duration::from_millis(30), reversed_embeddings);
    let mut cfg = config(ProviderKind::Embedding, &server.url);
    cfg.max_batch = 1;
    cfg.max_inflight = 2;
    let texts: Vec<String> = (0..8).map(|i| "x".repeat(i + 1)).collect();
    let out = HttpEmbedder::new(cfg).unwrap().embed(&texts).unwrap();
    assert_eq!(server.requests(), 8);
    assert!(server.peak() <= 2, "peak {}", server.peak());
    let lens: Vec<f64> = out.iter().map(|v| v.values[0]).collect();
    assert_eq!(lens, (1..=8).map(f64::from).collect::<Vec<_>>());
}

#[test]
fn api_key_is_sent_as_bearer_token() {
    let server = serve(|_, headers, _| {
        let ok =
            headers.get("authorization").and_then(|v| v.to_str().ok()) == Some("Bearer s3cret");
        if ok {
            (
                200,
                json!({"choices": [{"message": {"role": "assistant", "content": "ok"}}]}),
            )
        } else {
            (401, json!({}))
        }
    });
    std::env::set_var("CLSD_PROVIDER_TEST_KEY", "s3cret");
    let mut cfg = config(ProviderKind::Chat, &server.url);
    cfg.api_key_env = Some("CLSD_PROVIDER_TEST_KEY".into());
    let chat = HttpChat::new(cfg).unwrap();
    assert_eq!(
        chat.complete(&[ChatMessage::user("hi")], &ChatParams::default())
            .unwrap(),
        "ok"
    );
}

#[test]
fn chat_sends_default_sampling_parameters() {
    let server = serve(|_, _, _| {
        (
            200,
            json!({"choices": [{"message": {"role": "assistant", "content": "1. a\n2. b"}}]}),
        )
    });
    let chat = HttpChat::new(config(ProviderKind::Chat, &server.url)).unwrap();
    let reply = chat
        .complete(&[ChatMessage::user("prompt")], &ChatParams::default())
        .unwrap();
    assert_eq!(reply, "1. a\n2. b");
    let body = &server.bodies()[0];
    assert_eq!(body["temperature"], json!(1.0));
    assert_eq!(body["top_p"], json!(1.0));
    assert_eq!(
        body["messages"],
        json!([{"role": "user", "content": "prompt"}])
    );
}

#[test]
fn empty_chat_content_is_an_error() {
    let server = serve(|_, _, _| (200, json!({"choices": [{"message": {"content": ""}}]})));
    let chat = HttpChat::new(config(ProviderKind::Chat, &server.url)).unwrap();
    let err = chat
        .complete(&[ChatMessage::user("p")], &ChatParams::default())
        .unwrap_err();
    assert!(err.to_string().contains("empty completion"), "{err}");
}

#[test]
fn translation_preserves_order_across_chunks() {
    let server = serve(|_, _, body| {
        let out: Vec<String> = body["texts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| format!("{}>{}", body["tgt"].as_str().unwrap(), t.as_str().unwrap()))
            .collect();
        (200, json!({ "translations": out }))
    });
    let mut cfg = config(ProviderKind::Translation, &server.url);
    cfg.max_batch = 2;
    let mt = HttpTranslator::new(cfg).unwrap();
    let out = mt
        .translate(&strings(&["a", "b", "c"]), "de", "en")
        .unwrap();
    assert_eq!(out, strings(&["en>a", "en>b", "en>c"]));
    assert_eq!(server.bodies()[0]["src"], "de");
}

#[test]
fn translation_count_mismatch() {
    let server = serve(|_, _, _| (200, json!({"translations": ["x", "y"]})));
    let mt = HttpTranslator::new(config(ProviderKind::Translation, &server.url)).unwrap();
    let err = mt
        .translate(&strings(&["a", "b", "c"]), "de", "en")
        .unwrap_err();
    assert!(err.to_string().contains("count mismatch"), "{err}");
}

#[test]
fn translation_to_the_same_language_is_refused() {
    let server = serve(|_, _, _| (200, json!({"translations": []})));
    let mt = HttpTranslator::new(config(ProviderKind::Translation, &server.url)).unwrap();
    assert!(mt.translate(&strings(&["a"]), "de", "de").is_err());
    assert_eq!(server.requests(), 0);
}
