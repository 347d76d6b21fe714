#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    pub fn content(text: &str) -> Self {
        Reply::finish(text, "stop")
    }

    pub fn finish(text: &str, reason: &str) -> Self {
        let body = json!({
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": reason}]
        });
        Reply { status: 200, body: body.to_string(), delay: Duration::ZERO }
    }

    pub fn status(status: u16) -> Self {
        Reply { status, body: format!("error {status}"), delay: Duration::ZERO }
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

type Handler = dyn Fn(usize, &Value) -> Reply + Send + Sync;

pub struct Mock {
    pub hits: AtomicUsize,
    pub bodies: Mutex<Vec<Value>>,
    handler: Box<Handler>,
}

pub struct MockServer {
    pub url: String,
    pub state: Arc<Mock>,
}

impl MockServer {
    pub fn hits(&self) -> usize {
        self.state.hits.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<Value> {
        self.state.bodies.lock().unwrap().clone()
    }
}

async fn complete(State(mock): State<Arc<Mock>>, Json(body): Json<Value>) -> (StatusCode, String) {
    let n = mock.hits.fetch_add(1, Ordering::SeqCst);
    let reply = (mock.handler)(n, &body);
    mock.bodies.lock().unwrap().push(body);
    if !reply.delay.is_zero() {
        tokio::time::sleep(reply.delay).await;
    }
    (StatusCode::from_u16(reply.status).unwrap(), reply.body)
}

/// Serves `handler(call_index, request_body)` at `/v1/chat/completions`.
pub async fn serve(handler: impl Fn(usize, &Value) -> Reply + Send + Sync + 'static) -> MockServer {
    let state = Arc::new(Mock {
        hits: AtomicUsize::new(0),
        bodies: Mutex::new(Vec::new()),
        handler: Box::new(handler),
    });
    let app = Router::new()
        .route("/v1/chat/completions", post(complete))
        .with_state(Arc::clone(&state));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    MockServer { url: format!("http://{addr}/v1/chat/completions"), state }
}
