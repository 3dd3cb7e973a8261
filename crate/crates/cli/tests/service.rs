use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use base64::Engine;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use pdna::service::{router, AppState, EventPayload, SessionStatus};
use pdna_core::pool::PoolConfig;
use pdna_core::pyramid::Image;
use pdna_core::raster::decode_png;
use pdna_core::retrieval::{build_pool, encode_image, RetrievalConfig, SessionState};
use pdna_core::synthetic::scene;

const LEVELS: usize = 3;

fn originals() -> BTreeMap<String, Image> {
    [("harbor", 1), ("meadow", 2)]
        .into_iter()
        .map(|(id, seed)| (id.to_string(), scene(64, 48, seed)))
        .collect()
}

fn app() -> Router {
    let originals = originals();
    let layers: Vec<_> = originals
        .iter()
        .map(|(id, img)| (id.clone(), encode_image(id, img, LEVELS).unwrap()))
        .collect();
    let built = build_pool(&layers, PoolConfig::default()).unwrap();
    let state = AppState::new(built.pool, built.dictionary, RetrievalConfig::default())
        .with_originals(originals);
    router(Arc::new(state))
}

async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, bytes.to_vec())
}

async fn json_call(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn create(app: &Router, image_id: &str) -> String {
    let (status, v) = json_call(
        app,
        Method::POST,
        "/sessions",
        Some(json!({ "image_id": image_id })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    v["session_id"].as_str().unwrap().to_string()
}

async fn wait_for(app: &Router, id: &str, states: &[SessionState]) -> SessionStatus {
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        let (status, v) = json_call(app, Method::GET, &format!("/sessions/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let s: SessionStatus = serde_json::from_value(v).unwrap();
        if states.contains(&s.state) {
            return s;
        }
        assert!(
            Instant::now() < deadline,
            "session {id} stuck in {:?}",
            s.state
        );
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

/// Data events of an SSE body, in order.
fn sse_events(body: &[u8]) -> Vec<EventPayload> {
    let text = std::str::from_utf8(body).unwrap();
    let mut out = Vec::new();
    for block in text.split("\n\n") {
        if block.lines().any(|l| l.starts_with("event:")) {
            panic!("unexpected non-layer event: {block}");
        }
        for line in block.lines() {
            if let Some(data) = line.strip_prefix("data:") {
                out.push(serde_json::from_str(data.trim()).unwrap());
            }
        }
    }
    out
}

fn preview(e: &EventPayload) -> Image {
    let png = base64::engine::general_purpose::STANDARD
        .decode(&e.preview_raster_base64)
        .unwrap();
    decode_png(&png).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn lists_registered_images() {
    let app = app();
    let (status, v) = json_call(&app, Method::GET, "/images", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        v,
        json!([
            { "image_id": "harbor", "layers": LEVELS },
            { "image_id": "meadow", "layers": LEVELS },
        ])
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_ids_are_404() {
    let app = app();
    let (status, _) = json_call(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({ "image_id": "nope" })),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    for (method, uri) in [
        (Method::GET, "/sessions/99"),
        (Method::GET, "/sessions/99/events"),
        (Method::POST, "/sessions/99/advance"),
        (Method::POST, "/sessions/99/stop"),
    ] {
        let (status, _) = call(&app, method, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn stop_after_first_layer_freezes_cost() {
    let app = app();
    let id = create(&app, "harbor").await;
    let waiting = wait_for(&app, &id, &[SessionState::AwaitingDecision]).await;
    assert_eq!(waiting.layers_done, 1);
    assert!(waiting.cost_nt > 0);

    let (status, v) = json_call(&app, Method::POST, &format!("/sessions/{id}/stop"), None).await;
    assert_eq!(status, StatusCode::OK);
    let stopped: SessionStatus = serde_json::from_value(v).unwrap();
    assert_eq!(stopped.state, SessionState::Stopped);
    assert!(stopped.cost_nt >= waiting.cost_nt);

    for action in ["advance", "stop"] {
        let (status, _) = call(
            &app,
            Method::POST,
            &format!("/sessions/{id}/{action}"),
            None,
        )
        .await;
        assert_eq!(status, StatusCode::CONFLICT, "{action}");
    }

    let (status, body) = call(&app, Method::GET, &format!("/sessions/{id}/events"), None).await;
    assert_eq!(status, StatusCode::OK);
    let events = sse_events(&body);
    assert_eq!(events.len(), 2);
    let first = &events[0];
    assert_eq!((first.layer, first.width, first.height), (0, 16, 12));
    assert_eq!(first.state, SessionState::AwaitingDecision);
    assert!(first.cost_nt > 0);
    assert!(first.psnr_db.is_some_and(|p| p.is_finite() && p > 0.0));
    assert!(first.gain_estimate > 1.0);
    assert_eq!(preview(first).width(), 16);
    let last = &events[1];
    assert_eq!((last.layer, last.state), (0, SessionState::Stopped));
    assert_eq!(last.cost_nt, stopped.cost_nt);

    // nothing is read after the stop
    tokio::time::sleep(Duration::from_millis(100)).await;
    let (_, v) = json_call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(v["cost_nt"].as_u64(), Some(stopped.cost_nt));
}

#[tokio::test(flavor = "multi_thread")]
async fn advancing_to_the_end_is_lossless() {
    let app = app();
    let id = create(&app, "meadow").await;
    // subscribe before anything is decided; the stream follows the session
    let events_app = app.clone();
    let uri = format!("/sessions/{id}/events");
    let listener = tokio::spawn(async move { call(&events_app, Method::GET, &uri, None).await });

    for layer in 1..LEVELS {
        wait_for(&app, &id, &[SessionState::AwaitingDecision]).await;
        let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/advance"), None).await;
        assert_eq!(status, StatusCode::ACCEPTED, "layer {layer}");
    }
    let done = wait_for(&app, &id, &[SessionState::Complete, SessionState::Stopped]).await;
    assert_eq!(done.state, SessionState::Complete);
    assert_eq!(done.layers_done, LEVELS);

    let (status, body) = listener.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    let events = sse_events(&body);
    assert_eq!(
        events.iter().map(|e| e.layer).collect::<Vec<_>>(),
        [0, 1, 2]
    );
    assert_eq!(
        events
            .iter()
            .map(|e| (e.width, e.height))
            .collect::<Vec<_>>(),
        [(16, 12), (32, 24), (64, 48)]
    );
    assert!(events.windows(2).all(|w| w[0].cost_nt < w[1].cost_nt));
    assert!(events
        .windows(2)
        .all(|w| w[0].gain_estimate > w[1].gain_estimate));
    let last = events.last().unwrap();
    assert_eq!(last.state, SessionState::Complete);
    assert_eq!(last.cost_nt, done.cost_nt);
    // lossless: identical to the original, so no finite PSNR
    assert_eq!(last.psnr_db, None);
    assert_eq!(preview(last), originals()["meadow"]);

    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/advance"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_with_the_same_seed_agree() {
    let app = app();
    let a = create(&app, "harbor").await;
    let b = create(&app, "harbor").await;
    assert_ne!(a, b);
    let sa = wait_for(&app, &a, &[SessionState::AwaitingDecision]).await;
    let sb = wait_for(&app, &b, &[SessionState::AwaitingDecision]).await;
    assert_eq!(sa.cost_nt, sb.cost_nt);

    let (status, v) = json_call(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({ "image_id": "harbor", "seed": 12345 })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let c = v["session_id"].as_str().unwrap().to_string();
    let sc = wait_for(&app, &c, &[SessionState::AwaitingDecision]).await;
    assert_eq!(sc.layers_done, 1);
}
