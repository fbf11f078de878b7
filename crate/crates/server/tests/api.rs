use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use proactive_safety::config::ScenarioConfig;
use proactive_safety::graph::RiskGraph;
use proactive_safety_server::{app, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn graph() -> RiskGraph {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/cstr_graph.tsv");
    RiskGraph::load(&p).unwrap()
}

fn short_config(duration: u64) -> ScenarioConfig {
    ScenarioConfig {
        duration,
        ..ScenarioConfig::reference()
    }
}

fn router(cfg: ScenarioConfig, g: Option<RiskGraph>) -> Router {
    app(AppState::new(cfg, g))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::Null)
    };
    (status, v)
}

async fn text(app: &Router, uri: &str) -> (StatusCode, String) {
    let resp = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn wait_finished(app: &Router, id: &str) -> Value {
    for _ in 0..6000 {
        let (_, s) = call(app, "GET", &format!("/sessions/{id}"), None).await;
        if s["finished"] == json!(true) {
            return s;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("session {id} did not finish");
}

#[tokio::test]
async fn health() {
    let app = router(short_config(10), None);
    let (st, v) = call(&app, "GET", "/health", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v, json!({"status": "ok"}));
}

#[tokio::test]
async fn session_starts_paused_and_refuses_plant_actions() {
    let app = router(short_config(50), None);
    let (st, v) = call(&app, "POST", "/sessions", None).await;
    assert_eq!(st, StatusCode::CREATED);
    assert_eq!(v["id"], "s1");
    assert_eq!(v["status"]["paused"], true);
    assert_eq!(v["status"]["tick"], 0);

    let (st, v) = call(
        &app,
        "POST",
        "/sessions/s1/actions",
        Some(json!({"kind": "turn_off_heater"})),
    )
    .await;
    assert_eq!(st, StatusCode::CONFLICT, "{v}");
    assert!(v["error"].as_str().unwrap().contains("paused"));

    let (st, _) = call(
        &app,
        "POST",
        "/sessions/s1/actions",
        Some(json!({"kind": "resume"})),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    let s = wait_finished(&app, "s1").await;
    assert_eq!(s["tick"], 50);
    let (st, _) = call(
        &app,
        "POST",
        "/sessions/s1/actions",
        Some(json!({"kind": "turn_off_heater"})),
    )
    .await;
    assert_eq!(st, StatusCode::CONFLICT);
}

#[tokio::test]
async fn coolant_target_is_clamped_with_notice() {
    let app = router(
        ScenarioConfig {
            pacing: Default::default(),
            ..short_config(1000)
        },
        None,
    );
    call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"ticks_per_second": 20.0})),
    )
    .await;
    call(
        &app,
        "POST",
        "/sessions/s1/actions",
        Some(json!({"kind": "resume"})),
    )
    .await;
    let (st, ack) = call(
        &app,
        "POST",
        "/sessions/s1/actions",
        Some(json!({"kind": "set_coolant_valve", "target": 250.0})),
    )
    .await;
    assert_eq!(st, StatusCode::OK, "{ack}");
    assert!(
        ack["notice"].as_str().unwrap().contains("clamped to 276"),
        "{ack}"
    );
    assert_eq!(
        ack["effective_at"], ack["issued_at"],
        "queued for the start of the next tick"
    );
    let (_, log) = call(&app, "GET", "/sessions/s1/actions", None).await;
    let log = log.as_array().unwrap();
    assert_eq!(log.len(), 2);
    assert_eq!(log[1]["action"]["kind"], "set_coolant_valve");
    call(
        &app,
        "POST",
        "/sessions/s1/actions",
        Some(json!({"kind": "pause"})),
    )
    .await;
    let (_, s) = call(&app, "GET", "/sessions/s1", None).await;
    assert_eq!(s["paused"], true);
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let app = router(short_config(10), None);
    let (st, _) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "GET", "/sessions/nope/events", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    call(&app, "POST", "/sessions", None).await;
    let (st, v) = call(
        &app,
        "POST",
        "/sessions/s1/actions",
        Some(json!({"kind": "acknowledge_alarm", "alarm_id": 99})),
    )
    .await;
    assert_eq!(st, StatusCode::NOT_FOUND, "{v}");
}

#[tokio::test]
async fn bad_requests_are_400() {
    let app = router(short_config(10), None);
    let (st, v) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"config_toml": "duration = 0"})),
    )
    .await;
    assert_eq!(st, StatusCode::BAD_REQUEST, "{v}");
    let (st, _) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"ticks_per_second": -1.0})),
    )
    .await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    call(&app, "POST", "/sessions", None).await;
    let (st, _) = call(
        &app,
        "POST",
        "/sessions/s1/query",
        Some(json!({"keywords": []})),
    )
    .await;
    assert!(st.is_client_error());
    let (st, _) = call(
        &app,
        "POST",
        "/sessions/s1/actions",
        Some(json!({"kind": "explode"})),
    )
    .await;
    assert!(st.is_client_error());
}

#[tokio::test]
async fn query_without_graph_conflicts() {
    let app = router(short_config(10), None);
    call(&app, "POST", "/sessions", None).await;
    let (st, _) = call(
        &app,
        "POST",
        "/sessions/s1/query",
        Some(json!({"keywords": ["tank temperature"]})),
    )
    .await;
    assert_eq!(st, StatusCode::CONFLICT);
}

#[tokio::test]
async fn manual_query_ranks_heater_first() {
    let app = router(short_config(10), Some(graph()));
    call(&app, "POST", "/sessions", None).await;
    let (st, r) = call(
        &app,
        "POST",
        "/sessions/s1/query",
        Some(json!({"keywords": ["tank temperature", "high"]})),
    )
    .await;
    assert_eq!(st, StatusCode::OK, "{r}");
    let chain: Vec<&str> = r["chains"][0]["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(chain.first(), Some(&"event:temperature-sensor-malfunction"));
    assert_eq!(chain.last(), Some(&"event:high-tank-temperature-deviation"));
    let recs = r["recommendations"].as_array().unwrap();
    let score = |label: &str| {
        recs.iter()
            .find(|x| x["treatment_label"] == label)
            .map(|x| x["score"].as_f64().unwrap())
            .unwrap()
    };
    assert!(score("Turn off heater") > score("Open coolant valve"));
}

#[tokio::test]
async fn reference_run_raises_alarm_and_auto_query() {
    let app = router(ScenarioConfig::reference(), Some(graph()));
    call(&app, "POST", "/sessions", None).await;
    call(
        &app,
        "POST",
        "/sessions/s1/actions",
        Some(json!({"kind": "resume"})),
    )
    .await;
    let s = wait_finished(&app, "s1").await;
    assert_eq!(s["tick"], 1000);

    let (_, alarms) = call(&app, "GET", "/sessions/s1/alarms", None).await;
    let alarms = alarms.as_array().unwrap();
    let first_feed = alarms
        .iter()
        .find(|a| a["channel"] == "feed_temp" && a["severity"] == "alarm")
        .unwrap();
    let t = first_feed["t"].as_f64().unwrap();
    assert!(t > 200.0 && t <= 400.0, "feed alarm at {t}");
    assert!(alarms.iter().any(|a| a["channel"] == "tank_temp"));

    let (_, qs) = call(&app, "GET", "/sessions/s1/queries", None).await;
    let q = &qs.as_array().unwrap()[0];
    let top = &q["result"]["recommendations"][0];
    assert_eq!(top["anchor_label"], "Upstream heater activation");

    let id = alarms[0]["id"].as_u64().unwrap();
    let (st, _) = call(
        &app,
        "POST",
        "/sessions/s1/actions",
        Some(json!({"kind": "acknowledge_alarm", "alarm_id": id})),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    let (_, alarms) = call(&app, "GET", "/sessions/s1/alarms", None).await;
    assert_eq!(alarms[0]["acknowledged"], true);

    let (st, csv) = text(&app, "/sessions/s1/telemetry.csv").await;
    assert_eq!(st, StatusCode::OK);
    assert!(csv.starts_with("time,"));
    assert!(csv.lines().next().unwrap().contains("feed_temp"));
    assert_eq!(csv.lines().count(), 1001);
    let (_, csv) = text(&app, "/sessions/s1/alarms.csv").await;
    assert_eq!(csv.lines().count(), alarms.as_array().unwrap().len() + 1);
}

#[tokio::test]
async fn telemetry_since_filters() {
    let app = router(short_config(100), None);
    call(&app, "POST", "/sessions", None).await;
    call(
        &app,
        "POST",
        "/sessions/s1/actions",
        Some(json!({"kind": "resume"})),
    )
    .await;
    wait_finished(&app, "s1").await;
    let (_, all) = call(&app, "GET", "/sessions/s1/telemetry", None).await;
    assert_eq!(all["samples"].as_array().unwrap().len(), 100);
    assert_eq!(all["tick"], 100);
    let (_, tail) = call(&app, "GET", "/sessions/s1/telemetry?since=90", None).await;
    let tail = tail["samples"].as_array().unwrap();
    assert!(!tail.is_empty());
    assert!(tail.iter().all(|s| s["time"].as_f64().unwrap() > 90.0));
}

struct Frame {
    id: u64,
    event: String,
    data: Value,
}

/// Reads SSE frames until `n` have arrived.
async fn read_frames(app: &Router, uri: &str, last_id: Option<u64>, n: usize) -> Vec<Frame> {
    let mut req = Request::get(uri);
    if let Some(id) = last_id {
        req = req.header("last-event-id", id.to_string());
    }
    let resp = app
        .clone()
        .oneshot(req.body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"]
        .to_str()
        .unwrap()
        .starts_with("text/event-stream"));
    let mut body = resp.into_body();
    let mut raw = String::new();
    let mut frames = Vec::new();
    while frames.len() < n {
        let frame = tokio::time::timeout(Duration::from_secs(30), body.frame())
            .await
            .expect("sse timeout");
        let Some(Ok(frame)) = frame else { break };
        if let Ok(data) = frame.into_data() {
            raw.push_str(std::str::from_utf8(&data).unwrap());
        }
        while let Some(end) = raw.find("\n\n") {
            let block: String = raw.drain(..end + 2).collect();
            let (mut id, mut event, mut data) = (None, String::new(), String::new());
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("id:") {
                    id = Some(v.trim().parse().unwrap());
                } else if let Some(v) = line.strip_prefix("event:") {
                    event = v.trim().to_string();
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push_str(v.trim_start());
                }
            }
            if let Some(id) = id {
                frames.push(Frame {
                    id,
                    event,
                    data: serde_json::from_str(&data).unwrap(),
                });
            }
        }
    }
    frames
}

#[tokio::test]
async fn events_stream_in_order_and_resume() {
    let app = router(short_config(40), None);
    call(&app, "POST", "/sessions", None).await;
    call(
        &app,
        "POST",
        "/sessions/s1/actions",
        Some(json!({"kind": "resume"})),
    )
    .await;

    let frames = read_frames(&app, "/sessions/s1/events", None, 20).await;
    assert_eq!(frames.len(), 20);
    for w in frames.windows(2) {
        assert_eq!(w[1].id, w[0].id + 1);
    }
    assert_eq!(frames[0].id, 1);
    for f in &frames {
        assert_eq!(f.data["seq"], f.id);
        assert_eq!(f.data["type"], f.event);
    }
    assert!(frames.iter().any(|f| f.event == "action"));
    let tele = frames.iter().find(|f| f.event == "telemetry").unwrap();
    assert!(tele.data["data"]["tank_temp"].is_number());

    let resumed = read_frames(&app, "/sessions/s1/events", Some(10), 3).await;
    assert_eq!(
        resumed.iter().map(|f| f.id).collect::<Vec<_>>(),
        vec![11, 12, 13]
    );
    let via_query = read_frames(&app, "/sessions/s1/events?after=15", None, 1).await;
    assert_eq!(via_query[0].id, 16);
}
