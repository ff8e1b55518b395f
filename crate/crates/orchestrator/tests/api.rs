use abyssal_core::fixtures;
use abyssal_orchestrator::engine::{Engine, EngineOptions};
use abyssal_orchestrator::events::EventRecord;
use abyssal_orchestrator::server::{router, spawn_engine, EngineHandle, ServeOptions};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use std::time::Duration;
use tower::ServiceExt;

fn paused() -> EngineHandle {
    let engine = Engine::new(fixtures::two_auv(), EngineOptions::default()).unwrap();
    let opts = ServeOptions { speed: None, start_paused: true, ..ServeOptions::default() };
    spawn_engine(engine, opts).unwrap()
}

async fn call(h: &EngineHandle, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_default()).unwrap();
    let resp = router(h.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

/// Reads `n` SSE events from `/events?since=`.
async fn read_events(h: &EngineHandle, since: usize, n: usize) -> Vec<EventRecord> {
    let req = Request::get(format!("/events?since={since}")).body(Body::empty()).unwrap();
    let resp = router(h.clone()).oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut body = resp.into_body();
    let mut text = String::new();
    let mut out = Vec::new();
    while out.len() < n {
        let frame = tokio::time::timeout(Duration::from_secs(20), body.frame()).await.expect("event within 20 s");
        let Some(Ok(frame)) = frame else { break };
        if let Ok(data) = frame.into_data() {
            text.push_str(std::str::from_utf8(&data).unwrap());
        }
        while let Some(end) = text.find("\n\n") {
            let block: String = text.drain(..end + 2).collect();
            if let Some(data) = block.lines().find_map(|l| l.strip_prefix("data: ")) {
                out.push(serde_json::from_str(data).unwrap());
            }
        }
    }
    out
}

#[tokio::test]
async fn state_reports_robots_and_head() {
    let h = paused();
    let (status, state) = call(&h, "GET", "/state", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(state["paused"], true);
    assert_eq!(state["head"], 1);
    assert!(state["robots"]["alpha"]["pose"].is_object());
    assert!(state["robots"]["beta"]["docked_at"] == "dock_b");
}

#[tokio::test]
async fn events_since_zero_is_full_history_then_live() {
    let h = paused();
    call(&h, "POST", "/control", Some(json!({"action": "resume"}))).await;
    h.wait_for(20).await;
    let events = read_events(&h, 0, 20).await;
    for (i, e) in events.iter().enumerate() {
        assert_eq!(e.seq, i as u64);
    }
    assert_eq!(events[0].kind, "ScenarioLoaded");
    // Lines served match the stored log byte for byte.
    let lines = h.lines();
    for e in &events {
        assert_eq!(e.to_line(), lines[e.seq as usize]);
    }
}

#[tokio::test]
async fn events_since_head_only_new() {
    let h = paused();
    let head = h.head();
    let reader = tokio::spawn({
        let h = h.clone();
        async move { read_events(&h, head, 3).await }
    });
    call(&h, "POST", "/control", Some(json!({"action": "resume"}))).await;
    let events = reader.await.unwrap();
    assert_eq!(events.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![head as u64, head as u64 + 1, head as u64 + 2]);
}

#[tokio::test]
async fn since_beyond_head_is_bad_cursor() {
    let h = paused();
    let (status, body) = call(&h, "GET", "/events?since=999", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "BadCursor");
    assert_eq!(body["head"], 1);
}

#[tokio::test]
async fn missions_accept_and_reject() {
    let h = paused();
    let (status, ack) = call(
        &h,
        "POST",
        "/missions",
        Some(json!({"robot": "beta", "text": "mission b1 normal\nbeta survey region 10 10 10 4\n"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{ack}");
    assert_eq!(ack["mission"]["plan_id"], "b1");

    let (status, ack) =
        call(&h, "POST", "/missions", Some(json!({"robot": "gamma", "text": "mission g normal\ngamma dock\n"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(ack["applied"], false);
    let rejected = &h.lines()[ack["seq"].as_u64().unwrap() as usize];
    assert!(rejected.contains("\"kind\":\"MissionRejected\""));
}

#[tokio::test]
async fn pause_stops_time_and_resume_restarts_it() {
    let h = paused();
    let (_, s1) = call(&h, "GET", "/state", None).await;
    tokio::time::sleep(Duration::from_millis(100)).await;
    let (_, s2) = call(&h, "GET", "/state", None).await;
    assert_eq!(s1["time"], s2["time"]);
    call(&h, "POST", "/control", Some(json!({"action": "resume"}))).await;
    h.wait_for(6).await;
    let (status, body) = call(&h, "POST", "/control", Some(json!({"action": "pause"}))).await;
    assert_eq!((status, &body["paused"]), (StatusCode::OK, &json!(true)));
    let (_, s3) = call(&h, "GET", "/state", None).await;
    assert!(s3["time"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn seed_control_is_logged() {
    let h = paused();
    let (status, ack) = call(&h, "POST", "/control", Some(json!({"action": "seed", "seed": 42}))).await;
    assert_eq!(status, StatusCode::OK);
    let line = &h.lines()[ack["seq"].as_u64().unwrap() as usize];
    assert!(line.contains("\"kind\":\"SeedChanged\"") && line.contains("42"));
    let (_, state) = call(&h, "GET", "/state", None).await;
    assert_eq!(state["seed"], 42);
}

#[tokio::test]
async fn classify_while_paused_shows_up_in_the_feed() {
    let h = paused();
    // Run until alpha has a record of cylinder_3, then pause.
    call(&h, "POST", "/control", Some(json!({"action": "resume"}))).await;
    loop {
        let seen = h.lines().iter().any(|l| {
            let r: EventRecord = serde_json::from_str(l).unwrap();
            r.kind == "ObjectDetected" && r.payload["object"] == "cylinder_3"
        });
        if seen {
            break;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    call(&h, "POST", "/control", Some(json!({"action": "pause"}))).await;
    let head = h.head();
    let (status, ack) = call(
        &h,
        "POST",
        "/interventions",
        Some(json!({"classify_object": {"object": "cylinder_3", "class": "cylinder"}})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{ack}");
    let events = read_events(&h, head, 3).await;
    let kinds: Vec<&str> = events.iter().map(|e| e.kind.as_str()).collect();
    assert_eq!(kinds, ["OperatorInput", "ClassifyObject", "ClassificationCorrected"]);
    let (_, state) = call(&h, "GET", "/state", None).await;
    let rec = &state["robots"]["alpha"]["records"]["cylinder_3"];
    assert_eq!((&rec["classification"], &rec["source"]), (&json!("cylinder"), &json!("human")));
}

#[tokio::test]
async fn bad_intervention_is_rejected_with_reason() {
    let h = paused();
    let (status, ack) =
        call(&h, "POST", "/interventions", Some(json!({"abort_mission": {"mission": "nothing"}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(ack["error"].as_str().unwrap().contains("nothing"));
    let (status, _) = call(&h, "POST", "/interventions", Some(json!({"fly": {}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn log_file_mirrors_the_stream() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    let engine = Engine::new(fixtures::two_auv(), EngineOptions::default()).unwrap();
    let opts = ServeOptions { speed: None, until: 20.0, start_paused: false, log_path: Some(path.clone()) };
    let h = spawn_engine(engine, opts).unwrap();
    loop {
        if h.lines().last().is_some_and(|l| l.contains("\"RunEnded\"")) {
            break;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    let written = std::fs::read_to_string(&path).unwrap();
    assert_eq!(written, h.lines().join("\n") + "\n");
    let report = abyssal_orchestrator::replay::replay_log(&written).unwrap();
    assert!(report.is_clean(), "{:?}", report.divergence);
}
