use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use refereval_core::models::CapacityModel;
use refereval_core::Rates;
use refereval_microworld::{build_calibration, build_experiment2, read_events, ExperimentConfig, Schedule, SessionLog, Source};
use refereval_server::{router, ManualClock, ServerConfig, SessionStore};
use serde_json::{json, Value};
use tower::ServiceExt;

const T0: u64 = 1_700_000_000_000;

fn schedules() -> BTreeMap<String, Arc<Schedule>> {
    let e = ExperimentConfig::reference().compile().unwrap();
    let human = CapacityModel::new(Rates::new(0.87, 0.046).unwrap(), 10).unwrap();
    BTreeMap::from([
        ("calibration".to_string(), Arc::new(build_calibration(&e, 1).unwrap())),
        ("experiment2".to_string(), Arc::new(build_experiment2(&e, &human, 1).unwrap())),
    ])
}

struct Harness {
    app: Router,
    clock: Arc<ManualClock>,
    store: Arc<SessionStore>,
}

fn harness(dir: &Path, clock: Arc<ManualClock>) -> Harness {
    let config = ServerConfig { log_dir: dir.to_owned(), seed: 7, grace_ms: 0, schedules: schedules() };
    let store = Arc::new(SessionStore::open(config, clock.clone()).unwrap());
    Harness { app: router(store.clone()), clock, store }
}

impl Harness {
    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
        let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
        let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        (status, String::from_utf8(bytes.to_vec()).unwrap())
    }

    async fn json(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (s, text) = self.call(method, uri, body).await;
        (s, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    async fn create(&self, config: &str) -> String {
        let (s, v) = self.json("POST", "/sessions", Some(json!({"config": config, "participant": "p1"}))).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["session_id"].as_str().unwrap().to_string()
    }

    async fn next(&self, id: &str) -> Value {
        let (s, v) = self.json("GET", &format!("/sessions/{id}/rounds/next"), None).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v
    }

    async fn decide(&self, id: &str, rid: u64, task: u64, label: &str) -> (StatusCode, Value) {
        self.json("POST", &format!("/sessions/{id}/rounds/{rid}/decisions"), Some(json!({"task_id": task, "label": label, "client_ts": 5}))).await
    }

    async fn complete(&self, id: &str, rid: u64) -> (StatusCode, Value) {
        self.json("POST", &format!("/sessions/{id}/rounds/{rid}/complete"), None).await
    }
}

fn tasks(round: &Value) -> Vec<u64> {
    round["tasks"].as_array().unwrap().iter().map(|t| t["task_id"].as_u64().unwrap()).collect()
}

#[tokio::test]
async fn create_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let h = harness(dir.path(), Arc::new(ManualClock::new(T0)));
    let (s, v) = h.json("POST", "/sessions", Some(json!({"config": "experiment2"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!((v["total_rounds"].as_u64(), v["practice_rounds"].as_u64()), (Some(27), Some(3)));
    let a = h.create("calibration").await;
    let b = h.create("calibration").await;
    assert_ne!(a, b);

    let (s, v) = h.json("POST", "/sessions", Some(json!({"config": "nope"}))).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_config")));
    let (s, v) = h.json("POST", "/sessions", Some(json!({"cfg": 1}))).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
    let (s, v) = h.json("GET", "/sessions/missing/rounds/next", None).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_session")));
}

#[tokio::test]
async fn rounds_hide_ground_truth_and_end_with_marker() {
    let dir = tempfile::tempdir().unwrap();
    let h = harness(dir.path(), Arc::new(ManualClock::new(T0)));
    let id = h.create("experiment2").await;
    let schedule = &h.store.config().schedules["experiment2"];
    for i in 0..27u64 {
        let (_, text) = h.call("GET", &format!("/sessions/{id}/rounds/next"), None).await;
        for hidden in ["true_state", "auto_leaf", "auto_posterior", "posterior", "policy", "auto_decisions", "batch_id", "H0", "H1"] {
            assert!(!text.contains(hidden), "round {} leaks {hidden}", i + 1);
        }
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["complete"], json!(false));
        assert_eq!(v["round_id"].as_u64(), Some(i + 1));
        assert_eq!(v["practice"].as_bool(), Some(i < 3));
        assert_eq!(v["duration_s"].as_u64(), Some(120));
        assert_eq!(tasks(&v).len(), schedule.rounds[i as usize].load());
        assert!(v["tasks"][0]["attributes"]["speed"].is_number());
        h.clock.advance(1_000);
        assert_eq!(h.complete(&id, i + 1).await.0, StatusCode::OK);
    }
    assert_eq!(h.next(&id).await, json!({"complete": true}));
}

#[tokio::test]
async fn decision_rules() {
    let dir = tempfile::tempdir().unwrap();
    let h = harness(dir.path(), Arc::new(ManualClock::new(T0)));
    let id = h.create("calibration").await;
    let (s, v) = h.decide(&id, 1, 0, "H1").await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("round_not_active")));

    let round = h.next(&id).await;
    let ids = tasks(&round);
    h.clock.advance(500);
    let (s, v) = h.decide(&id, 1, ids[0], "H1").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["timestamp_ms"].as_u64(), Some(T0 + 500));
    let (s, v) = h.decide(&id, 1, ids[0], "H0").await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("duplicate")));
    let (s, v) = h.decide(&id, 1, 999_999, "H0").await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("unknown_task")));
    let (s, v) = h.decide(&id, 1, ids[1], "hostile").await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
    let (s, v) = h.decide(&id, 2, ids[1], "H0").await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("round_not_active")));

    // The deadline itself is inside the round; one millisecond later is not.
    h.clock.set(T0 + 120_000);
    assert_eq!(h.decide(&id, 1, ids[1], "H0").await.0, StatusCode::OK);
    h.clock.set(T0 + 120_001);
    let (s, v) = h.decide(&id, 1, ids[2], "H0").await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("deadline")));

    let (s, v) = h.complete(&id, 1).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((v["human_decisions"].as_u64(), v["auto_resolved"].as_u64()), (Some(2), Some(ids.len() as u64 - 2)));
    let (s, v) = h.decide(&id, 1, ids[2], "H0").await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("round_closed")));
}

#[tokio::test]
async fn completion_resolves_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let h = harness(dir.path(), Arc::new(ManualClock::new(T0)));
    let id = h.create("calibration").await;

    // Everything classified: nothing to resolve.
    let r1 = h.next(&id).await;
    for (i, t) in tasks(&r1).into_iter().enumerate() {
        h.clock.advance(100);
        assert_eq!(h.decide(&id, 1, t, if i % 2 == 0 { "H0" } else { "H1" }).await.0, StatusCode::OK);
    }
    let (_, first) = h.complete(&id, 1).await;
    assert_eq!(first["auto_resolved"].as_u64(), Some(0));
    h.clock.advance(5_000);
    let (s, again) = h.complete(&id, 1).await;
    assert_eq!((s, &again), (StatusCode::OK, &first));

    // Nothing classified: every task is resolved by the system.
    let r2 = h.next(&id).await;
    let w = tasks(&r2).len() as u64;
    h.clock.advance(130_000);
    let (_, v) = h.complete(&id, 2).await;
    assert_eq!((v["human_decisions"].as_u64(), v["auto_resolved"].as_u64()), (Some(0), Some(w)));
    let before = h.call("GET", &format!("/sessions/{id}/export"), None).await.1;
    assert_eq!(h.complete(&id, 2).await.1, v);
    assert_eq!(h.call("GET", &format!("/sessions/{id}/export"), None).await.1, before);

    let (s, v) = h.complete(&id, 5).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("round_not_active")));
}

#[tokio::test]
async fn expired_round_closes_on_next() {
    let dir = tempfile::tempdir().unwrap();
    let h = harness(dir.path(), Arc::new(ManualClock::new(T0)));
    let id = h.create("calibration").await;
    let r1 = h.next(&id).await;
    h.clock.advance(10_000);
    // Re-delivery of the open round with the remaining time.
    let again = h.next(&id).await;
    assert_eq!(again["round_id"], r1["round_id"]);
    assert_eq!(again["remaining_ms"].as_u64(), Some(110_000));
    h.clock.advance(200_000);
    let r2 = h.next(&id).await;
    assert_eq!(r2["round_id"].as_u64(), Some(2));
    let (_, v) = h.complete(&id, 1).await;
    assert_eq!(v["auto_resolved"].as_u64(), Some(tasks(&r1).len() as u64));
}

#[tokio::test]
async fn export_matches_closed_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let h = harness(dir.path(), Arc::new(ManualClock::new(T0)));
    let id = h.create("calibration").await;
    let mut assigned = 0;
    for rid in 1..=5u64 {
        let r = h.next(&id).await;
        let ids = tasks(&r);
        assigned += ids.len();
        for t in ids.iter().take(3) {
            h.clock.advance(2_000);
            h.decide(&id, rid, *t, "H1").await;
        }
        h.clock.advance(1_000);
        h.complete(&id, rid).await;
    }
    // An open round with a decision is not exported yet.
    let r6 = h.next(&id).await;
    h.decide(&id, 6, tasks(&r6)[0], "H0").await;

    let (s, log) = h.call("GET", &format!("/sessions/{id}/export"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(log.lines().count(), assigned);
    assert_eq!(h.call("GET", &format!("/sessions/{id}/export"), None).await.1, log);

    let (_, truth) = h.call("GET", &format!("/sessions/{id}/export?sidecar=truth"), None).await;
    let schedule: Schedule = serde_json::from_str(&truth).unwrap();
    assert_eq!(&schedule, h.store.config().schedules["calibration"].as_ref());

    let path = dir.path().join("export.jsonl");
    std::fs::write(&path, &log).unwrap();
    let events = read_events(&path).unwrap();
    let practice = events.iter().filter(|e| e.practice).count();
    assert_eq!(practice, schedule.rounds[..3].iter().map(|r| r.load()).sum::<usize>());
    assert!(events.windows(2).all(|w| w[0].timestamp_ms <= w[1].timestamp_ms));
    assert!(events.iter().filter(|e| e.source == Source::Human).all(|e| e.client_ts == Some(5)));
    let mut session = SessionLog::new(id.clone(), "p1");
    session.events = events;
    session.check(&schedule).unwrap();

    assert_eq!(h.call("GET", &format!("/sessions/{id}/export?sidecar=x"), None).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(T0));
    let (id, r2, log_before) = {
        let h = harness(dir.path(), clock.clone());
        let id = h.create("calibration").await;
        h.next(&id).await;
        clock.advance(1_000);
        h.complete(&id, 1).await;
        let r2 = h.next(&id).await;
        clock.advance(1_000);
        h.decide(&id, 2, tasks(&r2)[0], "H1").await;
        (id.clone(), r2, std::fs::read_to_string(dir.path().join(format!("{id}.jsonl"))).unwrap())
    };
    // A torn write at crash time.
    let events_path = dir.path().join(format!("{id}.jsonl"));
    std::fs::write(&events_path, format!("{log_before}{{\"session_id\":\"{id}\",\"tim")).unwrap();

    let h = harness(dir.path(), clock.clone());
    assert_eq!(std::fs::read_to_string(&events_path).unwrap(), log_before);
    let again = h.next(&id).await;
    assert_eq!(again["round_id"], r2["round_id"]);
    assert_eq!(again["started_ms"], r2["started_ms"]);
    assert_eq!(h.decide(&id, 2, tasks(&r2)[0], "H0").await.1["code"].as_str(), Some("duplicate"));
    assert_eq!(h.decide(&id, 2, tasks(&r2)[1], "H0").await.0, StatusCode::OK);
    assert_eq!(h.complete(&id, 1).await.0, StatusCode::OK);
    // New sessions keep distinct resolve streams.
    let other = h.create("calibration").await;
    assert_ne!(other, id);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_are_independent() {
    let dir = tempfile::tempdir().unwrap();
    let h = Arc::new(harness(dir.path(), Arc::new(ManualClock::new(T0))));
    let mut handles = Vec::new();
    for _ in 0..8 {
        let h = h.clone();
        handles.push(tokio::spawn(async move {
            let id = h.create("calibration").await;
            for rid in 1..=3u64 {
                let r = h.next(&id).await;
                for t in tasks(&r) {
                    assert_eq!(h.decide(&id, rid, t, "H0").await.0, StatusCode::OK);
                }
                h.complete(&id, rid).await;
            }
            (id.clone(), h.call("GET", &format!("/sessions/{id}/export"), None).await.1)
        }));
    }
    let schedule = h.store.config().schedules["calibration"].clone();
    let want: usize = schedule.rounds[..3].iter().map(|r| r.load()).sum();
    for handle in handles {
        let (id, log) = handle.await.unwrap();
        assert_eq!(log.lines().count(), want);
        assert!(log.lines().all(|l| l.contains(&id)));
    }
}
