use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use infection_caps::policy::{simulate, Control};
use infection_caps::scenario::bundled;
use infection_caps::State;
use infection_caps_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(name: &str) -> (Router, Arc<AppState>) {
    let st = Arc::new(AppState::new(bundled(name).unwrap()).unwrap());
    (router(st.clone()), st)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), 1 << 26).await.unwrap();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn raw(app: &Router, uri: &str, body: &str) -> StatusCode {
    let req = Request::builder()
        .method("POST")
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    app.clone().oneshot(req).await.unwrap().status()
}

async fn new_session(app: &Router, x0: [f64; 2]) -> String {
    let (s, v) = call(app, "POST", "/api/session", Some(json!({ "x0": x0 }))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn read_only_endpoints() {
    let (app, _) = app("cali_comfortable_viable");
    let (s, v) = call(&app, "GET", "/api/scenario", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["caps"]["xbar1"], json!(0.7));

    let (_, v) = call(&app, "GET", "/api/classification", None).await;
    assert_eq!(v["case"], json!("comfortable_viable"));

    let (_, v) = call(&app, "GET", "/api/regions", None).await;
    let r = v["efficiency_ratio"].as_f64().unwrap();
    assert!(r > 0.0 && r < 1.0);
    assert!(v["admissible"]["vertices"].as_array().unwrap().len() > 10);

    let (_, v) = call(&app, "GET", "/api/barriers", None).await;
    assert!(v["admissible"].is_object() && v["mrpi"].is_object());
}

#[tokio::test]
async fn desperate_regions_are_flagged() {
    let (app, _) = app("cali_desperate");
    let (_, v) = call(&app, "GET", "/api/regions", None).await;
    assert_eq!(v["efficiency_ratio"], json!("desperate"));
    assert_eq!(v["advice"]["advisory"], json!("desperate"));
    assert_eq!(v["admissible"]["area"], json!(0.0));
    let (_, v) = call(&app, "GET", "/api/barriers", None).await;
    assert!(v["admissible"].is_null());
}

#[tokio::test]
async fn fifty_steps_match_a_schedule() {
    let (app, st) = app("cali_comfortable");
    let x0 = [0.05, 0.08];
    let id = new_session(&app, x0).await;
    let p = st.analysis.params;
    let mut sched = Vec::new();
    for k in 0..50 {
        let u = if k % 3 == 0 { p.u_max } else { p.u_min };
        let dt = 0.5 + (k % 7) as f64;
        sched.push((dt, u));
        let (s, v) = call(
            &app,
            "POST",
            &format!("/api/session/{id}/step"),
            Some(json!({ "u": u, "dt": dt })),
        )
        .await;
        assert_eq!(s, StatusCode::OK, "{v}");
        assert_eq!(v["clamped"], json!(false));
    }
    let horizon: f64 = sched.iter().map(|s| s.0).sum();
    let tr = simulate(
        &p,
        &st.analysis.caps,
        State::new(x0[0], x0[1]),
        &Control::Schedule(sched),
        horizon,
        &st.sim,
    )
    .unwrap();
    let end = tr.last_state();
    let (_, v) = call(&app, "GET", &format!("/api/session/{id}"), None).await;
    let state = v["state"].as_array().unwrap();
    assert!((state[0].as_f64().unwrap() - end.x1).abs() <= 1e-12);
    assert!((state[1].as_f64().unwrap() - end.x2).abs() <= 1e-12);
    assert!((v["t"].as_f64().unwrap() - horizon).abs() <= 1e-9);
    let hist = v["history"].as_array().unwrap();
    assert_eq!(hist.len(), tr.samples.len());
    let times: Vec<f64> = hist.iter().map(|h| h["t"].as_f64().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]));
}

#[tokio::test]
async fn sessions_are_isolated() {
    let (app, st) = app("cali_comfortable_viable");
    let a = new_session(&app, [0.1, 0.1]).await;
    let b = new_session(&app, [0.1, 0.1]).await;
    assert_ne!(a, b);
    let (_, va) = call(
        &app,
        "POST",
        &format!("/api/session/{a}/step"),
        Some(json!({ "u": 0.05, "dt": 5.0 })),
    )
    .await;
    let (_, vb) = call(&app, "GET", &format!("/api/session/{b}"), None).await;
    assert_eq!(vb["t"], json!(0.0));
    assert_eq!(vb["state"], json!([0.1, 0.1]));
    assert_ne!(va["state"], vb["state"]);
    assert_eq!(st.session_count(), 2);

    let (s, v) = call(
        &app,
        "POST",
        &format!("/api/session/{a}/reset"),
        Some(json!({ "x0": [0.2, 0.3] })),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["t"], json!(0.0));
    assert_eq!(v["state"], json!([0.2, 0.3]));
}

#[tokio::test]
async fn inputs_are_clamped() {
    let (app, st) = app("cali_comfortable_viable");
    let id = new_session(&app, [0.1, 0.1]).await;
    let (_, v) = call(
        &app,
        "POST",
        &format!("/api/session/{id}/step"),
        Some(json!({ "u": 5.0, "dt": 1.0 })),
    )
    .await;
    assert_eq!(v["clamped"], json!(true));
    assert_eq!(v["u"].as_f64().unwrap(), st.analysis.params.u_max);
    let (_, v) = call(
        &app,
        "POST",
        &format!("/api/session/{id}/step"),
        Some(json!({ "u": 0.0, "dt": 1.0 })),
    )
    .await;
    assert_eq!(v["clamped"], json!(true));
    assert_eq!(v["u"].as_f64().unwrap(), st.analysis.params.u_min);
}

#[tokio::test]
async fn policy_sessions_pick_their_own_input() {
    let (app, st) = app("cali_viable");
    let (_, v) = call(
        &app,
        "POST",
        "/api/session",
        Some(json!({ "x0": [0.149, 0.19], "mode": "policy" })),
    )
    .await;
    let id = v["id"].as_str().unwrap();
    let (s, v) = call(
        &app,
        "POST",
        &format!("/api/session/{id}/step"),
        Some(json!({ "dt": 1.0 })),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["u"].as_f64().unwrap(), st.analysis.params.u_max);
}

#[tokio::test]
async fn error_statuses() {
    let (app, _) = app("cali_viable");
    let (s, v) = call(&app, "GET", "/api/session/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], json!("not_found"));
    let (s, _) = call(
        &app,
        "POST",
        "/api/session/nope/step",
        Some(json!({ "u": 0.04, "dt": 1.0 })),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    assert_eq!(raw(&app, "/api/session", "{not json").await, StatusCode::BAD_REQUEST);
    assert_eq!(
        raw(&app, "/api/session", r#"{"x0":[1.5,0.1]}"#).await,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        raw(&app, "/api/session", r#"{"x0":[0.1,0.1],"extra":1}"#).await,
        StatusCode::BAD_REQUEST
    );

    let id = new_session(&app, [0.1, 0.1]).await;
    let step = format!("/api/session/{id}/step");
    for body in [
        r#"{"u":0.04,"dt":0}"#,
        r#"{"u":0.04,"dt":11}"#,
        r#"{"u":0.04}"#,
        r#"{"dt":1}"#,
    ] {
        assert_eq!(raw(&app, &step, body).await, StatusCode::BAD_REQUEST, "{body}");
    }

    // u_min from outside the admissible set breaks the cap
    let id = new_session(&app, [0.149, 0.199]).await;
    let step = format!("/api/session/{id}/step");
    let mut broke = false;
    for _ in 0..30 {
        let (s, v) = call(&app, "POST", &step, Some(json!({ "u": 0.0333, "dt": 10.0 }))).await;
        assert_eq!(s, StatusCode::OK);
        if !v["violation"].is_null() {
            broke = true;
            break;
        }
    }
    assert!(broke);
    let (s, v) = call(&app, "POST", &step, Some(json!({ "u": 0.05, "dt": 1.0 }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["code"], json!("violated"));
    let (s, _) = call(
        &app,
        "POST",
        &format!("/api/session/{id}/reset"),
        Some(json!({ "x0": [0.01, 0.01] })),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = call(&app, "POST", &step, Some(json!({ "u": 0.05, "dt": 1.0 }))).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn unknown_routes_are_json_404() {
    let (app, _) = app("cali_viable");
    let (s, v) = call(&app, "GET", "/api/missing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], json!("not_found"));
}
