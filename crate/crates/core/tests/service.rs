use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use sitnet::service::{router, spec_id, AppState, ServiceConfig};

const REQUEST: &str = include_str!("../examples/request.scspec");
const TRIAL: &str = include_str!("../examples/trial.scspec");

async fn call(app: &Router, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn json_call(app: &Router, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let (status, text) = call(app, method, uri, body).await;
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

async fn upload(app: &Router, text: &'static str) -> String {
    let (status, v) = json_call(app, Method::POST, "/specs", text).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["specId"].as_str().unwrap().to_string()
}

fn app() -> Router {
    router(AppState::new(ServiceConfig::default()))
}

#[tokio::test]
async fn uploads_are_content_addressed() {
    let app = app();
    let id = upload(&app, TRIAL).await;
    assert_eq!(id, spec_id(TRIAL));
    assert_eq!(id.len(), 16);
    assert_eq!(upload(&app, TRIAL).await, id);
    let (status, list) = json_call(&app, Method::GET, "/specs", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert!(list.to_string().contains(&id));
}

#[tokio::test]
async fn parse_errors_carry_position() {
    let (status, v) = json_call(&app(), Method::POST, "/specs", "operation(broken(X).\n").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["line"], 1);
    assert!(v["column"].as_u64().unwrap() > 0);
    assert!(v["error"].as_str().is_some());
}

#[tokio::test]
async fn unknown_spec_is_404() {
    let (status, _) = call(&app(), Method::GET, "/specs/deadbeefdeadbeef/net", Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn net_formats() {
    let app = app();
    let id = upload(&app, REQUEST).await;
    let (_, clausal) = call(&app, Method::GET, &format!("/specs/{id}/net"), Body::empty()).await;
    assert_eq!(clausal.lines().count(), 15);
    let (_, dot) = call(&app, Method::GET, &format!("/specs/{id}/net?format=dot"), Body::empty()).await;
    assert!(dot.starts_with("digraph"));
    let (_, net) = json_call(&app, Method::GET, &format!("/specs/{id}/net?format=json"), Body::empty()).await;
    assert_eq!(net["places"].as_array().unwrap().len(), 7);
    let (status, _) = call(&app, Method::GET, &format!("/specs/{id}/net?format=svg"), Body::empty()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn plans_with_bindings() {
    let app = app();
    let id = upload(&app, REQUEST).await;
    let body = json!({ "goal": "claims('Peter',R), r_value(R,200), rejected(['Peter',R],M)" }).to_string();
    let (status, v) = json_call(&app, Method::POST, &format!("/specs/{id}/plan"), body).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let plans = v["plans"].as_array().unwrap();
    assert_eq!(plans.len(), 2);
    assert_eq!(plans[0]["bindings"]["M"], "'limit exceeded'");
    assert_eq!(plans[0]["bindings"]["R"], "req_t124");

    let limited = json!({ "goal": "claims('Mary',R), r_value(R,58), payed(['Mary',R],58)", "maxPlans": 1 }).to_string();
    let (_, v) = json_call(&app, Method::POST, &format!("/specs/{id}/plan"), limited).await;
    assert_eq!(v["plans"].as_array().unwrap().len(), 1);

    let (status, _) = json_call(&app, Method::POST, &format!("/specs/{id}/plan"), json!({ "goal": "(" }).to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn check_fix_repairs_or_refuses() {
    let app = app();
    let id = upload(&app, REQUEST).await;
    let faulty = "start=>register('Peter',200,t124,req_t124)=>decide(req_t124,'Peter',200,_506)=>examine_casually(req_t124,'Peter')=>reject_request(req_t124,'Peter',200)";
    let (status, v) = json_call(&app, Method::POST, &format!("/specs/{id}/check-fix"), json!({ "plan": faulty }).to_string()).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["log"].as_array().unwrap().len(), 2);
    assert_eq!(v["log"][0]["kind"], "notEnabled");
    assert_eq!(v["log"][1]["kind"], "redundant");
    assert!(v["transcript"].as_str().unwrap().ends_with("Valid\n"));

    let hopeless = "start=>register('Peter',200,t124,req_t124)=>examine_thoroughly(req_t124,'Peter')";
    let (status, v) = json_call(&app, Method::POST, &format!("/specs/{id}/check-fix"), json!({ "plan": hopeless }).to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().starts_with("unrepairable"));
}

#[tokio::test]
async fn check_trace_per_line() {
    let app = app();
    let id = upload(&app, REQUEST).await;
    let (status, v) = json_call(&app, Method::POST, &format!("/specs/{id}/check-trace"), "acdefdbeg\naceg\na\n").await;
    assert_eq!(status, StatusCode::OK);
    let verdicts = v["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 3);
    assert_eq!(verdicts[0]["verdict"], "valid");
    assert_eq!(verdicts[1]["verdict"], "invalid");
    assert_eq!(verdicts[1]["position"], 3);
    assert_eq!(verdicts[1]["text"], "invalid at 3: transition e lacks token on s(4)");
    assert_eq!(verdicts[2]["reason"]["kind"], "endNotReached");
}

#[tokio::test]
async fn session_lifecycle() {
    let app = app();
    let id = upload(&app, TRIAL).await;
    let (status, v) = json_call(&app, Method::POST, "/sessions", json!({ "specId": id }).to_string()).await;
    assert_eq!(status, StatusCode::CREATED);
    let sid = v["sessionId"].as_str().unwrap().to_string();
    assert_eq!(v["history"], "a");
    assert_eq!(v["status"], "awaitingChoice");
    assert_eq!(v["revision"], 1);
    assert_eq!(v["options"][2], json!({ "label": "d", "name": "enter_challenger" }));

    let choose = |label: &str| json!({ "label": label }).to_string();
    let (status, _) = json_call(&app, Method::POST, &format!("/sessions/{sid}/choose"), choose("g")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let mut last = Value::Null;
    for l in ["c", "f", "d", "b", "g"] {
        let (status, v) = json_call(&app, Method::POST, &format!("/sessions/{sid}/choose"), choose(l)).await;
        assert_eq!(status, StatusCode::OK, "{l}: {v}");
        last = v;
    }
    assert_eq!(last["history"], "acdefdbeg");
    assert_eq!(last["status"], "completed");
    assert_eq!(last["revision"], 6);
    assert!(last["planText"].as_str().unwrap().ends_with("=>vindicate(d,o)"));

    let (status, got) = json_call(&app, Method::GET, &format!("/sessions/{sid}"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(got, last);
    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{sid}"), Body::empty()).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{sid}"), Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn events_start_with_current_view() {
    let app = app();
    let id = upload(&app, TRIAL).await;
    let (_, v) = json_call(&app, Method::POST, "/sessions", json!({ "specId": id }).to_string()).await;
    let sid = v["sessionId"].as_str().unwrap();
    let req = Request::get(format!("/sessions/{sid}/events")).body(Body::empty()).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert_eq!(res.headers()["content-type"], "text/event-stream");
    let mut body = res.into_body();
    let frame = tokio::time::timeout(Duration::from_secs(5), body.frame()).await.unwrap().unwrap().unwrap();
    let text = String::from_utf8(frame.into_data().unwrap().to_vec()).unwrap();
    assert!(text.contains("data: "), "{text}");
    assert!(text.contains("\"history\":\"a\""), "{text}");
}

#[tokio::test]
async fn idle_sessions_are_evicted() {
    let state = AppState::new(ServiceConfig { session_ttl: Duration::from_secs(60), ..ServiceConfig::default() });
    let app = router(state.clone());
    let id = upload(&app, TRIAL).await;
    json_call(&app, Method::POST, "/sessions", json!({ "specId": id }).to_string()).await;
    assert_eq!(state.evict_idle(Instant::now()), 0);
    assert_eq!(state.evict_idle(Instant::now() + Duration::from_secs(120)), 1);
}
