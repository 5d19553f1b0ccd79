use proofbeam::proposer::{OracleProposer, ScriptedProposer};
use proofbeam::service::{bind, is_approved, serve_on, AppState, Engine};
use proofbeam::stepwise::SearchConfig;
use proofbeam::verifier::{generate_space, MockBackend};
use serde_json::{json, Value};
use std::sync::Arc;

struct Server {
    base: String,
    backend: Arc<MockBackend>,
    goal: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    _rt: tokio::runtime::Runtime,
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
    }
}

fn start() -> Server {
    let space = generate_space(4, 2, 1, 21);
    let goal = space.root_goal();
    let backend = Arc::new(MockBackend::new(space.clone()).unwrap());
    let engine = Engine::new(backend.clone(), "oracle", Arc::new(OracleProposer::new(space, 1, 0)))
        .with_proposer("scripted", Arc::new(ScriptedProposer::new()))
        .with_search(SearchConfig { budget: 5.0, ..Default::default() });
    let state = Arc::new(AppState::new(Arc::new(engine), 1, 4));
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(bind("127.0.0.1:0".parse().unwrap(), false)).unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    rt.spawn(serve_on(listener, state, async {
        let _ = rx.await;
    }));
    Server { base: format!("http://{addr}"), backend, goal, stop: Some(tx), _rt: rt }
}

fn post(url: &str, body: Value) -> (u16, Value) {
    match ureq::post(url).send_json(body) {
        Ok(r) => (r.status(), r.into_json().unwrap()),
        Err(ureq::Error::Status(code, r)) => (code, r.into_json().unwrap_or(Value::Null)),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn prove_endpoint() {
    let s = start();
    let (code, v) = post(&format!("{}/prove", s.base), json!({ "goal": s.goal }));
    assert_eq!(code, 200);
    assert_eq!(v["ok"], true);
    let cmds = v["commands"].as_array().unwrap();
    assert!(!cmds.is_empty() && cmds.iter().all(|c| is_approved(c.as_str().unwrap())));
    assert!(v["elapsed"].as_f64().unwrap() >= 0.0);

    let (code, v) = post(&format!("{}/prove", s.base), json!({ "goal": s.goal, "proposer": "scripted", "budget": 0.5 }));
    assert_eq!(code, 200);
    assert_eq!(v, json!({ "ok": false, "commands": [], "elapsed": v["elapsed"] }));

    assert_eq!(post(&format!("{}/prove", s.base), json!({ "budget": 1 })).0, 400);
    assert_eq!(post(&format!("{}/prove", s.base), json!({ "goal": "  " })).0, 400);
    assert_eq!(post(&format!("{}/prove", s.base), json!({ "goal": s.goal, "beam": 0 })).0, 400);
    assert_eq!(post(&format!("{}/prove", s.base), json!({ "goal": s.goal, "proposer": "gpt" })).0, 400);
    assert_eq!(s.backend.sessions(), 1);
}

#[test]
fn plan_endpoint() {
    let s = start();
    let url = format!("{}/plan", s.base);
    let (code, v) = post(&url, json!({ "goal": s.goal, "mode": "outline" }));
    assert_eq!(code, 200);
    assert_eq!(v["ok"], true);
    assert!(v["holes_remaining"].as_u64().unwrap() >= 1);
    assert!(v["script"].as_str().unwrap().contains("sorry"));

    let (code, v) = post(&url, json!({ "goal": s.goal, "mode": "auto", "budget": 20 }));
    assert_eq!(code, 200);
    assert_eq!(v["ok"], true);
    assert_eq!(v["holes_remaining"], 0);
    assert_eq!(v["stats"]["solved"], true);

    assert_eq!(post(&url, json!({ "goal": s.goal, "mode": "banana" })).0, 400);
    assert_eq!(post(&url, json!({ "mode": "auto" })).0, 400);
    assert_eq!(post(&url, json!({ "goal": s.goal, "c1": 0 })).0, 400);
}

#[test]
fn survives_backend_crashes() {
    let s = start();
    let url = format!("{}/prove", s.base);
    s.backend.inject_crash(1);
    let (code, v) = post(&url, json!({ "goal": s.goal }));
    assert_eq!(code, 200);
    assert_eq!(v["ok"], true);
    s.backend.inject_panic(2);
    let (code, _) = post(&url, json!({ "goal": format!("{} ", s.goal), "budget": 1 }));
    assert_eq!(code, 200);
    let h: Value = ureq::get(&format!("{}/health", s.base)).call().unwrap().into_json().unwrap();
    assert_eq!(h["ok"], true);
    assert_eq!(h["backend"], "mock");
    assert!(s.backend.sessions() >= 2);
    let (code, v) = post(&url, json!({ "goal": s.goal }));
    assert_eq!((code, v["ok"].clone()), (200, json!(true)));
}

#[test]
fn malformed_bodies_are_rejected() {
    let s = start();
    for body in ["", "{", "[]", "{\"goal\": 3}", "{\"goal\": \"G\", \"budget\": \"soon\"}"] {
        let r = ureq::post(&format!("{}/prove", s.base)).set("content-type", "application/json").send_string(body);
        assert!(matches!(r, Err(ureq::Error::Status(400, _))), "{body}");
    }
}
