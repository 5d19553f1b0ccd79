//! Prove and plan jobs behind one shared backend session, and the local HTTP
//! server exposing them.

use crate::datalog::{new_run_id, LogSink, NullSink, RunRecord};
use crate::hints::HintLexicon;
use crate::planner::{plan_goal, plan_outline, PlanMode, PlanResult, PlannerConfig, PlannerDeps};
use crate::premises::PremiseIndex;
use crate::proposer::ProposerBackend;
use crate::rerank::RerankModel;
use crate::script_model::{find_holes, lemma_line, ProofScript};
use crate::session::RunContext;
use crate::stepwise::{prove_goal, Guidance, ProofResult, SearchConfig};
use crate::verifier::{GlobalCache, StepCache, VerifierBackend, DEFAULT_GLOBAL_CAPACITY};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

pub const DEFAULT_ADDR: &str = "127.0.0.1:8642";
pub const DEFAULT_QUEUE: usize = 4;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("server busy")]
    Busy,
    #[error("internal error: {0}")]
    Internal(String),
    #[error("refusing to bind non-loopback address {0} without allow_remote")]
    NonLoopback(SocketAddr),
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Busy => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::InvalidRequest(e.to_string())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProveRequest {
    pub goal: Option<String>,
    pub budget: Option<f64>,
    pub beam: Option<usize>,
    pub depth: Option<u32>,
    pub proposer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProveResponse {
    pub ok: bool,
    pub commands: Vec<String>,
    pub elapsed: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub goal: Option<String>,
    pub mode: Option<String>,
    pub proposer: Option<String>,
    pub budget: Option<f64>,
    pub samples: Option<usize>,
    pub temperatures: Option<Vec<f64>>,
    pub c1: Option<u32>,
    pub c2: Option<u32>,
    pub fill_budget: Option<f64>,
    pub fill_beam: Option<usize>,
    pub fill_depth: Option<u32>,
    pub repair_budget: Option<f64>,
    pub regeneration_cap: Option<u32>,
    pub enforce_holes: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub solved: bool,
    pub outlines_sampled: u64,
    pub fills: u64,
    pub repairs: u64,
    pub regenerations: u64,
    pub elapsed: f64,
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub ok: bool,
    pub script: String,
    pub holes_remaining: usize,
    pub stats: PlanStats,
}

/// Lines a client may paste verbatim: `apply …`, `by …` and `done`.
pub fn approved_lines(script: &ProofScript) -> Vec<String> {
    script
        .lines()
        .iter()
        .map(|l| l.trim())
        .filter(|l| l.starts_with("apply ") || l.starts_with("by ") || *l == "done")
        .map(str::to_string)
        .collect()
}

pub fn is_approved(line: &str) -> bool {
    line.starts_with("apply ") || line.starts_with("by ") || line == "done"
}

impl ProveRequest {
    /// Request values over `base`.
    pub fn merge(&self, base: &SearchConfig) -> Result<SearchConfig, ServiceError> {
        let mut cfg = base.clone();
        if let Some(b) = self.budget {
            cfg.budget = b;
        }
        if let Some(w) = self.beam {
            cfg.beam_width = w;
        }
        if let Some(d) = self.depth {
            cfg.max_depth = d;
        }
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }
}

impl PlanRequest {
    pub fn plan_mode(&self) -> Result<PlanMode, ServiceError> {
        match self.mode.as_deref() {
            None => Ok(PlanMode::Auto),
            Some(m) => PlanMode::parse(m).ok_or_else(|| invalid(format!("mode must be outline or auto, got {m:?}"))),
        }
    }

    pub fn merge(&self, base: &PlannerConfig) -> Result<PlannerConfig, ServiceError> {
        let mut cfg = base.clone();
        cfg.mode = self.plan_mode()?;
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$target = v;
                }
            )*};
        }
        set!(budget => budget, samples => samples_per_temp, temperatures => temperatures, c1 => c1, c2 => c2,
             fill_budget => fill_budget, fill_beam => fill_beam, fill_depth => fill_depth,
             repair_budget => repair_budget, regeneration_cap => regeneration_cap, enforce_holes => enforce_holes);
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }
}

fn goal_of(goal: &Option<String>) -> Result<&str, ServiceError> {
    match goal.as_deref().map(str::trim) {
        Some(g) if !g.is_empty() => Ok(g),
        _ => Err(invalid("missing goal")),
    }
}

/// One backend session, the configured proposers and the optional learned
/// components, shared by every job.
pub struct Engine {
    backend: Arc<dyn VerifierBackend>,
    proposers: Vec<(String, Arc<dyn ProposerBackend>)>,
    reranker: Option<RerankModel>,
    premises: Option<PremiseIndex>,
    lexicon: Option<HintLexicon>,
    search: SearchConfig,
    planner: PlannerConfig,
    sink: Arc<dyn LogSink>,
    cache: Arc<GlobalCache>,
}

/// Outcome of a plan job in either mode.
#[derive(Debug, Clone)]
pub struct PlanJob {
    pub ok: bool,
    pub script: ProofScript,
    pub result: Option<PlanResult>,
    pub elapsed: Duration,
}

impl Engine {
    /// `proposer` becomes the default, registered under `name`.
    pub fn new(backend: Arc<dyn VerifierBackend>, name: &str, proposer: Arc<dyn ProposerBackend>) -> Self {
        Engine {
            backend,
            proposers: vec![(name.to_string(), proposer)],
            reranker: None,
            premises: None,
            lexicon: None,
            search: SearchConfig::default(),
            planner: PlannerConfig::default(),
            sink: Arc::new(NullSink),
            cache: GlobalCache::shared(DEFAULT_GLOBAL_CAPACITY),
        }
    }

    pub fn with_proposer(mut self, name: &str, proposer: Arc<dyn ProposerBackend>) -> Self {
        self.proposers.retain(|(n, _)| n != name);
        self.proposers.push((name.to_string(), proposer));
        self
    }

    pub fn with_reranker(mut self, model: Option<RerankModel>) -> Self {
        self.reranker = model;
        self
    }

    pub fn with_premises(mut self, index: Option<PremiseIndex>) -> Self {
        self.premises = index;
        self
    }

    pub fn with_lexicon(mut self, lexicon: Option<HintLexicon>) -> Self {
        self.lexicon = lexicon;
        self
    }

    pub fn with_search(mut self, cfg: SearchConfig) -> Self {
        self.search = cfg;
        self
    }

    pub fn with_planner(mut self, cfg: PlannerConfig) -> Self {
        self.planner = cfg;
        self
    }

    pub fn with_sink(mut self, sink: Arc<dyn LogSink>) -> Self {
        self.sink = sink;
        self
    }

    pub fn search_defaults(&self) -> &SearchConfig {
        &self.search
    }

    pub fn planner_defaults(&self) -> &PlannerConfig {
        &self.planner
    }

    pub fn backend(&self) -> &Arc<dyn VerifierBackend> {
        &self.backend
    }

    pub fn cache(&self) -> &Arc<GlobalCache> {
        &self.cache
    }

    pub fn sink(&self) -> &Arc<dyn LogSink> {
        &self.sink
    }

    pub fn proposer_names(&self) -> Vec<&str> {
        self.proposers.iter().map(|(n, _)| n.as_str()).collect()
    }

    fn proposer(&self, name: Option<&str>) -> Result<&dyn ProposerBackend, ServiceError> {
        match name {
            None => Ok(self.proposers[0].1.as_ref()),
            Some(n) => self
                .proposers
                .iter()
                .find(|(k, _)| k == n)
                .map(|(_, p)| p.as_ref())
                .ok_or_else(|| invalid(format!("unknown proposer {n:?}"))),
        }
    }

    fn guidance<'a>(&'a self, proposer: &'a dyn ProposerBackend) -> Guidance<'a> {
        let mut g = Guidance::new(proposer);
        g.reranker = self.reranker.as_ref();
        g.premises = self.premises.as_ref();
        g
    }

    fn step_cache(&self) -> StepCache {
        StepCache::new(self.cache.clone())
    }

    pub fn run_prove(&self, goal: &str, cfg: &SearchConfig, proposer: Option<&str>) -> Result<ProofResult, ServiceError> {
        let p = self.proposer(proposer)?;
        prove_goal(goal, cfg, self.backend.as_ref(), self.guidance(p), self.sink.as_ref(), self.step_cache()).map_err(invalid)
    }

    pub fn run_plan(&self, goal: &str, cfg: &PlannerConfig, proposer: Option<&str>) -> Result<PlanJob, ServiceError> {
        let p = self.proposer(proposer)?;
        let start = Instant::now();
        let deps = PlannerDeps { lexicon: self.lexicon.as_ref(), ..PlannerDeps::new(p, self.guidance(p), &self.search) };
        match cfg.mode {
            PlanMode::Auto => {
                let r = plan_goal(goal, cfg, self.backend.as_ref(), &deps, self.sink.as_ref(), self.step_cache())
                    .map_err(invalid)?;
                Ok(PlanJob { ok: r.solved, script: r.script.clone(), elapsed: r.elapsed, result: Some(r) })
            }
            PlanMode::Outline => {
                let run_id = new_run_id();
                let ctx = RunContext::new(&run_id, self.backend.as_ref(), self.sink.as_ref(), self.step_cache())
                    .with_timeout(Duration::from_secs_f64(cfg.check_timeout));
                let best = plan_outline(goal, cfg, &ctx, &deps).map_err(invalid)?;
                let mut run = RunRecord::new(&run_id, goal, "outline");
                run.config = json!({ "planner": cfg });
                run.models.insert("proposer".into(), p.name().to_string());
                run.runtime_ms = start.elapsed().as_millis() as u64;
                run.success = best.is_some();
                run.stats.outlines = best.is_some() as u64;
                run.stats.verifier_calls = ctx.evaluations();
                if let Err(e) = self.sink.log_run(&run) {
                    log::warn!("dropping run record: {e}");
                }
                let _ = self.sink.flush();
                let ok = best.is_some();
                let script = best.unwrap_or_else(|| {
                    ProofScript::parse(&format!("{}\n  sorry", lemma_line(goal))).expect("fallback parses")
                });
                Ok(PlanJob { ok, script, result: None, elapsed: start.elapsed() })
            }
        }
    }

    pub fn handle_prove(&self, req: &ProveRequest) -> Result<ProveResponse, ServiceError> {
        let goal = goal_of(&req.goal)?;
        let cfg = req.merge(&self.search)?;
        let r = self.run_prove(goal, &cfg, req.proposer.as_deref())?;
        let commands = if r.solved { approved_lines(&r.script) } else { vec![] };
        Ok(ProveResponse { ok: r.solved, commands, elapsed: r.elapsed.as_secs_f64() })
    }

    pub fn handle_plan(&self, req: &PlanRequest) -> Result<PlanResponse, ServiceError> {
        let goal = goal_of(&req.goal)?;
        let cfg = req.merge(&self.planner)?;
        let job = self.run_plan(goal, &cfg, req.proposer.as_deref())?;
        let stats = match &job.result {
            Some(r) => PlanStats {
                solved: r.solved,
                outlines_sampled: r.outlines_sampled,
                fills: r.fills_attempted,
                repairs: r.repairs_attempted,
                regenerations: r.regenerations,
                elapsed: r.elapsed.as_secs_f64(),
                timed_out: r.timed_out,
            },
            None => PlanStats { outlines_sampled: job.ok as u64, elapsed: job.elapsed.as_secs_f64(), ..Default::default() },
        };
        Ok(PlanResponse {
            ok: job.ok,
            holes_remaining: find_holes(&job.script).len(),
            script: job.script.render(),
            stats,
        })
    }
}

/// Admission: at most `in_flight` running jobs and `queue` waiting ones.
struct Admission {
    permits: tokio::sync::Semaphore,
    pending: AtomicUsize,
    limit: usize,
}

struct Pending<'a>(&'a AtomicUsize);

impl Drop for Pending<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

pub struct AppState {
    engine: Arc<Engine>,
    admission: Admission,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, in_flight: usize, queue: usize) -> Self {
        let in_flight = in_flight.max(1);
        AppState {
            engine,
            admission: Admission {
                permits: tokio::sync::Semaphore::new(in_flight),
                pending: AtomicUsize::new(0),
                limit: in_flight + queue,
            },
        }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }
}

fn error_response(e: &ServiceError) -> Response {
    (e.status(), Json(json!({ "ok": false, "error": e.to_string() }))).into_response()
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(invalid)
}

async fn run_job<F>(state: Arc<AppState>, job: F) -> Response
where
    F: FnOnce(&Engine) -> Result<Value, ServiceError> + Send + 'static,
{
    let adm = &state.admission;
    if adm.pending.fetch_add(1, Ordering::SeqCst) >= adm.limit {
        adm.pending.fetch_sub(1, Ordering::SeqCst);
        return error_response(&ServiceError::Busy);
    }
    let _pending = Pending(&adm.pending);
    let Ok(_permit) = adm.permits.acquire().await else {
        return error_response(&ServiceError::Internal("admission closed".into()));
    };
    let engine = state.engine.clone();
    let handle = tokio::task::spawn_blocking(move || job(&engine));
    match handle.await {
        Ok(Ok(v)) => (StatusCode::OK, Json(v)).into_response(),
        Ok(Err(e)) => error_response(&e),
        Err(join) => {
            log::error!("job failed: {join}; restarting backend");
            if let Err(e) = state.engine.backend.restart() {
                log::error!("backend restart failed: {e}");
            }
            error_response(&ServiceError::Internal("job aborted".into()))
        }
    }
}

async fn prove_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: ProveRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return error_response(&e),
    };
    if let Err(e) = goal_of(&req.goal) {
        return error_response(&e);
    }
    run_job(state, move |engine| {
        let r = engine.handle_prove(&req)?;
        serde_json::to_value(r).map_err(|e| ServiceError::Internal(e.to_string()))
    })
    .await
}

async fn plan_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: PlanRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return error_response(&e),
    };
    if let Err(e) = goal_of(&req.goal).and_then(|_| req.plan_mode()) {
        return error_response(&e);
    }
    run_job(state, move |engine| {
        let r = engine.handle_plan(&req)?;
        serde_json::to_value(r).map_err(|e| ServiceError::Internal(e.to_string()))
    })
    .await
}

async fn health_handler(State(state): State<Arc<AppState>>) -> Response {
    let e = &state.engine;
    Json(json!({
        "ok": true,
        "backend": e.backend.name(),
        "proposers": e.proposer_names(),
        "pending": state.admission.pending.load(Ordering::SeqCst),
    }))
    .into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/prove", post(prove_handler))
        .route("/plan", post(plan_handler))
        .route("/health", get(health_handler))
        .with_state(state)
}

/// Bind a listener, refusing non-loopback addresses unless allowed.
pub async fn bind(addr: SocketAddr, allow_remote: bool) -> Result<tokio::net::TcpListener, ServiceError> {
    if !addr.ip().is_loopback() && !allow_remote {
        return Err(ServiceError::NonLoopback(addr));
    }
    tokio::net::TcpListener::bind(addr).await.map_err(|source| ServiceError::BindFailure { addr, source })
}

/// Serve until `shutdown` resolves.
pub async fn serve_on<F>(listener: tokio::net::TcpListener, state: Arc<AppState>, shutdown: F) -> Result<(), ServiceError>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proposer::mock::{OracleProposer, ScriptedProposer};
    use crate::verifier::{generate_space, MockBackend};

    fn engine() -> (Engine, String, Arc<MockBackend>) {
        let space = generate_space(3, 2, 1, 7);
        let goal = space.root_goal();
        let backend = Arc::new(MockBackend::new(space.clone()).unwrap());
        let e = Engine::new(backend.clone(), "oracle", Arc::new(OracleProposer::new(space, 1, 3)))
            .with_proposer("scripted", Arc::new(ScriptedProposer::new()));
        (e, goal, backend)
    }

    #[test]
    fn prove_filters_and_merges() {
        let (e, goal, backend) = engine();
        let r = e.handle_prove(&ProveRequest { goal: Some(goal.clone()), ..Default::default() }).unwrap();
        assert!(r.ok);
        assert!(!r.commands.is_empty() && r.commands.iter().all(|c| is_approved(c)));
        let r = e
            .handle_prove(&ProveRequest { goal: Some(goal.clone()), proposer: Some("scripted".into()), budget: Some(2.0), ..Default::default() })
            .unwrap();
        assert!(!r.ok && r.commands.is_empty());
        assert_eq!(backend.sessions(), 1);
        assert!(matches!(e.handle_prove(&ProveRequest::default()), Err(ServiceError::InvalidRequest(_))));
        let bad = ProveRequest { goal: Some(goal), proposer: Some("nope".into()), ..Default::default() };
        assert!(matches!(e.handle_prove(&bad), Err(ServiceError::InvalidRequest(_))));
    }

    #[test]
    fn request_overrides() {
        let base = SearchConfig::default();
        let m = ProveRequest { budget: Some(3.0), ..Default::default() }.merge(&base).unwrap();
        assert_eq!((m.budget, m.beam_width, m.max_depth), (3.0, base.beam_width, base.max_depth));
        let m = ProveRequest { beam: Some(9), depth: Some(2), ..Default::default() }.merge(&base).unwrap();
        assert_eq!((m.budget, m.beam_width, m.max_depth), (base.budget, 9, 2));
        assert!(ProveRequest { beam: Some(0), ..Default::default() }.merge(&base).is_err());

        let pb = PlannerConfig::default();
        let m = PlanRequest { c1: Some(5), ..Default::default() }.merge(&pb).unwrap();
        assert_eq!((m.c1, m.c2, m.mode), (5, pb.c2, PlanMode::Auto));
        let bad = PlanRequest { mode: Some("banana".into()), ..Default::default() };
        assert!(matches!(bad.merge(&pb), Err(ServiceError::InvalidRequest(_))));
    }

    #[test]
    fn plan_modes() {
        let (e, goal, _) = engine();
        let out = e
            .handle_plan(&PlanRequest { goal: Some(goal.clone()), mode: Some("outline".into()), ..Default::default() })
            .unwrap();
        assert!(out.ok);
        assert_eq!(out.holes_remaining, find_holes(&ProofScript::parse(&out.script).unwrap()).len());
        let auto = e
            .handle_plan(&PlanRequest { goal: Some(goal), mode: Some("auto".into()), budget: Some(30.0), ..Default::default() })
            .unwrap();
        assert!(auto.ok && auto.holes_remaining == 0 && auto.stats.solved);
    }

    #[test]
    fn approved_prefixes() {
        let s = ProofScript::parse("lemma \"G\"\n  apply simp\n  apply(auto)\n  by blast\n  done\n  sorry").unwrap();
        assert_eq!(approved_lines(&s), vec!["apply simp", "by blast", "done"]);
    }

    #[tokio::test]
    async fn refuses_remote_bind() {
        let addr: SocketAddr = "0.0.0.0:0".parse().unwrap();
        assert!(matches!(bind(addr, false).await, Err(ServiceError::NonLoopback(_))));
        let l = bind("127.0.0.1:0".parse().unwrap(), false).await.unwrap();
        let taken = l.local_addr().unwrap();
        assert!(matches!(bind(taken, false).await, Err(ServiceError::BindFailure { .. })));
    }
}
