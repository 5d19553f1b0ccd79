use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use proofbeam::datalog::datasets::{
    build_premise_dataset, build_repair_dataset, build_reranker_dataset, build_trajectories, write_jsonl, LabelMode,
    DEFAULT_BETA,
};
use proofbeam::datalog::{JsonlSink, LogSink, NullSink};
use proofbeam::hints::{load_lexicon, mine_lexicon};
use proofbeam::planner::{PlanMode, PlannerConfig};
use proofbeam::premises::{load_corpus, PremiseIndex};
use proofbeam::proposer::{HttpProposer, OracleProposer, ProposerBackend, ScriptedProposer};
use proofbeam::rerank::{load_model, save_model, train_awr, train_fitted_q, train_logistic, TrainConfig};
use proofbeam::service::{bind, AppState, Engine, DEFAULT_ADDR, DEFAULT_QUEUE};
use proofbeam::stepwise::SearchConfig;
use proofbeam::verifier::isabelle::{IsabelleBackend, IsabelleConfig};
use proofbeam::verifier::{generate_space, MockBackend, SyntheticSpace, VerifierBackend};
use serde::Deserialize;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "proofbeam", version, about = "Verifier-guided proof search and planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stepwise beam search for a goal.
    Prove(JobArgs),
    /// Outline, fill and repair until the goal is proved or the budget ends.
    Plan(JobArgs),
    /// Print the best-scored outline for a goal.
    Outline(JobArgs),
    /// Run the local HTTP service.
    Serve(ServeArgs),
    /// Write a synthetic proof space.
    GenSpace(GenSpaceArgs),
    /// Mine a hint lexicon from a JSONL corpus of `{goal, lemmas}`.
    MineLexicon(MineArgs),
    /// Turn attempt logs into a training dataset.
    BuildDataset(DatasetArgs),
    /// Fit a reranker from attempt logs.
    TrainReranker(TrainArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Mock,
    Isabelle,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProposerKind {
    Scripted,
    Oracle,
    Http,
}

#[derive(Args, Clone)]
struct EngineArgs {
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendKind,
    /// Synthetic space for the mock backend; a small generated space if omitted.
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "oracle")]
    proposer: ProposerKind,
    #[arg(long, default_value = "http://127.0.0.1:8000/complete")]
    proposer_url: String,
    /// Scripted proposer fixture.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Wrong candidates the oracle proposer mixes in per call.
    #[arg(long, default_value_t = 1)]
    oracle_noise: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    log_dir: Option<PathBuf>,
    /// Reranker model file.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Premise corpus (JSONL).
    #[arg(long)]
    premises: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:4711")]
    isabelle_address: String,
    #[arg(long, default_value = "")]
    isabelle_password: String,
    #[arg(long, default_value = "HOL")]
    isabelle_session: String,
}

#[derive(Args)]
struct JobArgs {
    #[arg(long)]
    goal: String,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    depth: Option<u32>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = DEFAULT_ADDR)]
    addr: SocketAddr,
    #[arg(long)]
    allow_remote: bool,
    #[arg(long, default_value_t = DEFAULT_QUEUE)]
    queue: usize,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    depth: Option<u32>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct GenSpaceArgs {
    #[arg(long)]
    depth: usize,
    #[arg(long)]
    branching: usize,
    #[arg(long, default_value_t = 1)]
    solutions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetKind {
    Reranker,
    Trajectories,
    Premises,
    Repair,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Labels {
    Binary,
    Q,
    Awr,
}

impl From<Labels> for LabelMode {
    fn from(l: Labels) -> Self {
        match l {
            Labels::Binary => LabelMode::Binary,
            Labels::Q => LabelMode::Q,
            Labels::Awr => LabelMode::Awr,
        }
    }
}

#[derive(Args)]
struct DatasetArgs {
    /// Log directory or attempts file.
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_enum, default_value = "reranker")]
    kind: DatasetKind,
    #[arg(long, value_enum, default_value = "binary")]
    labels: Labels,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    labels: Labels,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    /// Discount for fitted Q iteration.
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Print to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Prove(a) => prove(a),
        Command::Plan(a) => plan(a, PlanMode::Auto),
        Command::Outline(a) => plan(a, PlanMode::Outline),
        Command::Serve(a) => serve(a),
        Command::GenSpace(a) => gen_space(a),
        Command::MineLexicon(a) => mine(a),
        Command::BuildDataset(a) => build_dataset(a),
        Command::TrainReranker(a) => train(a),
    }
}

fn search_config(budget: Option<f64>, beam: Option<usize>, depth: Option<u32>) -> SearchConfig {
    let mut cfg = SearchConfig::default();
    if let Some(b) = budget {
        cfg.budget = b;
    }
    if let Some(w) = beam {
        cfg.beam_width = w;
    }
    if let Some(d) = depth {
        cfg.max_depth = d;
    }
    cfg
}

fn build_engine(a: &EngineArgs, search: SearchConfig, planner: PlannerConfig) -> Result<Engine> {
    let space = match (&a.space, a.backend) {
        (Some(p), _) => Some(SyntheticSpace::load(p).with_context(|| format!("loading space {}", p.display()))?),
        (None, BackendKind::Mock) => Some(generate_space(4, 2, 1, a.seed)),
        (None, BackendKind::Isabelle) => None,
    };
    let backend: Arc<dyn VerifierBackend> = match a.backend {
        BackendKind::Mock => Arc::new(MockBackend::new(space.clone().expect("mock space"))?),
        BackendKind::Isabelle => Arc::new(IsabelleBackend::new(IsabelleConfig {
            address: a.isabelle_address.clone(),
            password: a.isabelle_password.clone(),
            session: a.isabelle_session.clone(),
            scratch_dir: std::env::temp_dir().join("proofbeam-scratch"),
        })),
    };
    let scripted = match &a.fixture {
        Some(p) => ScriptedProposer::load(p)?,
        None => ScriptedProposer::new(),
    };
    let http = HttpProposer::new(&a.proposer_url, Duration::from_secs(120));
    let (name, main): (&str, Arc<dyn ProposerBackend>) = match a.proposer {
        ProposerKind::Scripted => ("scripted", Arc::new(scripted)),
        ProposerKind::Http => ("http", Arc::new(http)),
        ProposerKind::Oracle => match &space {
            Some(s) => ("oracle", Arc::new(OracleProposer::new(s.clone(), a.oracle_noise, a.seed))),
            None => bail!("the oracle proposer needs a synthetic space (--space)"),
        },
    };
    let mut engine = Engine::new(backend, name, main);
    if a.proposer != ProposerKind::Http {
        engine = engine.with_proposer("http", Arc::new(HttpProposer::new(&a.proposer_url, Duration::from_secs(120))));
    }
    if let (Some(s), false) = (&space, a.proposer == ProposerKind::Oracle) {
        engine = engine.with_proposer("oracle", Arc::new(OracleProposer::new(s.clone(), a.oracle_noise, a.seed)));
    }
    let reranker = a.model.as_deref().map(load_model).transpose()?;
    let lexicon = a.lexicon.as_deref().map(load_lexicon).transpose()?;
    let premises = match &a.premises {
        Some(p) => Some(PremiseIndex::from_entries(load_corpus(p)?)?),
        None => None,
    };
    let sink: Arc<dyn LogSink> = match &a.log_dir {
        Some(d) => Arc::new(JsonlSink::open(d)?),
        None => Arc::new(NullSink),
    };
    Ok(engine
        .with_reranker(reranker)
        .with_lexicon(lexicon)
        .with_premises(premises)
        .with_search(search)
        .with_planner(planner)
        .with_sink(sink))
}

fn close(engine: &Engine) {
    if let Err(e) = engine.sink().flush() {
        log::warn!("log flush failed: {e}");
    }
}

fn prove(a: JobArgs) -> Result<bool> {
    let cfg = search_config(a.budget, a.beam, a.depth);
    cfg.validate()?;
    let engine = build_engine(&a.engine, cfg.clone(), PlannerConfig::default())?;
    let r = engine.run_prove(&a.goal, &cfg, None)?;
    close(&engine);
    emit(&r.script.render())?;
    eprintln!(
        "solved={} depth={} expansions={} elapsed={:.3}s timed_out={}",
        r.solved,
        r.depth_reached,
        r.expansions,
        r.elapsed.as_secs_f64(),
        r.timed_out
    );
    Ok(r.solved)
}

fn plan(a: JobArgs, mode: PlanMode) -> Result<bool> {
    let search = search_config(None, a.beam, a.depth);
    let mut planner = PlannerConfig { mode, ..Default::default() };
    if let Some(b) = a.budget {
        planner.budget = b;
    }
    planner.validate()?;
    let engine = build_engine(&a.engine, search, planner.clone())?;
    let job = engine.run_plan(&a.goal, &planner, None)?;
    close(&engine);
    emit(&job.script.render())?;
    match &job.result {
        Some(r) => eprintln!(
            "solved={} holes={} outlines={} fills={} repairs={} regenerations={} elapsed={:.3}s",
            r.solved,
            r.holes_remaining(),
            r.outlines_sampled,
            r.fills_attempted,
            r.repairs_attempted,
            r.regenerations,
            r.elapsed.as_secs_f64()
        ),
        None => eprintln!("outline={} elapsed={:.3}s", job.ok, job.elapsed.as_secs_f64()),
    }
    Ok(job.ok)
}

fn serve(a: ServeArgs) -> Result<bool> {
    let cfg = search_config(a.budget, a.beam, a.depth);
    cfg.validate()?;
    let engine = Arc::new(build_engine(&a.engine, cfg, PlannerConfig::default())?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = bind(a.addr, a.allow_remote).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        let state = Arc::new(AppState::new(engine.clone(), 1, a.queue));
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        proofbeam::service::serve_on(listener, state, shutdown).await?;
        anyhow::Ok(())
    })?;
    close(&engine);
    Ok(true)
}

fn gen_space(a: GenSpaceArgs) -> Result<bool> {
    if a.depth == 0 || a.branching == 0 {
        bail!("depth and branching must be positive");
    }
    let json = generate_space(a.depth, a.branching, a.solutions, a.seed).to_json();
    match a.output {
        Some(p) => std::fs::write(&p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => emit(&json)?,
    }
    Ok(true)
}

#[derive(Deserialize)]
struct CorpusRow {
    goal: String,
    #[serde(default)]
    lemmas: Vec<String>,
}

fn read_corpus(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: CorpusRow = serde_json::from_str(&line).with_context(|| format!("line {}", i + 1))?;
        rows.push((row.goal, row.lemmas));
    }
    Ok(rows)
}

fn mine(a: MineArgs) -> Result<bool> {
    let lex = mine_lexicon(&read_corpus(&a.corpus)?);
    std::fs::write(&a.output, lex.to_json() + "\n")?;
    eprintln!("tokens={}", lex.len());
    Ok(true)
}

fn report_skipped(skipped: &[usize]) {
    if !skipped.is_empty() {
        eprintln!("skipped {} malformed lines", skipped.len());
    }
}

fn build_dataset(a: DatasetArgs) -> Result<bool> {
    let (n, skipped) = match a.kind {
        DatasetKind::Reranker => {
            let d = build_reranker_dataset(&a.log, a.labels.into())?;
            write_jsonl(&d.rows, &a.output)?;
            (d.rows.len(), d.skipped)
        }
        DatasetKind::Trajectories => {
            let d = build_trajectories(&a.log)?;
            write_jsonl(&d.rows, &a.output)?;
            (d.rows.len(), d.skipped)
        }
        DatasetKind::Premises => {
            let d = build_premise_dataset(&a.log)?;
            write_jsonl(&d.rows, &a.output)?;
            (d.rows.len(), d.skipped)
        }
        DatasetKind::Repair => {
            let d = build_repair_dataset(&a.log)?;
            write_jsonl(&d.rows, &a.output)?;
            (d.rows.len(), d.skipped)
        }
    };
    report_skipped(&skipped);
    eprintln!("rows={n}");
    Ok(n > 0)
}

fn train(a: TrainArgs) -> Result<bool> {
    let cfg = TrainConfig { epochs: a.epochs, learning_rate: a.learning_rate, l2: a.l2 };
    let model = match a.labels {
        Labels::Binary => {
            let d = build_reranker_dataset(&a.log, LabelMode::Binary)?;
            report_skipped(&d.skipped);
            if d.rows.is_empty() {
                bail!("no search attempts with features in {}", a.log.display());
            }
            let data: Vec<(Vec<f64>, bool)> = d.rows.into_iter().map(|e| (e.x, e.y > 0.5)).collect();
            let r = train_logistic(&data, &cfg);
            eprintln!("examples={} loss={:.6}", data.len(), r.final_loss);
            r.model
        }
        Labels::Awr | Labels::Q => {
            let d = build_trajectories(&a.log)?;
            report_skipped(&d.skipped);
            let ts: Vec<_> = d.rows.into_iter().flat_map(|e| e.transitions).collect();
            if ts.is_empty() {
                bail!("no transitions in {}", a.log.display());
            }
            if a.labels == Labels::Awr {
                let r = train_awr(&ts, DEFAULT_BETA, &cfg);
                eprintln!("transitions={} loss={:.6}", ts.len(), r.final_loss);
                r.model
            } else {
                if !(0.0..1.0).contains(&a.gamma) {
                    bail!("gamma must lie in [0, 1)");
                }
                eprintln!("transitions={}", ts.len());
                train_fitted_q(&ts, a.gamma, 20, 1e-3)
            }
        }
    };
    save_model(&model, &a.output)?;
    Ok(true)
}
