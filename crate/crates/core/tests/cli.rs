use std::path::Path;
use std::process::{Command, Output};

fn proofbeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proofbeam")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen_space(dir: &Path, name: &str, seed: &str) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap();
    let o = proofbeam(&["gen-space", "--depth", "3", "--branching", "2", "--solutions", "1", "--seed", seed, "-o", p]);
    assert!(o.status.success());
    p.to_string()
}

fn root_goal(space: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(space).unwrap()).unwrap();
    let root = v["root"].as_str().unwrap();
    v["nodes"][root]["goal"].as_str().unwrap().to_string()
}

#[test]
fn gen_space_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_space(dir.path(), "a.json", "7");
    let b = gen_space(dir.path(), "b.json", "7");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = gen_space(dir.path(), "c.json", "8");
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn prove_prints_script_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let space = gen_space(dir.path(), "s.json", "7");
    let goal = root_goal(&space);
    let o = proofbeam(&["prove", "--goal", &goal, "--backend", "mock", "--space", &space]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with(&format!("lemma \"{goal}\"")));
    assert!(out.lines().any(|l| l.trim_start().starts_with("by ")));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solved=true"));
}

#[test]
fn unsolved_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let space = gen_space(dir.path(), "s.json", "7");
    let o = proofbeam(&["prove", "--goal", "no such goal", "--space", &space, "--proposer", "scripted", "--budget", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(proofbeam(&["prove", "--bogus"]).status.code(), Some(2));
    assert_eq!(proofbeam(&["prove"]).status.code(), Some(2));
    assert_eq!(proofbeam(&["prove", "--goal", "G", "--backend", "coq"]).status.code(), Some(2));
    assert_eq!(proofbeam(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(proofbeam(&["--help"]).status.code(), Some(0));
}

#[test]
fn plan_and_outline() {
    let dir = tempfile::tempdir().unwrap();
    let space = gen_space(dir.path(), "s.json", "3");
    let goal = root_goal(&space);
    let o = proofbeam(&["plan", "--goal", &goal, "--space", &space, "--budget", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).contains("sorry"));
    let o = proofbeam(&["outline", "--goal", &goal, "--space", &space]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("sorry"));
}

#[test]
fn logs_to_datasets_to_model() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs");
    let logs_s = logs.to_str().unwrap();
    for seed in ["1", "2", "3", "4"] {
        let space = gen_space(dir.path(), &format!("s{seed}.json"), seed);
        let goal = root_goal(&space);
        let o = proofbeam(&["prove", "--goal", &goal, "--space", &space, "--log-dir", logs_s, "--oracle-noise", "3"]);
        assert!(o.status.success());
    }
    assert!(logs.join("runs.jsonl").exists() && logs.join("attempts.jsonl").exists());
    let runs = std::fs::read_to_string(logs.join("runs.jsonl")).unwrap();
    assert_eq!(runs.lines().count(), 4);

    for kind in ["reranker", "trajectories", "premises", "repair"] {
        let out = dir.path().join(format!("{kind}.jsonl"));
        let o = proofbeam(&["build-dataset", "--log", logs_s, "--kind", kind, "-o", out.to_str().unwrap()]);
        assert!(out.exists(), "{kind}");
        if kind == "reranker" || kind == "trajectories" {
            assert!(o.status.success(), "{kind}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let model = dir.path().join("model.txt");
    let o = proofbeam(&["train-reranker", "--log", logs_s, "-o", model.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&model).unwrap().starts_with("RERANK v1"));

    let space = gen_space(dir.path(), "s9.json", "9");
    let goal = root_goal(&space);
    let o = proofbeam(&["prove", "--goal", &goal, "--space", &space, "--model", model.to_str().unwrap()]);
    assert!(o.status.success());

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = proofbeam(&["train-reranker", "--log", empty.to_str().unwrap(), "-o", dir.path().join("m2").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn mine_lexicon_from_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    std::fs::write(
        &corpus,
        "{\"goal\": \"rev (rev xs) = xs\", \"lemmas\": [\"rev_rev_ident\"]}\n{\"goal\": \"length (rev xs) = length xs\", \"lemmas\": [\"length_rev\"]}\n",
    )
    .unwrap();
    let out = dir.path().join("lex.json");
    let o = proofbeam(&["mine-lexicon", "--corpus", corpus.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let lex: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(lex["rev"], serde_json::json!([["length_rev", 1.0], ["rev_rev_ident", 1.0]]));
    assert_eq!(lex["xs"].as_array().unwrap().len(), 2);

    let space = gen_space(dir.path(), "s.json", "7");
    let goal = root_goal(&space);
    let o = proofbeam(&["plan", "--goal", &goal, "--space", &space, "--lexicon", out.to_str().unwrap()]);
    assert!(o.status.success());
}
