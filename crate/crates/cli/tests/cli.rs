use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use piecegen::evalkit::{compare, evaluate, EvalReport, Scored};
use piecegen::synth::duplicate_query_corpus;
use piecegen::transducer::ast_to_code;
use piecegen::{grammars, load_grammar};
use serde_json::{json, Value};
use tempfile::TempDir;

fn piecegen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_piecegen"))
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .args(["--grammar", "toy"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Writes the toy duplicate-query corpus and returns (ids, gold tokens).
fn write_corpus(dir: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let g = load_grammar(grammars::TOY).unwrap();
    let mut text = String::new();
    let mut ids = Vec::new();
    let mut golds = Vec::new();
    for p in duplicate_query_corpus(&g) {
        let code = ast_to_code(&g, &p.ast).unwrap();
        text.push_str(&json!({"id": p.id, "nl": p.nl, "code": code}).to_string());
        text.push('\n');
        ids.push(p.id.clone());
        golds.push(code);
    }
    std::fs::write(dir.join("train.jsonl"), text).unwrap();
    (ids, golds)
}

fn lines(path: PathBuf) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn rebuilt_index_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    write_corpus(dir.path());
    ok(&piecegen(
        dir.path(),
        &["build-index", "--train", "train.jsonl", "-o", "a.json"],
    ));
    ok(&piecegen(
        dir.path(),
        &["build-index", "--train", "train.jsonl", "-o", "b.json"],
    ));
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
    let index: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(index["header"]["example_count"], 30);

    let manifest: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.json.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "build-index");
    assert_eq!(manifest["config"]["lambda"], 3.0);
    assert_eq!(manifest["inputs"][0]["role"], "train");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn bad_json_line_is_named() {
    let dir = TempDir::new().unwrap();
    let text = "{\"id\": \"a\", \"nl\": [\"x\", \"is\", \"5\"], \"code\": \"x = 5\"}\n{\"id\": \"b\", \"nl\": \n";
    std::fs::write(dir.path().join("train.jsonl"), text).unwrap();
    let out = piecegen(
        dir.path(),
        &["build-index", "--train", "train.jsonl", "-o", "i.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");
    assert!(!dir.path().join("i.json").exists());
}

#[test]
fn usage_errors_exit_with_1() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        piecegen(dir.path(), &["generate", "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(
        piecegen(dir.path(), &["generate", "--queries", "q.jsonl"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        piecegen(dir.path(), &["--beam", "0", "validate-corpus"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn lambda_zero_matches_no_retrieval() {
    let dir = TempDir::new().unwrap();
    write_corpus(dir.path());
    ok(&piecegen(
        dir.path(),
        &["build-index", "--train", "train.jsonl", "-o", "i.json"],
    ));
    let common = [
        "--beam",
        "3",
        "generate",
        "--index",
        "i.json",
        "--queries",
        "train.jsonl",
    ];
    let mut zero = vec!["--lambda", "0"];
    zero.extend(common);
    zero.extend(["-o", "zero.jsonl", "--jobs", "4"]);
    ok(&piecegen(dir.path(), &zero));
    let mut plain = common.to_vec();
    plain.extend(["--no-retrieval", "-o", "plain.jsonl"]);
    ok(&piecegen(dir.path(), &plain));
    let a = std::fs::read(dir.path().join("zero.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("plain.jsonl")).unwrap();
    assert_eq!(a, b);
    let preds = lines(dir.path().join("zero.jsonl"));
    assert_eq!(preds.len(), 30);
    assert!(preds.iter().all(|p| p["matched_piece_count"] == 0));
}

#[test]
fn duplicate_queries_reproduce_stored_code() {
    let dir = TempDir::new().unwrap();
    let (ids, golds) = write_corpus(dir.path());
    ok(&piecegen(
        dir.path(),
        &["build-index", "--train", "train.jsonl", "-o", "i.json"],
    ));
    let args = [
        "--scorer",
        "uniform",
        "--m",
        "1",
        "--lambda",
        "10",
        "--beam",
        "1",
        "generate",
        "--index",
        "i.json",
        "--queries",
        "train.jsonl",
        "-o",
        "p.jsonl",
        "--jobs",
        "3",
    ];
    ok(&piecegen(dir.path(), &args));
    let preds = lines(dir.path().join("p.jsonl"));
    assert_eq!(preds.len(), ids.len());
    for ((p, id), gold) in preds.iter().zip(&ids).zip(&golds) {
        assert_eq!(p["id"], id.as_str());
        assert_eq!(p["code_tokens"], json!(gold));
        assert!(p["matched_piece_count"].as_u64().unwrap() > 0);
    }
}

#[test]
fn empty_query_file_gives_empty_output() {
    let dir = TempDir::new().unwrap();
    write_corpus(dir.path());
    std::fs::write(dir.path().join("q.jsonl"), "").unwrap();
    let out = piecegen(
        dir.path(),
        &[
            "generate",
            "--no-retrieval",
            "--train",
            "train.jsonl",
            "--queries",
            "q.jsonl",
            "-o",
            "p.jsonl",
        ],
    );
    ok(&out);
    assert_eq!(std::fs::read(dir.path().join("p.jsonl")).unwrap(), b"");
}

#[test]
fn decode_failures_over_threshold_exit_with_3() {
    let dir = TempDir::new().unwrap();
    write_corpus(dir.path());
    let out = piecegen(
        dir.path(),
        &[
            "--max-steps",
            "1",
            "generate",
            "--no-retrieval",
            "--train",
            "train.jsonl",
            "--queries",
            "train.jsonl",
            "-o",
            "p.jsonl",
            "--max-failure-rate",
            "0.1",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let preds = lines(dir.path().join("p.jsonl"));
    assert_eq!(preds.len(), 30);
    let failed = preds.iter().filter(|p| p["error"].is_string()).count();
    assert!(failed > 3);
    assert!(preds.iter().any(|p| p["error"] == "timeout after 1 steps"));
}

#[test]
fn env_overrides_reach_the_manifest() {
    let dir = TempDir::new().unwrap();
    write_corpus(dir.path());
    std::fs::write(
        dir.path().join("run.toml"),
        "style = \"django\"\nlambda = 1.5\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_piecegen"))
        .current_dir(dir.path())
        .env("PIECEGEN_BEAM", "7")
        .args([
            "--grammar",
            "toy",
            "--config",
            "run.toml",
            "build-index",
            "--train",
            "train.jsonl",
            "-o",
            "i.json",
        ])
        .output()
        .unwrap();
    ok(&out);
    let m: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("i.json.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["config"]["style"], "django");
    assert_eq!(m["config"]["lambda"], 1.5);
    assert_eq!(m["config"]["beam"], 7);
    assert_eq!(m["config"]["n_max"], 4);
}

fn pred_line(id: &str, tokens: &[String]) -> String {
    json!({"id": id, "code_tokens": tokens}).to_string() + "\n"
}

#[test]
fn eval_matches_the_library() {
    let dir = TempDir::new().unwrap();
    let (ids, golds) = write_corpus(dir.path());
    // System: first 20 right, rest truncated. Baseline: every third right.
    let mut preds = Vec::new();
    let mut base = Vec::new();
    let (mut ptext, mut btext) = (String::new(), String::new());
    for (i, (id, gold)) in ids.iter().zip(&golds).enumerate() {
        let p = if i < 20 {
            gold.clone()
        } else {
            gold[..gold.len() - 1].to_vec()
        };
        let b = if i % 3 == 0 {
            gold.clone()
        } else {
            gold[1..].to_vec()
        };
        ptext.push_str(&pred_line(id, &p));
        btext.push_str(&pred_line(id, &b));
        preds.push(p);
        base.push(b);
    }
    std::fs::write(dir.path().join("p.jsonl"), ptext).unwrap();
    std::fs::write(dir.path().join("b.jsonl"), btext).unwrap();
    let out = piecegen(
        dir.path(),
        &[
            "--bootstrap-resamples",
            "500",
            "eval",
            "--preds",
            "p.jsonl",
            "--gold",
            "train.jsonl",
            "--baseline",
            "b.jsonl",
            "--format",
            "json",
            "-o",
            "r.json",
        ],
    );
    ok(&out);
    let cli: EvalReport =
        serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();

    let data = Scored {
        ids: &ids,
        preds: &preds,
        golds: &golds,
    };
    let mut lib = evaluate(&data).unwrap();
    compare(&mut lib, &data, &base, 500, piecegen::evalkit::DEFAULT_SEED).unwrap();
    assert_eq!(cli, lib);
    assert!(cli.significance.is_some());

    let gold_text: String = ids
        .iter()
        .zip(&golds)
        .map(|(id, g)| pred_line(id, g))
        .collect();
    std::fs::write(dir.path().join("g.jsonl"), gold_text).unwrap();
    let out = piecegen(
        dir.path(),
        &[
            "eval",
            "--preds",
            "g.jsonl",
            "--gold",
            "train.jsonl",
            "--format",
            "json",
        ],
    );
    ok(&out);
    let perfect: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(perfect["exact_match"], 1.0);
    assert_eq!(perfect["bleu"], 100.0);
}

#[test]
fn validate_corpus_reports_split_stats() {
    let dir = TempDir::new().unwrap();
    write_corpus(dir.path());
    let out = piecegen(
        dir.path(),
        &[
            "validate-corpus",
            "--train",
            "train.jsonl",
            "--format",
            "json",
        ],
    );
    ok(&out);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["train"]["examples"], 30);
    assert!(v["train"]["avg_nl_tokens"].as_f64().unwrap() > 1.0);
}

#[test]
fn inspect_pieces_prints_scored_chains() {
    let dir = TempDir::new().unwrap();
    write_corpus(dir.path());
    ok(&piecegen(
        dir.path(),
        &["build-index", "--train", "train.jsonl", "-o", "i.json"],
    ));
    let out = piecegen(
        dir.path(),
        &[
            "inspect-pieces",
            "--index",
            "i.json",
            "--query",
            "set total to 5",
        ],
    );
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 3, "{line}");
        let score: f64 = cols[0].parse().unwrap();
        assert!(score > 0.0 && score <= 1.0);
        let k: usize = cols[1].parse().unwrap();
        assert_eq!(cols[2].split(" ; ").count(), k);
    }
}
