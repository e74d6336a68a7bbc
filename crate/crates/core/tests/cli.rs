use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const PREFRANK: &str = env!("CARGO_BIN_EXE_prefrank");
const SYNTHGEN: &str = env!("CARGO_BIN_EXE_prefrank-synthgen");

fn run(bin: &str, args: &[&str]) -> Output {
    Command::new(bin).args(args).output().expect("binary runs")
}

fn ok(bin: &str, args: &[&str]) -> String {
    let out = run(bin, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus(dir: &Path, name: &str, pairs: &str, prefix: &str) -> PathBuf {
    let out = dir.join(name);
    ok(SYNTHGEN, &["corpus", "--pairs", pairs, "--id-prefix", prefix, "--out", s(&out)]);
    out
}

fn same_files(a: &Path, b: &Path) {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        let (x, y) = (std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap());
        assert!(x == y, "{n:?} differs between runs");
    }
}

#[test]
fn selftest_passes() {
    let out = run(PREFRANK, &["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed"));
}

#[test]
fn usage_errors_exit_2() {
    let out = run(PREFRANK, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(PREFRANK, &["train", "--out", "/nonexistent-dir-x"]).status.code(), Some(2));
    assert_eq!(run(PREFRANK, &["train", "--bogus-flag"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_1_and_name_the_operation() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.jsonl");
    let out = run(
        PREFRANK,
        &["stats", "--samples", s(&missing), "--embeddings", s(&missing), "--out", s(dir.path())],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("datapipe.ingest"));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"train": {"learning_rat": 0.1}}"#).unwrap();
    let out = run(PREFRANK, &["train", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
}

#[test]
fn train_then_eval_on_separable_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = corpus(d, "data", "5000", "");
    let held = corpus(d, "held", "1000", "held-");
    let filtered = d.join("filtered");
    ok(
        PREFRANK,
        &[
            "filter",
            "--samples", s(&data.join("samples.jsonl")),
            "--annotations", s(&data.join("annotations.jsonl")),
            "--embeddings", s(&data.join("embeddings.prnk")),
            "--out", s(&filtered),
        ],
    );
    let trained = d.join("train");
    ok(
        PREFRANK,
        &[
            "train",
            "--samples", s(&data.join("samples.jsonl")),
            "--annotations", s(&filtered.join("annotations.jsonl")),
            "--embeddings", s(&data.join("embeddings.prnk")),
            "--lr", "0.01",
            "--out", s(&trained),
        ],
    );
    for f in ["checkpoint.prnh", "checkpoint.json", "loss_history.csv", "resolved_config.json", "versions.json"] {
        assert!(trained.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(trained.join("train_report.json")).unwrap()).unwrap();
    assert!(report["train_accuracy"].as_f64().unwrap() >= 0.99, "{report}");

    let cases = [
        ("eval-train", filtered.join("annotations.jsonl"), &data, 0.99),
        ("eval-held", held.join("annotations.jsonl"), &held, 0.95),
    ];
    for (name, annotations, corpus, floor) in cases {
        let out = d.join(name);
        ok(
            PREFRANK,
            &[
                "eval",
                "--checkpoint", s(&trained.join("checkpoint.prnh")),
                "--samples", s(&corpus.join("samples.jsonl")),
                "--annotations", s(&annotations),
                "--embeddings", s(&corpus.join("embeddings.prnk")),
                "--out", s(&out),
            ],
        );
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
        assert!(report["accuracy"].as_f64().unwrap() >= floor, "{name}: {report}");
    }

    let again = d.join("train-again");
    ok(
        PREFRANK,
        &["--threads", "2", "train", "--config", s(&trained.join("resolved_config.json")), "--out", s(&again)],
    );
    same_files(&trained, &again);
}

#[test]
fn data_subcommands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = corpus(d, "data", "600", "");
    let samples = data.join("samples.jsonl");
    let emb = data.join("embeddings.prnk");

    let line = ok(PREFRANK, &["ingest-check", "--samples", s(&samples), "--embeddings", s(&emb)]);
    let report: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(report["dim"], 16);
    assert_eq!(report["samples"], report["embedding_rows"]);

    let sel = d.join("select");
    ok(
        PREFRANK,
        &["select", "--samples", s(&samples), "--embeddings", s(&emb), "--top-fraction", "0.5", "--out", s(&sel)],
    );
    let pairs = d.join("pairs");
    ok(
        PREFRANK,
        &[
            "pairs",
            "--samples", s(&sel.join("samples.jsonl")),
            "--embeddings", s(&sel.join("embeddings.prnk")),
            "--out", s(&pairs),
        ],
    );
    let stats = d.join("stats");
    ok(
        PREFRANK,
        &[
            "stats",
            "--samples", s(&samples),
            "--annotations", s(&data.join("annotations.jsonl")),
            "--embeddings", s(&emb),
            "--out", s(&stats),
        ],
    );
    for dir in [&sel, &pairs, &stats] {
        for f in ["stats.json", "resolved_config.json", "versions.json"] {
            assert!(dir.join(f).exists(), "{f} missing in {dir:?}");
        }
    }
    let text = std::fs::read_to_string(stats.join("stats.json")).unwrap();
    assert!(text.contains("\"pair_count\": 600"));
}

#[test]
fn cohp_with_subprocess_generator_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = serde_json::json!({
        "dim": 8,
        "generators": [
            {"kind": "synthetic", "name": "low", "quality": 2.0, "noise": 0.01},
            {"kind": "subprocess", "name": "high", "command": [
                SYNTHGEN, "serve", "--name", "high", "--quality", "5", "--noise", "0.01",
                "--dim", "8", "--embeddings", "{embeddings}"
            ]},
            {"kind": "synthetic", "name": "mid", "quality": 3.0, "noise": 0.01}
        ]
    });
    let spec_path = d.join("generators.json");
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    let first = d.join("first");
    let stdout = ok(
        PREFRANK,
        &["cohp", "--generators", s(&spec_path), "--seed", "11", "--ablation-rounds", "1,2,3", "--out", s(&first)],
    );
    assert!(stdout.contains("model high"), "{stdout}");
    let csv = std::fs::read_to_string(first.join("ablation.csv")).unwrap();
    assert!(csv.starts_with("stage,round_1,round_2,round_3\nmodel_wise,"));
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(first.join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace[0]["model_wise"]["chosen_name"], "high");

    let second = d.join("second");
    ok(PREFRANK, &["cohp", "--config", s(&first.join("resolved_config.json")), "--out", s(&second)]);
    same_files(&first, &second);
}
