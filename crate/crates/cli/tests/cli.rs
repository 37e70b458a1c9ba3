use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn relprof(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relprof"))
        .args(args)
        .output()
        .expect("spawn relprof")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// 130 neuroticism profiles shaped like the PAN English release: 91 with a
/// positive score, 39 with a non-positive one.
fn pan_fixture(dir: &Path) -> PathBuf {
    let path = dir.join("pan.jsonl");
    let mut lines = String::new();
    for i in 0..130 {
        let score = if i < 91 { 0.05 + 0.004 * i as f64 } else { -0.01 * (i - 91) as f64 };
        let posts: Vec<String> = (0..4).map(|j| format!("user {i} post {j} about the weekend")).collect();
        let row = serde_json::json!({
            "profile_id": format!("pan-{i:03}"),
            "posts": posts,
            "labels": {"neuroticism": {"score": score}},
        });
        lines.push_str(&row.to_string());
        lines.push('\n');
    }
    fs::write(&path, lines).unwrap();
    path
}

fn synth(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let path = dir.join(name);
    let out = relprof(&[
        "synth",
        "--out",
        path.to_str().unwrap(),
        "--profiles-per-class",
        "4",
        "--posts",
        "12",
        "--seed",
        seed,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

#[test]
fn stats_reports_pan_class_balance() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = pan_fixture(dir.path());
    let out = relprof(&["stats", "--corpus", corpus.to_str().unwrap(), "--trait", "neuroticism"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("130 profiles (91 high / 39 low)"), "{text}");

    let out = relprof(&["stats", "--corpus", corpus.to_str().unwrap(), "--trait", "neuroticism", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.to_string().contains("91"), "{v}");
}

#[test]
fn usage_errors_exit_one() {
    let out = relprof(&["stats", "--no-such-flag"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));

    let out = relprof(&["evaluate", "--corpus", "x.jsonl", "--trait", "grumpiness"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn help_and_version_exit_zero() {
    let out = relprof(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["train", "select", "predict", "evaluate", "baseline", "enrich", "synth", "stats"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
    assert_eq!(code(&relprof(&["--version"])), 0);
}

#[test]
fn missing_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "c.jsonl", "1");
    let out = relprof(&[
        "predict",
        "--corpus",
        corpus.to_str().unwrap(),
        "--trait",
        "extraversion",
        "--strategy",
        "RL",
        "--endpoint",
        "mock:",
    ]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("--checkpoint"), "{}", stderr(&out));
}

#[test]
fn malformed_corpus_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"profile_id\": \"a\", \"posts\": [\"x\"]}\nnot json\n").unwrap();
    let out = relprof(&["stats", "--corpus", bad.to_str().unwrap(), "--trait", "openness"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));

    let missing = dir.path().join("absent.jsonl");
    let out = relprof(&["stats", "--corpus", missing.to_str().unwrap(), "--trait", "openness"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unreachable_endpoint_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "c.jsonl", "2");
    // Bind and drop to get a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let out = relprof(&[
        "evaluate",
        "--corpus",
        corpus.to_str().unwrap(),
        "--trait",
        "extraversion",
        "--strategy",
        "ALL",
        "--runs",
        "1",
        "--endpoint",
        &url,
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn evaluate_is_reproducible_and_csv_appends() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "c.jsonl", "3");
    let csv = dir.path().join("runs.csv");
    let run = |name: &str| {
        let report = dir.path().join(name);
        let out = relprof(&[
            "evaluate",
            "--corpus",
            corpus.to_str().unwrap(),
            "--trait",
            "extraversion",
            "--strategy",
            "RND",
            "--topn",
            "3",
            "--runs",
            "4",
            "--seed",
            "9",
            "--endpoint",
            "mock:",
            "--output",
            report.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        fs::read(report).unwrap()
    };
    let a = run("a.json");
    let b = run("b.json");
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["runs"], 4);
    let rows = fs::read_to_string(csv).unwrap();
    assert_eq!(rows.lines().count(), 3, "{rows}");
}

#[test]
fn train_then_predict_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let train = synth(dir.path(), "train.jsonl", "4");
    let test = synth(dir.path(), "test.jsonl", "5");
    let out_dir = dir.path().join("model");
    let out = relprof(&[
        "train",
        "--train",
        train.to_str().unwrap(),
        "--trait",
        "extraversion",
        "--out",
        out_dir.to_str().unwrap(),
        "--epochs",
        "3",
        "--topn",
        "3,5",
        "--lr",
        "0.01",
        "--pretrain-lr",
        "0.05",
        "--dims",
        "4096",
        "--endpoint",
        "mock:",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["npmi.json", "pt.json", "rl_top3.json", "rl_top5.json", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["epochs"].as_array().unwrap().len(), 3);

    let preds = dir.path().join("preds.jsonl");
    let out = relprof(&[
        "predict",
        "--corpus",
        test.to_str().unwrap(),
        "--trait",
        "extraversion",
        "--strategy",
        "RL",
        "--topn",
        "3",
        "--checkpoint",
        out_dir.join("rl_top3.json").to_str().unwrap(),
        "--endpoint",
        "mock:",
        "--output",
        preds.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(preds).unwrap();
    assert_eq!(text.lines().count(), 8);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["selected"].as_array().unwrap().len(), 3);
        assert!(v["predicted"] == "high" || v["predicted"] == "low");
    }

    let sel = dir.path().join("sel.jsonl");
    let out = relprof(&[
        "select",
        "--corpus",
        test.to_str().unwrap(),
        "--trait",
        "extraversion",
        "--strategy",
        "PMI",
        "--topn",
        "2",
        "--npmi",
        out_dir.join("npmi.json").to_str().unwrap(),
        "--output",
        sel.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(sel).unwrap().lines().count(), 8);
}

#[test]
fn baselines_and_enrichment_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let train = synth(dir.path(), "train.jsonl", "6");
    let test = synth(dir.path(), "test.jsonl", "7");
    for kind in ["ridge", "post"] {
        let report = dir.path().join(format!("{kind}.json"));
        let preds = dir.path().join(format!("{kind}.jsonl"));
        let out = relprof(&[
            "baseline",
            "--kind",
            kind,
            "--train",
            train.to_str().unwrap(),
            "--test",
            test.to_str().unwrap(),
            "--trait",
            "extraversion",
            "--runs",
            "2",
            "--output",
            report.to_str().unwrap(),
            "--predictions",
            preds.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{kind}: {}", stderr(&out));
        assert_eq!(fs::read_to_string(preds).unwrap().lines().count(), 8);
    }

    let pool_out = dir.path().join("pool.jsonl");
    let enriched = dir.path().join("enriched.jsonl");
    let out = relprof(&[
        "enrich",
        "--corpus",
        test.to_str().unwrap(),
        "--trait",
        "extraversion",
        "--cap",
        "2",
        "--per-profile",
        "3",
        "--rounds",
        "1",
        "--endpoint",
        "mock:",
        "--out",
        enriched.to_str().unwrap(),
        "--pool-out",
        pool_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(enriched).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(text.matches("\"artificial\":true").count(), 12);
}
