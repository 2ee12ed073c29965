use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use tempfile::TempDir;

fn embgeo(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_embgeo")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn run_cmd(cmd: &str, config: &Path) -> i32 {
    let (code, _, err) = embgeo(&[cmd, "--config", config.to_str().unwrap()]);
    if code != 0 {
        eprintln!("{cmd}: {err}");
    }
    code
}

const TEXT: &str = "the quick fox jumps over the lazy dog\n\
the dog sleeps\n\
a fox and a dog meet by the river\n\
the river runs fast\n\
quick quick slow\n\
the lazy cat watches the fox\n";

fn small_config(dir: &Path, extra: Value) -> PathBuf {
    std::fs::write(dir.join("corpus.txt"), TEXT).unwrap();
    let mut cfg = json!({
        "version": 1,
        "corpus": { "path": "corpus.txt", "validation_fraction": 0.2 },
        "train": { "embedding_dim": 6, "context_width": 2, "epochs": 3, "batch_size": 4,
                   "learning_rate": 0.2, "gammas": [0.0, 1.0] },
        "verify": { "regularizer_matrices": 5, "gram_matrices": 5, "instances_2d": 5,
                    "instances_highdim": 4, "perturbation_cases": 3, "extreme_steps": 300 },
        "output_dir": "out"
    });
    merge(&mut cfg, extra);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn merge(a: &mut Value, b: Value) {
    match (a, b) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in b {
                merge(a.entry(k).or_insert(Value::Null), v);
            }
        }
        (a, b) => *a = b,
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "csv")))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn full_pipeline_writes_expected_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), json!({}));
    for cmd in ["ingest", "train", "diagnose"] {
        assert_eq!(run_cmd(cmd, &cfg), 0, "{cmd}");
    }
    let out = tmp.path().join("out");
    for f in [
        "vocab.json",
        "freq.json",
        "metrics.json",
        "checkpoint_gamma_0.json",
        "checkpoint_gamma_1.json",
        "geometry_gamma_0.json",
        "projection_gamma_1.csv",
        "spectrum_gamma_1.csv",
        "ingest_config.json",
        "train_config.json",
        "diagnose_config.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let proj = std::fs::read_to_string(out.join("projection_gamma_0.csv")).unwrap();
    assert_eq!(proj.lines().next().unwrap(), "token,x,y,frequency_rank");
    let spec = std::fs::read_to_string(out.join("spectrum_gamma_0.csv")).unwrap();
    assert_eq!(spec.lines().next().unwrap(), "index,normalized_sigma");
    let freq: Value = serde_json::from_str(&std::fs::read_to_string(out.join("freq.json")).unwrap()).unwrap();
    assert_eq!(freq["ranked"][0]["token"], "the");
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["runs"].as_array().unwrap().len(), 2);
    assert_eq!(metrics["runs"][0]["epochs"].as_array().unwrap().len(), 4);
}

#[test]
fn replay_from_echoed_config_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), json!({}));
    let out = tmp.path().join("out");
    for cmd in ["ingest", "train", "diagnose", "verify"] {
        run_cmd(cmd, &cfg);
        let before = snapshot(&out);
        let echoed = out.join(format!("{cmd}_config.json"));
        run_cmd(cmd, &echoed);
        assert_eq!(before, snapshot(&out), "{cmd} replay differs");
    }
}

#[test]
fn missing_config_exits_2() {
    let (code, _, err) = embgeo(&["ingest", "--config", "/nonexistent/config.json"]);
    assert_eq!(code, 2);
    assert!(!err.is_empty());
}

#[test]
fn missing_corpus_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), json!({ "corpus": { "path": "nope.txt" } }));
    assert_eq!(run_cmd("ingest", &cfg), 2);
}

#[test]
fn train_without_vocabulary_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), json!({}));
    assert_eq!(run_cmd("train", &cfg), 2);
}

#[test]
fn empty_corpus_exits_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), json!({}));
    std::fs::write(tmp.path().join("corpus.txt"), "  \n\n \t\n").unwrap();
    assert_eq!(run_cmd("ingest", &cfg), 3);
}

#[test]
fn corrupt_checkpoint_exits_5() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("bad.json"), "{ \"format\": \"embgeo-checkpoint\", ").unwrap();
    let cfg = small_config(tmp.path(), json!({ "diagnostics": { "checkpoints": ["bad.json"] } }));
    assert_eq!(run_cmd("diagnose", &cfg), 5);
}

#[test]
fn missing_checkpoint_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), json!({ "diagnostics": { "checkpoints": ["absent.json"] } }));
    assert_eq!(run_cmd("diagnose", &cfg), 2);
}

#[test]
fn invalid_config_exits_1() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), json!({ "verify": { "perturbation_case": { "epsilon": 0.9 } } }));
    assert_eq!(run_cmd("verify", &cfg), 1);
    let cfg = small_config(tmp.path(), json!({ "unknown_key": 1 }));
    assert_eq!(run_cmd("ingest", &cfg), 1);
}

#[test]
fn exhausted_hull_budget_exits_6() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(
        tmp.path(),
        json!({ "verify": { "hull_max_iters": 0, "regularizer": false, "gram": false,
                            "extreme_case": false, "perturbation": false, "layer_norm": false } }),
    );
    assert_eq!(run_cmd("verify", &cfg), 6);
    let v: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/verify.json")).unwrap()).unwrap();
    assert!(v["items"].as_array().unwrap().iter().any(|i| i["status"] == "indeterminate"));
}

#[test]
fn out_flag_overrides_output_dir() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), json!({}));
    let alt = tmp.path().join("alt");
    let (code, stdout, _) = embgeo(&["ingest", "--config", cfg.to_str().unwrap(), "--out", alt.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(alt.join("vocab.json").exists());
    assert!(stdout.contains("vocab.json"));
    assert!(!tmp.path().join("out").exists());
}
