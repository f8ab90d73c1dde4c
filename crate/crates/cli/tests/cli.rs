use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn tabsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabsum")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tabsum(args);
    assert!(out.status.success(), "tabsum {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = tabsum(args);
    assert!(!out.status.success(), "tabsum {args:?} should have failed");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic data plus a briefly trained model.
struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        ok(&["synth-data", "--out", s(&data), "--n", "24", "--split", "16/4/4", "--seed", "3"]);
        let run = dir.path().join("run");
        ok(&[
            "train",
            "--data",
            s(&data),
            "--out",
            s(&run),
            "--epochs",
            "3",
            "--gru-dim",
            "12",
            "--attr-emb",
            "6",
            "--dec-emb",
            "6",
            "--p-dim",
            "6",
            "--lr",
            "0.01",
            "--max-len",
            "20",
            "--quiet",
        ]);
        Run { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

#[test]
fn synth_data_writes_splits_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth-data", "--out", s(dir.path()), "--n", "10", "--split", "6/2/2"]);
    let count = |f: &str| {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(f)).unwrap()).unwrap();
        v["instances"].as_array().unwrap().len()
    };
    assert_eq!((count("train.json"), count("valid.json"), count("test.json")), (6, 2, 2));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "synth-data");
    assert_eq!(m["config"]["n"], 10);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);
    assert!(m["git_describe"].is_string());
}

#[test]
fn synth_split_must_add_up() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(&["synth-data", "--out", s(dir.path()), "--n", "10", "--split", "6/2/1"]);
    assert!(err.contains("does not add up"), "{err}");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.json");
    fs::write(&cfg, r#"{"n": 12, "seed": 9, "records_per_table": 2}"#).unwrap();
    let out = dir.path().join("d");
    ok(&["synth-data", "--config", s(&cfg), "--out", s(&out), "--n", "20"]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["n"], 20);
    assert_eq!(m["config"]["seed"], 9);
    assert_eq!(m["config"]["records_per_table"], 2);

    fs::write(&cfg, r#"{"n": 12, "colour": "blue"}"#).unwrap();
    let err = fails(&["synth-data", "--config", s(&cfg), "--out", s(&out)]);
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn train_outputs_and_generation() {
    let run = Run::new();
    for f in ["best.ckpt", "last.ckpt", "epochs.csv", "vocab.txt", "manifest.json"] {
        assert!(run.path("run").join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(run.path("run/epochs.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,train_loss,val_sbleu,wall_seconds"));
    assert_eq!(log.lines().count(), 4);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.path("run/manifest.json")).unwrap()).unwrap();
    assert!(m["finished_unix"].is_u64());

    let ckpt = run.path("run/best.ckpt");
    let test = run.path("data/test.json");
    let greedy = ok(&["generate", "--checkpoint", s(&ckpt), "--data", s(&test), "--greedy", "--max-len", "20"]);
    let beam1 = ok(&["generate", "--checkpoint", s(&ckpt), "--data", s(&test), "--beam", "1", "--max-len", "20"]);
    assert_eq!(greedy, beam1);
    assert_eq!(greedy.lines().count(), 4);

    let hyp = run.path("hyp.txt");
    let attn = run.path("attn");
    ok(&["generate", "--checkpoint", s(&ckpt), "--data", s(&test), "--out", s(&hyp), "--attn", s(&attn)]);
    assert!(run.path("hyp.txt.manifest.json").exists());
    for i in 0..4 {
        let d: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(attn.join(format!("{i}.json"))).unwrap()).unwrap();
        // synthetic tables have 4 records
        assert_eq!(d["g"].as_array().unwrap().len(), 4);
        assert_eq!(d["alpha"].as_array().unwrap().len(), 4);
        for row in d["gamma"].as_array().unwrap() {
            let sum: f64 = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    let report = ok(&["evaluate", "--hyp", s(&hyp), "--ref", s(&test)]);
    let r: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(r["n_pairs"], 4);
    assert!(r["cbleu"].as_f64().unwrap() >= r["sbleu"].as_f64().unwrap());

    let inspect = ok(&["inspect-attention", "--checkpoint", s(&ckpt), "--data", s(&test), "--index", "2"]);
    let v: serde_json::Value = serde_json::from_str(&inspect).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["index"], 2);
    let steps = v[0]["tokens"].as_array().unwrap().len() + 1;
    assert_eq!(v[0]["gamma"].as_array().unwrap().len(), steps);
    fails(&["inspect-attention", "--checkpoint", s(&ckpt), "--data", s(&test), "--index", "9"]);
}

#[test]
fn generate_rejects_a_foreign_schema() {
    let run = Run::new();
    let other = run.path("other");
    ok(&["synth-data", "--out", s(&other), "--n", "3", "--split", "1/1/1", "--attributes", "3"]);
    let err =
        fails(&["generate", "--checkpoint", s(&run.path("run/best.ckpt")), "--data", s(&other.join("test.json"))]);
    assert!(err.contains("schema"), "{err}");
}

#[test]
fn evaluate_identity_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    fs::write(&a, "high near 20 . low around 10 .\nrain likely .\n").unwrap();
    fs::write(&b, "only one line\n").unwrap();
    let r: serde_json::Value = serde_json::from_str(&ok(&["evaluate", "--hyp", s(&a), "--ref", s(&a)])).unwrap();
    assert_eq!(r["sbleu"], 100.0);
    assert_eq!(r["rouge_l"], 100.0);
    let err = fails(&["evaluate", "--hyp", s(&a), "--ref", s(&b)]);
    assert!(err.contains("2 hypotheses but 1 references"), "{err}");
}

#[test]
fn diverging_training_exits_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth-data", "--out", s(&data), "--n", "6", "--split", "6/0/0"]);
    let err = fails(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&dir.path().join("run")),
        "--epochs",
        "5",
        "--gru-dim",
        "8",
        "--attr-emb",
        "4",
        "--dec-emb",
        "4",
        "--p-dim",
        "4",
        "--lr",
        "1e300",
        "--clip",
        "0",
        "--quiet",
    ]);
    assert!(err.contains("epoch"), "{err}");
}

#[test]
fn audit_ops_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("audit.csv");
    ok(&["audit-ops", "--t", "36", "--m", "7", "--tp", "30,60", "--out", s(&out)]);
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(
        csv,
        "T,M,T',attr_scores,record_scores,fully_dynamic_attr_scores\n36,7,30,252,1080,7560\n36,7,60,252,2160,15120\n"
    );
    assert!(dir.path().join("audit.csv.manifest.json").exists());
    let nhm = ok(&["audit-ops", "--t", "4", "--m", "3", "--tp", "5", "--variant", "nhm"]);
    assert!(nhm.ends_with("4,3,5,0,20,0\n"), "{nhm}");
}
