use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qepnl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qepnl")).args(args).output().unwrap()
}

fn fixture(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn rule_translation_goes_to_stdout_only() {
    let o = qepnl(&["translate", "--plan", &fixture("plans/example1.json"), "--numbered"]);
    assert_eq!(code(&o), 0);
    assert!(o.stderr.is_empty());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("1. perform sequential scan on inproceedings.\n"));
    assert!(text.ends_with("5. perform duplicate removal on T3 to get the final results.\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"Plan":{}}"#).unwrap();
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"[{"Plan":{"Node Type":"Foo Scan","Relation Name":"t","Alias":"t"}}]"#).unwrap();
    let script = dir.path().join("bad.pool");
    fs::write(&script, "SELECT * FROM pg WHERE name = 'unterminated").unwrap();

    assert_eq!(code(&qepnl(&["translate", "--plan", &fixture("plans/single_seq_scan.json")])), 0);
    assert_eq!(code(&qepnl(&["translate", "--plan", path(&bad)])), 3);
    assert_eq!(code(&qepnl(&["translate", "--plan", path(&unknown)])), 1);
    assert_eq!(code(&qepnl(&["translate", "--plan", path(&dir.path().join("missing.json"))])), 1);
    assert_eq!(code(&qepnl(&["translate", "--mode", "neural", "--plan", &fixture("plans/example1.json")])), 2);
    assert_eq!(code(&qepnl(&["frobnicate"])), 2);
    assert_eq!(code(&qepnl(&["pool", "exec", path(&script)])), 3);
    let failed = qepnl(&["translate", "--plan", path(&bad)]);
    assert!(failed.stdout.is_empty());
    assert!(!failed.stderr.is_empty());
}

#[test]
fn pool_scripts_update_the_store_file() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.json");
    assert_eq!(code(&qepnl(&["--store", path(&store), "store", "seed"])), 0);
    let script = dir.path().join("s.pool");
    fs::write(
        &script,
        "UPDATE pg SET desc = 'perform a hash join' WHERE name = 'hashjoin';\nCOMPOSE hash, hashjoin FROM pg",
    )
    .unwrap();
    let o = qepnl(&["--store", path(&store), "pool", "exec", path(&script)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("perform a hash join on $R2$ and $R1$ on condition $C$"));
    let listed = stdout(&qepnl(&["--store", path(&store), "store", "list"]));
    assert!(listed.lines().any(|l| l.starts_with("hashjoin\tbinary\tperform a hash join")));
}

/// Small corpus and a briefly trained model in `dir`.
fn tiny_model(dir: &Path) -> PathBuf {
    let corpus = dir.join("corpus.jsonl");
    let o = qepnl(&[
        "corpus",
        "generate",
        "--schema",
        &fixture("toy_schema.json"),
        "--trees",
        "3",
        "--budget",
        "5",
        "--out",
        path(&corpus),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stats = stdout(&qepnl(&["corpus", "stats", "--corpus", path(&corpus)]));
    assert!(stats.contains("expansion:"));
    let config = dir.join("train.json");
    fs::write(&config, r#"{"maxEpochs": 2, "dims": {"hidden": 8, "enc_embed": 4, "dec_embed": 4}}"#).unwrap();
    let model = dir.join("model.bin");
    let o = qepnl(&["train", "--corpus", path(&corpus), "--config", path(&config), "--out", path(&model)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("\"epochs\":2"));
    let o = qepnl(&["eval", "--model", path(&model), "--corpus", path(&corpus), "--beam", "2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("mean bleu:"));
    model
}

#[test]
fn hybrid_switches_to_the_model_on_the_sixth_sighting() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path());
    let plan = fixture("plans/single_seq_scan.json");
    let sessions = dir.path().join("sessions");
    let rule = stdout(&qepnl(&["translate", "--plan", &plan]));
    let neural = qepnl(&["decode", "--model", path(&model), "--plan", &plan]);
    assert_eq!(code(&neural), 0);
    let neural = stdout(&neural);
    assert_ne!(neural, rule);
    assert_eq!(stdout(&qepnl(&["translate", "--mode", "neural", "--model", path(&model), "--plan", &plan])), neural);

    let mut last = 0;
    for k in 1..=6u64 {
        let o = qepnl(&[
            "--session",
            "alice",
            "--session-dir",
            path(&sessions),
            "translate",
            "--mode",
            "hybrid",
            "--model",
            path(&model),
            "--plan",
            &plan,
        ]);
        assert_eq!(code(&o), 0);
        let expected = if k <= 5 { &rule } else { &neural };
        assert_eq!(&stdout(&o), expected, "translation {k}");
        let sidecar: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(sessions.join("alice.json")).unwrap()).unwrap();
        let count = sidecar["perUserCounts"]["seq scan"].as_u64().unwrap();
        assert!(count >= last);
        assert_eq!(count, k);
        last = count;
    }
    assert!(!sessions.join("bob.json").exists());
}

#[test]
fn pipeline_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("pipeline.json");
    let cfg = serde_json::json!({
        "schema": fixture("toy_schema.json"),
        "treeCount": 2,
        "sizeBudget": 4,
        "seed": 3,
        "train": {"maxEpochs": 1},
        "beamK": 2,
        "dims": {"hidden": 6, "enc_embed": 3, "dec_embed": 3}
    });
    fs::write(&config, cfg.to_string()).unwrap();
    let out = dir.path().join("out");
    let o = qepnl(&["pipeline", "--config", path(&config), "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["trees"], 2);
    for f in ["store.json", "corpus.jsonl", "model.bin", "report.json", "plans/tree_0000.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}
