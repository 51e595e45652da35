//! End-to-end exercises of the `ausculta` binary: the full
//! fixture -> preprocess -> pretrain -> probe -> eval -> rank chain,
//! the documented exit-code taxonomy, and the `AUSCULTA_SEED` override.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ausculta::rank::ScoreTable;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ausculta")
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args).env_remove("AUSCULTA_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("failed to spawn the ausculta binary")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args, &[]);
    assert!(
        out.status.success(),
        "`ausculta {}` failed (status {:?})\nstdout:\n{}\nstderr:\n{}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn scores_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/benchmark_scores.json")
}

/// Write a small pretraining config and return its path.
fn write_train_config(dir: &Path, manifest: &Path, pre: &Path, out: &Path, seed: u64) -> PathBuf {
    let path = dir.join("train.json");
    let cfg = serde_json::json!({
        "manifest": manifest.to_str().unwrap(),
        "data_dir": pre.to_str().unwrap(),
        "out_dir": out.to_str().unwrap(),
        "batch_size": 4,
        "epochs": 3,
        "lr": 1e-3,
        "lr_decay": 0.99,
        "model": {"conv_channels": [4, 8], "d_e": 32, "d_p": 16},
        "seed": seed
    });
    fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn e2e_fixture_preprocess_pretrain_probe_eval_rank() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Fixture corpus.
    let corpus = root.join("corpus");
    run_ok(&["fixture", "--out", corpus.to_str().unwrap(), "--seed", "42"]);
    let manifest = corpus.join("manifest.jsonl");
    assert!(manifest.exists());

    // Preprocess to canonical audio + feature caches.
    let pre = root.join("pre");
    run_ok(&[
        "preprocess",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        pre.to_str().unwrap(),
        "--strict",
    ]);
    let n_audio = fs::read_dir(pre.join("audio")).unwrap().count();
    let n_feats = fs::read_dir(pre.join("features")).unwrap().count();
    assert_eq!((n_audio, n_feats), (16, 16), "expected 16 cached records");

    // Pretrain a small encoder.
    let train_out = root.join("train");
    let cfg = write_train_config(root, &manifest, &pre, &train_out, 11);
    run_ok(&["pretrain", "--config", cfg.to_str().unwrap()]);
    for artifact in ["checkpoint.abcp", "training_log.jsonl", "run_manifest.json"] {
        assert!(train_out.join(artifact).exists(), "pretrain did not write {artifact}");
    }

    // Linear probe on the heart normal/abnormal task, merging scores.
    let probe_out = root.join("probe");
    let merged = root.join("scores.json");
    let probe_cfg = root.join("probe.json");
    fs::write(
        &probe_cfg,
        serde_json::to_vec_pretty(&serde_json::json!({
            "manifest": manifest.to_str().unwrap(),
            "data_dir": pre.to_str().unwrap(),
            "checkpoint": train_out.join("checkpoint.abcp").to_str().unwrap(),
            "out_dir": probe_out.to_str().unwrap(),
            "task": "T13",
            "mode": "linear",
            "epochs": 8,
            "lr": 1e-4,
            "lr_decay": 0.99,
            "batch_size": 16,
            "chunk_secs": 2,
            "seed": 5
        }))
        .unwrap(),
    )
    .unwrap();
    let out = run_ok(&[
        "probe",
        "--config",
        probe_cfg.to_str().unwrap(),
        "--merge-scores",
        merged.to_str().unwrap(),
        "--model-name",
        "desk",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("probe T13 (linear)"), "unexpected probe output:\n{stdout}");
    for artifact in ["head_T13.abcp", "predictions.jsonl", "eval.json"] {
        assert!(probe_out.join(artifact).exists(), "probe did not write {artifact}");
    }
    let table = ScoreTable::load(&merged).unwrap();
    assert!(
        table.get("desk", "T13", "macro_f1").is_some(),
        "merged score table lacks desk/T13/macro_f1"
    );

    // Re-scoring the emitted predictions must reproduce the probe's own
    // evaluation report exactly.
    let eval_out = root.join("eval_again.json");
    run_ok(&[
        "eval",
        "--predictions",
        probe_out.join("predictions.jsonl").to_str().unwrap(),
        "--task",
        "T13",
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    let original: serde_json::Value =
        serde_json::from_slice(&fs::read(probe_out.join("eval.json")).unwrap()).unwrap();
    let rescored: serde_json::Value =
        serde_json::from_slice(&fs::read(&eval_out).unwrap()).unwrap();
    assert_eq!(
        original["metrics"], rescored["metrics"],
        "re-scored predictions disagree with the probe's evaluation report"
    );

    // Rank the shipped benchmark table.
    let rank_out = root.join("rank");
    let out = run_ok(&[
        "rank",
        "--scores",
        scores_path().to_str().unwrap(),
        "--group",
        "function",
        "--out",
        rank_out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("AuscultaBase"), "leaderboard output missing models:\n{stdout}");
    assert!(rank_out.join("rank_report.json").exists());
    assert!(rank_out.join("mrr_bars.svg").exists());
}

#[test]
fn exit_codes_follow_the_error_taxonomy() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Config errors exit 1: unknown probe task (the message names the
    // valid registry range).
    let probe_cfg = root.join("probe.json");
    fs::write(
        &probe_cfg,
        serde_json::to_vec_pretty(&serde_json::json!({
            "manifest": root.join("manifest.jsonl").to_str().unwrap(),
            "data_dir": root.join("pre").to_str().unwrap(),
            "checkpoint": root.join("checkpoint.abcp").to_str().unwrap(),
            "out_dir": root.join("probe").to_str().unwrap(),
            "task": "T99",
            "mode": "linear",
            "epochs": 8,
            "lr": 1e-4,
            "lr_decay": 0.99,
            "batch_size": 16,
            "chunk_secs": 2,
            "seed": 5
        }))
        .unwrap(),
    )
    .unwrap();
    let out = run(&["probe", "--config", probe_cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1), "unknown task should exit 1");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("unknown task id") && stderr.contains("T1..T16"),
        "unhelpful unknown-task message:\n{stderr}"
    );

    // Data/IO errors exit 2: missing manifest.
    let out = run(
        &[
            "preprocess",
            "--manifest",
            root.join("nope.jsonl").to_str().unwrap(),
            "--out",
            root.join("pre").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2), "missing manifest should exit 2");

    // A malformed seed override is a config error (exit 1), reported
    // before any training starts.
    let corpus = root.join("corpus");
    run_ok(&["fixture", "--out", corpus.to_str().unwrap()]);
    let cfg = write_train_config(
        root,
        &corpus.join("manifest.jsonl"),
        &root.join("pre2"),
        &root.join("train"),
        11,
    );
    let out = run(&["pretrain", "--config", cfg.to_str().unwrap()], &[("AUSCULTA_SEED", "abc")]);
    assert_eq!(out.status.code(), Some(1), "bad AUSCULTA_SEED should exit 1");
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("AUSCULTA_SEED"),
        "seed error should name the variable"
    );

    // Usage errors exit 1; help and version exit 0.
    let out = run(&["rank", "--frobnicate"], &[]);
    assert_eq!(out.status.code(), Some(1), "unknown flag should exit 1");
    assert_eq!(run(&["--help"], &[]).status.code(), Some(0));
    assert_eq!(run(&["--version"], &[]).status.code(), Some(0));
}

#[test]
fn seed_env_var_overrides_the_configured_seed() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let corpus = root.join("corpus");
    run_ok(&["fixture", "--out", corpus.to_str().unwrap(), "--seed", "42"]);
    let manifest = corpus.join("manifest.jsonl");
    let pre = root.join("pre");
    run_ok(&[
        "preprocess",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        pre.to_str().unwrap(),
    ]);

    let train_out = root.join("train");
    let cfg = write_train_config(root, &manifest, &pre, &train_out, 11);

    run_ok(&["pretrain", "--config", cfg.to_str().unwrap()]);
    let baseline = fs::read(train_out.join("checkpoint.abcp")).unwrap();
    fs::remove_dir_all(&train_out).unwrap();

    let out = run(
        &["pretrain", "--config", cfg.to_str().unwrap()],
        &[("AUSCULTA_SEED", "12345")],
    );
    assert!(out.status.success(), "pretrain with AUSCULTA_SEED=12345 failed");
    let overridden = fs::read(train_out.join("checkpoint.abcp")).unwrap();
    assert!(
        baseline != overridden,
        "AUSCULTA_SEED=12345 produced the same checkpoint as the configured seed"
    );
}

#[test]
fn tasks_subcommand_lists_the_registry() {
    let out = run_ok(&["tasks"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    // Header plus sixteen task rows.
    assert_eq!(stdout.lines().count(), 17, "unexpected table:\n{stdout}");
    for id in ["T1 ", "T13", "T16"] {
        assert!(stdout.contains(id), "table is missing {id}:\n{stdout}");
    }

    let out = run_ok(&["tasks", "--json"]);
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let arr = parsed.as_array().expect("tasks --json should print an array");
    assert_eq!(arr.len(), 16);
    assert!(arr.iter().any(|t| t["id"] == "T13"));
}
