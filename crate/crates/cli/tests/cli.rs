use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stacklab"))
}

fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn gen_data_is_deterministic_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for (out, workers) in [(&a, "1"), (&b, "1"), (&c, "2")] {
        let status = bin()
            .args(["gen-data", "--count", "5", "--seed", "7", "--workers", workers, "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    // identical invocations: byte-identical directories, manifest included
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    // sharding must not change the dataset itself
    assert_eq!(dir_bytes(&a.join("pairs")), dir_bytes(&c.join("pairs")));
}

#[test]
fn plan_without_checkpoint_exits_one_naming_the_field() {
    let out = bin().args(["plan", "--goal", "nowhere"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("checkpoint"), "stderr: {stderr}");
}

#[test]
fn unknown_subcommand_exits_two_with_usage() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "stderr: {stderr}");
}

#[test]
fn unknown_flag_exits_two() {
    let out = bin().args(["gen-data", "--count", "1", "--out", "x", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_with_bad_config_exits_one_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("train.cfg");
    std::fs::write(&cfg, "dataset = d\nepochs = zero\n").unwrap();
    let out = bin().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));
}

#[test]
fn goal_suite_generation_and_oracle_eval_need_no_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let suite = tmp.path().join("suite");
    let status = bin()
        .args(["gen-data", "--kind", "goals", "--count", "2", "--seed", "3", "--out"])
        .arg(&suite)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(suite.join("goals/000/goal.png").exists());
    assert!(suite.join("goals/001/meta.json").exists());

    let report = tmp.path().join("report.json");
    let status = bin()
        .args([
            "eval-stacking",
            "--models",
            "oracle-objects",
            "--cem-iters",
            "2",
            "--cem-samples",
            "150",
            "--workers",
            "2",
            "--suite",
        ])
        .arg(&suite)
        .arg("--out")
        .arg(&report)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&report).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(json["kinds"]["oracle-objects"]["accuracy"].is_number());
}

#[test]
fn eval_stacking_with_learned_kind_requires_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let suite = tmp.path().join("suite");
    bin()
        .args(["gen-data", "--kind", "goals", "--count", "1", "--seed", "3", "--out"])
        .arg(&suite)
        .status()
        .unwrap();
    let out = bin()
        .args(["eval-stacking", "--models", "o2p2", "--suite"])
        .arg(&suite)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

/// The end-to-end smoke: generate data, train briefly, then plan one goal.
#[test]
fn full_pipeline_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let status = bin()
        .args(["gen-data", "--count", "200", "--seed", "11", "--workers", "2", "--out"])
        .arg(&data)
        .status()
        .unwrap();
    assert!(status.success());

    let run_dir = tmp.path().join("run");
    let cfg = tmp.path().join("train.cfg");
    std::fs::write(
        &cfg,
        format!(
            "dataset = {}\nout_dir = {}\nepochs = 2\nbatch_size = 16\nseed = 11\nworkers = 2\n",
            data.display(),
            run_dir.display()
        ),
    )
    .unwrap();
    let status = bin().args(["train", "--config"]).arg(&cfg).status().unwrap();
    assert!(status.success());
    let ckpt = run_dir.join("model.ckpt");
    assert!(ckpt.exists());
    assert!(run_dir.join("loss_curve.csv").exists());
    assert!(run_dir.join("manifest.json").exists());

    let suite = tmp.path().join("suite");
    bin()
        .args(["gen-data", "--kind", "goals", "--count", "1", "--seed", "5", "--out"])
        .arg(&suite)
        .status()
        .unwrap();

    let plan_out = tmp.path().join("plan");
    let status = bin()
        .args([
            "plan",
            "--cem-iters",
            "2",
            "--cem-samples",
            "60",
            "--seed",
            "3",
            "--workers",
            "2",
        ])
        .arg("--goal")
        .arg(suite.join("goals/000"))
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out")
        .arg(&plan_out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(plan_out.join("actions.json").exists());
    assert!(plan_out.join("scores_step0.png").exists());

    // prediction eval over the same dataset directory
    let pred_out = tmp.path().join("pred");
    let status = bin()
        .args(["eval-prediction", "--panels", "2", "--workers", "2", "--data"])
        .arg(&data)
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out")
        .arg(&pred_out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(pred_out.join("prediction.json").exists());

    // the embedder fits against the trained encoder
    let emb = tmp.path().join("embedder.ckpt");
    let status = bin()
        .args(["train-embedder", "--count", "64", "--epochs", "2", "--workers", "2"])
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out")
        .arg(&emb)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(emb.exists());
}
