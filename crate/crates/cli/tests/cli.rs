use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
d = 8
r = 4
h = 4
hf = 4
f = 4
epochs_stage0 = 2
epochs_stage1 = 2
epochs_stage2 = 3
batch_size = 4
target_len_audio = 6
target_len_video = 8
";

fn mmff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmff")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mmff(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// synth -> compress -> train -> eval, returning the working directory.
fn smoke(root: &Path) {
    let cfg = root.join("small.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let (raw, comp, model, eval) = (root.join("raw"), root.join("comp"), root.join("model"), root.join("eval"));
    ok(&["synth", "--out", p(&raw), "--samples", "12", "--test-samples", "6", "--seed", "4"]);
    ok(&["compress", "--data", p(&raw), "--out", p(&comp), "--config", p(&cfg)]);
    ok(&["train", "--data", p(&comp), "--out", p(&model), "--config", p(&cfg)]);
    ok(&["eval", "--data", p(&comp), "--checkpoint", p(&model.join("model.ckpt")), "--out", p(&eval)]);
}

#[test]
fn synth_writes_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    ok(&["synth", "--out", p(&out), "--samples", "8"]);
    let manifest = fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 9);
    assert!(manifest.starts_with("sample_id,label,text_path,audio_path,video_path"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = mmff(&["synth", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(mmff(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mmff(&["--help"]).status.code(), Some(0));
}

#[test]
fn corrupt_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", p(&data), "--samples", "4"]);
    let bad = dir.path().join("bad.ckpt");
    fs::write(&bad, b"not a checkpoint").unwrap();
    let out = mmff(&["eval", "--data", p(&data), "--checkpoint", p(&bad), "--out", p(&dir.path().join("e"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", p(&data), "--samples", "4"]);
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "d = 8\nr = 8\n").unwrap();
    let out_dir = dir.path().join("model");
    let out = mmff(&["train", "--data", p(&data), "--out", p(&out_dir), "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
}

#[test]
fn smoke_pipeline_and_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    smoke(root);
    let metrics = fs::read_to_string(root.join("eval/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("samples,ccc,rmse,mae,pearson"));
    assert!(metrics.lines().nth(1).unwrap().starts_with("6,"));
    let preds = fs::read_to_string(root.join("eval/predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 7);
    for f in ["model.ckpt", "stage0.ckpt", "stage1.ckpt", "loss.csv", "trace.csv", "config.txt"] {
        assert!(root.join("model").join(f).exists(), "{f}");
    }

    let ckpt = root.join("model/model.ckpt");
    let comp = root.join("comp");
    ok(&["ablate", "--data", p(&comp), "--checkpoint", p(&ckpt), "--out", p(&root.join("abl")), "--orders", "1,3"]);
    let abl = fs::read_to_string(root.join("abl/ablation.csv")).unwrap();
    assert_eq!(abl.lines().count(), 2);
    assert!(abl.lines().nth(1).unwrap().starts_with("1+3,"));
    ok(&["contrib", "--data", p(&comp), "--checkpoint", p(&ckpt), "--out", p(&root.join("con"))]);
    let con = fs::read_to_string(root.join("con/contributions.csv")).unwrap();
    assert!(con.lines().any(|l| l.starts_with("aggregate,")));

    // resume the last stage from the stage-1 checkpoint
    let cfg = root.join("small.cfg");
    let resumed = root.join("resumed");
    ok(&[
        "train", "--data", p(&comp), "--out", p(&resumed), "--config", p(&cfg), "--stage", "2",
        "--checkpoint", p(&root.join("model/stage1.ckpt")),
    ]);
    assert!(resumed.join("model.ckpt").exists());
}

#[test]
fn identical_runs_give_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    smoke(a.path());
    smoke(b.path());
    for f in ["model/model.ckpt", "model/loss.csv", "model/trace.csv", "eval/metrics.csv", "eval/predictions.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn kfold_reports_every_fold() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("small.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let (raw, comp, cv) = (root.join("raw"), root.join("comp"), root.join("cv"));
    ok(&["synth", "--out", p(&raw), "--samples", "12"]);
    ok(&["compress", "--data", p(&raw), "--out", p(&comp), "--config", p(&cfg)]);
    ok(&["train", "--data", p(&comp), "--out", p(&cv), "--config", p(&cfg), "--kfold", "3"]);
    let folds = fs::read_to_string(cv.join("cv_folds.csv")).unwrap();
    assert_eq!(folds.lines().count(), 4);
    let preds = fs::read_to_string(cv.join("cv_predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 13);
    assert!(cv.join("metrics.csv").exists());
}
