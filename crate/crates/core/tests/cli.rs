use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vvids::data::{generate_synthetic, load_dataset, SyntheticSpec};
use vvids::metrics::EvalReport;
use vvids::run::{
    cmd_eval, cmd_train, evaluate_predictions, oracle_predictions, predict_records, predictions_to_jsonl, video_evals,
    Checkpoint, Preset, RunConfig, CHECKPOINT_FILE, CONFIG_FILE, CURVE_CSV_FILE, CURVE_SVG_FILE, EVAL_FILE,
    METRICS_FILE,
};

fn vvids(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vvids")).args(args).env("VVIDS_THREADS", "1").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small dataset on disk plus flags for a quick training run.
fn tiny_setup(dir: &Path) -> PathBuf {
    let data = dir.join("data.jsonl");
    let o = vvids(&["generate", "--out", s(&data), "--videos", "10", "--clips", "8", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    data
}

fn quick_train(data: &Path, out: &Path) -> Output {
    vvids(&[
        "train", "--dataset", s(data), "--out", s(out), "--d-model", "16", "--epochs", "2", "--max-steps", "6",
        "--seed", "5",
    ])
}

#[test]
fn train_writes_artifacts_and_eval_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_setup(dir.path());
    let run = dir.path().join("run");
    let o = quick_train(&data, &run);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [CONFIG_FILE, CHECKPOINT_FILE, METRICS_FILE, CURVE_CSV_FILE, CURVE_SVG_FILE] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let config = RunConfig::load(run.join(CONFIG_FILE)).unwrap();
    assert_eq!(config.model.d_model, 16);
    assert_eq!(config.max_steps, Some(6));

    let eval = |out: &str| {
        let o = vvids(&["eval", "--checkpoint", s(&run), "--dataset", s(&data), "--out", s(&dir.path().join(out))]);
        assert!(o.status.success(), "{}", stderr(&o));
        o.stdout
    };
    let (a, b) = (eval("e1"), eval("e2"));
    assert_eq!(a, b);
    let written = std::fs::read(dir.path().join("e1").join(EVAL_FILE)).unwrap();
    assert_eq!(written, a);

    let again = dir.path().join("run2");
    assert!(quick_train(&data, &again).status.success());
    for f in [METRICS_FILE, CURVE_SVG_FILE] {
        assert_eq!(std::fs::read(run.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f} differs");
    }
    // checkpoints record their own run directory; everything else must match
    let a = Checkpoint::load(run.join(CHECKPOINT_FILE)).unwrap();
    let mut b = Checkpoint::load(again.join(CHECKPOINT_FILE)).unwrap();
    b.config.out = a.config.out.clone();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn eval_report_matches_metric_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let records = generate_synthetic(&SyntheticSpec { n_videos: 6, clips: 10, ..SyntheticSpec::default() }).unwrap();
    let data = dir.path().join("d.jsonl");
    vvids::data::save_dataset(&data, &records).unwrap();
    let cfg = RunConfig {
        dataset: Some(data.clone()),
        out: dir.path().join("run"),
        max_steps: Some(3),
        model: vvids::model::ModelConfig { d_model: 16, ..Default::default() },
        ..RunConfig::default()
    };
    let outcome = cmd_train(&cfg).unwrap();
    let report = cmd_eval(Some(&cfg.out.join(CHECKPOINT_FILE)), &data, None, &dir.path().join("eval")).unwrap();
    let preds = predict_records(&outcome.trainer, &records).unwrap();
    let direct = EvalReport::compute(&video_evals(&records, &preds).unwrap()).unwrap();
    assert_eq!(report, direct);
}

#[test]
fn oracle_predictions_score_one_and_empty_predictions_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_setup(dir.path());
    let records = load_dataset(&data).unwrap();

    let perfect = dir.path().join("oracle.jsonl");
    std::fs::write(&perfect, predictions_to_jsonl(&oracle_predictions(&records))).unwrap();
    let o = vvids(&["eval", "--dataset", s(&data), "--predictions", s(&perfect), "--out", s(&dir.path().join("p"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let metrics = report["metrics"].as_object().unwrap();
    assert_eq!(metrics.len(), 10);
    assert!(metrics.values().all(|v| v.as_f64() == Some(1.0)), "{metrics:?}");

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let o = vvids(&["eval", "--dataset", s(&data), "--predictions", s(&empty), "--out", s(&dir.path().join("z"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let metrics = report["metrics"].as_object().unwrap();
    for (k, v) in metrics {
        if k.starts_with("MR-") {
            assert_eq!(v.as_f64(), Some(0.0), "{k}");
        }
    }
    assert!(!report["warnings"].as_array().unwrap().is_empty());

    let direct = evaluate_predictions(&records, &[]).unwrap();
    assert!(direct.metrics.values().all(|v| *v == 0.0));
}

#[test]
fn curves_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = vvids(&["curves", "--metrics", s(&golden("tiny_metrics.jsonl")), "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join(CURVE_CSV_FILE)).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,train_loss,val_loss"));
    assert_eq!(csv, std::fs::read_to_string(golden("loss_curve.csv")).unwrap());
    let svg = std::fs::read(dir.path().join(CURVE_SVG_FILE)).unwrap();
    assert_eq!(svg, std::fs::read(golden("loss_curve.svg")).unwrap());
}

#[test]
fn two_epoch_log_gives_two_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("m.jsonl");
    std::fs::write(
        &log,
        "{\"epoch\":1,\"steps\":1,\"train_loss\":1.0,\"val_loss\":0.5}\n{\"epoch\":2,\"steps\":2,\"train_loss\":0.5,\"val_loss\":0.25}\n",
    )
    .unwrap();
    assert!(vvids(&["curves", "--metrics", s(&log), "--out", s(dir.path())]).status.success());
    let csv = std::fs::read_to_string(dir.path().join(CURVE_CSV_FILE)).unwrap();
    assert_eq!(csv, "epoch,train_loss,val_loss\n1,1,0.5\n2,0.5,0.25\n");
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_setup(dir.path());
    let run = dir.path().join("run");
    assert!(quick_train(&data, &run).status.success());
    let text = std::fs::read_to_string(run.join(CHECKPOINT_FILE)).unwrap();
    let ckpt = Checkpoint::from_json(&text).unwrap();
    assert_eq!(ckpt.to_json(), text);
    let trainer = ckpt.restore().unwrap();
    assert_eq!(Checkpoint::capture(&ckpt.config, &trainer).to_json(), text);
    for (name, t) in &ckpt.params {
        let restored = trainer.params.get(trainer.params.find(name).unwrap());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(restored.data()), bits(t.data()), "{name}");
    }
}

#[test]
fn presets_set_batch_epochs_and_decoder_depth() {
    let t = RunConfig::preset(Preset::TvsumLike);
    assert_eq!((t.batch_size, t.epochs, t.model.decoder_layers), (1, 500, 1));
    let q = RunConfig::preset(Preset::QvhLike);
    assert_eq!((q.batch_size, q.epochs, q.model.decoder_layers), (32, 200, 3));
    let back = RunConfig::from_json(&q.to_json()).unwrap();
    assert_eq!(back, q);
}

fn assert_error(o: &Output, code: i32, kind: &str) {
    assert_eq!(o.status.code(), Some(code), "{}", stderr(o));
    let err = stderr(o);
    let line = err.lines().last().unwrap();
    assert!(line.starts_with(&format!("error kind={kind} code={code} msg=")), "{line}");
}

#[test]
fn errors_exit_with_one_parseable_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_setup(dir.path());
    let out = s(dir.path());

    assert_error(&vvids(&["train", "--dataset", s(&data), "--lr", "-1", "--out", out]), 2, "config");
    assert_error(&vvids(&["train", "--preset", "huge", "--dataset", s(&data)]), 2, "usage");
    assert_error(&vvids(&["frobnicate"]), 2, "usage");
    assert_error(&vvids(&["eval", "--dataset", s(&data), "--out", out]), 2, "config");
    let missing = dir.path().join("nope.jsonl");
    assert_error(&vvids(&["eval", "--dataset", s(&missing), "--predictions", s(&missing)]), 3, "io");

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"video_id\": 3}\n").unwrap();
    assert_error(&vvids(&["train", "--dataset", s(&bad), "--out", out]), 3, "parse");

    let empty_log = dir.path().join("empty.jsonl");
    std::fs::write(&empty_log, "").unwrap();
    assert_error(&vvids(&["curves", "--metrics", s(&empty_log), "--out", out]), 3, "data");

    // checkpoint trained on one feature width, dataset with another
    let run = dir.path().join("run");
    assert!(quick_train(&data, &run).status.success());
    let other = dir.path().join("other.jsonl");
    let spec = SyntheticSpec { n_videos: 3, d_video: 7, ..SyntheticSpec::default() };
    vvids::data::save_dataset(&other, &generate_synthetic(&spec).unwrap()).unwrap();
    assert_error(&vvids(&["eval", "--checkpoint", s(&run), "--dataset", s(&other), "--out", out]), 2, "compatibility");
}

#[test]
fn success_exits_zero_and_help_is_not_an_error() {
    assert_eq!(vvids(&["--help"]).status.code(), Some(0));
    assert_eq!(vvids(&["train", "--help"]).status.code(), Some(0));
}
