//! Training runs, checkpoints, evaluation and the file-level commands behind
//! the `vvids` binary.
//!
//! Every command writes only under its output directory. Artifacts are
//! deterministic for a fixed seed: evaluation fans out over a thread pool
//! (capped by `VVIDS_THREADS`) but always collects results in input order.

mod checkpoint;
mod config;
mod curves;
mod evaluate;
mod trainer;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{Preset, RunConfig, DEFAULT_LR, DEFAULT_WEIGHT_DECAY, LR_GRID};
pub use curves::{curves_csv, curves_svg, line_plot_svg, logs_to_jsonl, parse_metrics_log, Series, CSV_HEADER};
pub use evaluate::{
    check_dataset_compatible, evaluate_model, evaluate_predictions, load_predictions, oracle_predictions,
    parse_predictions, predict_records, predictions_to_jsonl, video_evals, PredictedMoment, PredictionRecord,
};
pub use trainer::{prepare, EpochLog, Sample, Trainer};

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_dataset, save_dataset, split_train_val, SyntheticSpec, VideoRecord};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::optim::OptimizerKind;

/// Environment variable capping evaluation threads.
pub const THREADS_ENV: &str = "VVIDS_THREADS";

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CURVE_CSV_FILE: &str = "loss_curve.csv";
pub const CURVE_SVG_FILE: &str = "loss_curve.svg";
pub const EVAL_FILE: &str = "eval_report.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

/// Thread cap from `VVIDS_THREADS`, read once per process.
pub fn eval_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

fn pool() -> Result<Option<&'static rayon::ThreadPool>> {
    static POOL: OnceLock<std::result::Result<Option<rayon::ThreadPool>, String>> = OnceLock::new();
    let built = POOL.get_or_init(|| match eval_threads() {
        Ok(None) => Ok(None),
        Ok(Some(n)) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Some)
            .map_err(|e| e.to_string()),
        Err(e) => Err(e.to_string()),
    });
    match built {
        Ok(p) => Ok(p.as_ref()),
        Err(msg) => Err(Error::Config(msg.clone())),
    }
}

/// Run `f` inside the evaluation pool.
pub(crate) fn parallel<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match pool()? {
        Some(p) => p.install(f),
        None => f(),
    }
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    pub logs: Vec<EpochLog>,
}

/// Train on in-memory splits without touching the filesystem.
pub fn train_records(cfg: &RunConfig, train: &[VideoRecord], val: &[VideoRecord]) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg)?;
    check_dataset_compatible(&cfg.model, train)?;
    check_dataset_compatible(&cfg.model, val)?;
    let train = prepare(train)?;
    let val = prepare(val)?;
    let logs = trainer.fit(cfg, &train, &val, |_| Ok(()))?;
    Ok(TrainOutcome { trainer, logs })
}

fn load_run_dataset(cfg: &RunConfig) -> Result<Vec<VideoRecord>> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset given".into()))?;
    let records = load_dataset(path)?;
    if records.is_empty() {
        return Err(Error::Data(format!("{} holds no videos", path.display())));
    }
    Ok(records)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    crate::error::write_file(path, contents)
}

/// Train from `cfg.dataset` and write config, checkpoint, metrics log and
/// loss curves under `cfg.out`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let records = load_run_dataset(cfg)?;
    check_dataset_compatible(&cfg.model, &records)?;
    let (train, val) = split_train_val(&records);
    if train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    fs::create_dir_all(&cfg.out)?;
    write(&cfg.out.join(CONFIG_FILE), cfg.to_json())?;

    let mut trainer = Trainer::new(cfg)?;
    let train = prepare(&train)?;
    let val = prepare(&val)?;
    let mut log_file = fs::File::create(cfg.out.join(METRICS_FILE))?;
    let logs = trainer.fit(cfg, &train, &val, |log| {
        log_file.write_all(logs_to_jsonl(std::slice::from_ref(log)).as_bytes())?;
        Ok(())
    })?;
    drop(log_file);

    Checkpoint::capture(cfg, &trainer).save(cfg.out.join(CHECKPOINT_FILE))?;
    write_curves(&logs, &cfg.out)?;
    Ok(TrainOutcome { trainer, logs })
}

fn write_curves(logs: &[EpochLog], out: &Path) -> Result<()> {
    write(&out.join(CURVE_CSV_FILE), curves_csv(logs))?;
    write(&out.join(CURVE_SVG_FILE), curves_svg("Loss curve", logs)?)?;
    Ok(())
}

/// Score a checkpoint, or a predictions file when given, on a dataset and
/// write the canonical report to `out/eval_report.json`.
pub fn cmd_eval(
    checkpoint: Option<&Path>,
    dataset: &Path,
    predictions: Option<&Path>,
    out: &Path,
) -> Result<EvalReport> {
    let records = load_dataset(dataset)?;
    let preds = match (predictions, checkpoint) {
        (Some(p), _) => load_predictions(p)?,
        (None, Some(c)) => {
            let trainer = Checkpoint::load(c)?.restore()?;
            predict_records(&trainer, &records)?
        }
        (None, None) => return Err(Error::Config("eval needs a checkpoint or a predictions file".into())),
    };
    let report = evaluate_predictions(&records, &preds)?;
    fs::create_dir_all(out)?;
    if predictions.is_none() {
        write(&out.join(PREDICTIONS_FILE), predictions_to_jsonl(&preds))?;
    }
    write(&out.join(EVAL_FILE), report.to_canonical_json() + "\n")?;
    Ok(report)
}

/// Turn a metrics log into `loss_curve.csv` and `loss_curve.svg` under `out`.
pub fn cmd_curves(metrics: &Path, out: &Path) -> Result<Vec<EpochLog>> {
    let logs = parse_metrics_log(&crate::error::read_text(metrics)?)?;
    fs::create_dir_all(out)?;
    write_curves(&logs, out)?;
    Ok(logs)
}

pub fn cmd_generate(spec: &SyntheticSpec, path: &Path) -> Result<Vec<VideoRecord>> {
    let records = generate_synthetic(spec)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_dataset(path, &records)?;
    Ok(records)
}

/// Metric that ranks grid runs: moment mAP when the data has spans,
/// highlight mAP otherwise.
pub fn selection_metric(report: &EvalReport) -> Option<(&'static str, f64)> {
    ["MR-mAP-avg", "HD-mAP"]
        .into_iter()
        .find_map(|k| report.get(k).map(|v| (k, v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub lr: f64,
    pub metric: String,
    pub value: f64,
    pub run_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub entries: Vec<GridEntry>,
    pub best_lr: f64,
    pub best_run_dir: PathBuf,
}

/// Train once per learning rate under `out/lr-<lr>` and keep the one with
/// the best validation mAP; ties go to the earlier grid entry.
pub fn cmd_lr_grid(cfg: &RunConfig, grid: &[f64]) -> Result<GridReport> {
    if grid.is_empty() {
        return Err(Error::Config("learning-rate grid is empty".into()));
    }
    cfg.validate()?;
    let records = load_run_dataset(cfg)?;
    let (_, val) = split_train_val(&records);
    if val.is_empty() {
        return Err(Error::Data("validation split is empty; cannot select a learning rate".into()));
    }
    let mut entries = Vec::new();
    for &lr in grid {
        let run = RunConfig { lr, out: cfg.out.join(format!("lr-{lr}")), ..cfg.clone() };
        let outcome = cmd_train(&run)?;
        let report = evaluate_model(&outcome.trainer, &val)?;
        let (metric, value) =
            selection_metric(&report).ok_or_else(|| Error::Data("validation split has no annotations".into()))?;
        entries.push(GridEntry { lr, metric: metric.into(), value, run_dir: run.out });
    }
    let best = entries
        .iter()
        .fold(None::<&GridEntry>, |best, e| match best {
            Some(b) if b.value >= e.value => Some(b),
            _ => Some(e),
        })
        .expect("grid is non-empty");
    let report = GridReport {
        best_lr: best.lr,
        best_run_dir: best.run_dir.clone(),
        entries: entries.clone(),
    };
    fs::create_dir_all(&cfg.out)?;
    write(
        &cfg.out.join("lr_grid.json"),
        serde_json::to_string_pretty(&report).expect("grid report serializes") + "\n",
    )?;
    Ok(report)
}

/// Per-epoch losses of the two optimizers trained from the same seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub lion: Vec<EpochLog>,
    pub adamw: Vec<EpochLog>,
}

impl CompareReport {
    /// `epoch,lion_train_loss,adamw_train_loss,lion_val_loss,adamw_val_loss`;
    /// a run that stopped earlier leaves its cells empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lion_train_loss,adamw_train_loss,lion_val_loss,adamw_val_loss\n");
        let n = self.lion.len().max(self.adamw.len());
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for i in 0..n {
            let (l, a) = (self.lion.get(i), self.adamw.get(i));
            let epoch = l.or(a).map(|e| e.epoch).unwrap_or(i + 1);
            out.push_str(&format!(
                "{epoch},{},{},{},{}\n",
                cell(l.map(|e| e.train_loss)),
                cell(a.map(|e| e.train_loss)),
                cell(l.and_then(|e| e.val_loss)),
                cell(a.and_then(|e| e.val_loss)),
            ));
        }
        out
    }

    /// One training-loss curve per optimizer.
    pub fn to_svg(&self) -> Result<String> {
        let curve = |logs: &[EpochLog]| logs.iter().map(|l| (l.epoch as f64, l.train_loss)).collect();
        line_plot_svg(
            "Lion vs AdamW",
            "epoch",
            "training loss",
            &[Series::new("lion", curve(&self.lion)), Series::new("adamw", curve(&self.adamw))],
        )
    }
}

/// Train the same configuration with Lion and with AdamW under `out/lion`
/// and `out/adamw`, then write `compare.csv` and `compare.svg`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareReport> {
    let run = |kind: OptimizerKind| {
        let run = RunConfig { optimizer: kind, out: cfg.out.join(kind.to_string()), ..cfg.clone() };
        cmd_train(&run).map(|o| o.logs)
    };
    let report = CompareReport { lion: run(OptimizerKind::Lion)?, adamw: run(OptimizerKind::AdamW)? };
    write(&cfg.out.join("compare.csv"), report.to_csv())?;
    write(&cfg.out.join("compare.svg"), report.to_svg()?)?;
    Ok(report)
}
