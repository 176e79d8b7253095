use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::parallel;
use super::trainer::{Sample, Trainer};
use crate::data::{dataset_dims, VideoRecord};
use crate::error::{Error, Result};
use crate::metrics::{EvalReport, ScoredSpan, Span, VideoEval};
use crate::model::{ModelConfig, MomentPrediction, SaliencyScores};

/// A scored moment in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictedMoment {
    pub start: f64,
    pub end: f64,
    pub score: f64,
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub video_id: String,
    #[serde(default)]
    pub moments: Vec<PredictedMoment>,
    /// Per-clip highlight scores.
    #[serde(default)]
    pub saliency: Vec<f64>,
}

impl PredictionRecord {
    /// Convert normalized model output to seconds.
    pub fn from_model(video_id: &str, duration: f64, saliency: SaliencyScores, moments: &[MomentPrediction]) -> Self {
        let moments = moments
            .iter()
            .map(|m| {
                let (s, e) = m.normalized_span();
                PredictedMoment {
                    start: s * duration,
                    end: e * duration,
                    score: m.confidence,
                }
            })
            .collect();
        Self {
            video_id: video_id.to_string(),
            moments,
            saliency: saliency.0,
        }
    }
}

pub fn parse_predictions(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(line);
        let rec: PredictionRecord = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            line: i + 1,
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    parse_predictions(&crate::error::read_text(path)?)
}

pub fn predictions_to_jsonl(preds: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p).expect("predictions serialize"));
        out.push('\n');
    }
    out
}

/// Pair each record with its prediction; videos without one get empty
/// predictions, which the report flags.
pub fn video_evals(records: &[VideoRecord], preds: &[PredictionRecord]) -> Result<Vec<VideoEval>> {
    let mut by_id: BTreeMap<&str, &PredictionRecord> = BTreeMap::new();
    for p in preds {
        if by_id.insert(p.video_id.as_str(), p).is_some() {
            return Err(Error::Data(format!("duplicate prediction for video {}", p.video_id)));
        }
    }
    records
        .iter()
        .map(|r| {
            let (predicted_moments, clip_scores) = match by_id.get(r.video_id.as_str()) {
                Some(p) => {
                    if !p.saliency.is_empty() && p.saliency.len() != r.clips.len() {
                        return Err(Error::Data(format!(
                            "video {}: {} saliency scores for {} clips",
                            r.video_id,
                            p.saliency.len(),
                            r.clips.len()
                        )));
                    }
                    let moments = p
                        .moments
                        .iter()
                        .map(|m| Ok(ScoredSpan { span: Span::new(m.start, m.end)?, score: m.score }))
                        .collect::<Result<Vec<_>>>()?;
                    (moments, p.saliency.clone())
                }
                None => (Vec::new(), Vec::new()),
            };
            Ok(VideoEval {
                video_id: r.video_id.clone(),
                predicted_moments,
                gt_moments: r.annotations.moments.clone(),
                clip_scores,
                ratings: r.annotations.ratings.clone(),
            })
        })
        .collect()
}

/// Fail with a compatibility error when the dataset's feature widths differ
/// from what the model was built for.
pub fn check_dataset_compatible(model: &ModelConfig, records: &[VideoRecord]) -> Result<()> {
    if let Some(d) = dataset_dims(records)? {
        if (d.video, d.audio, d.text) != (model.d_video, model.d_audio, model.d_text) {
            return Err(Error::Compatibility(format!(
                "dataset widths (video {}, audio {}, text {}) do not match model ({}, {}, {})",
                d.video, d.audio, d.text, model.d_video, model.d_audio, model.d_text
            )));
        }
    }
    Ok(())
}

/// Model predictions for every record, in input order.
pub fn predict_records(trainer: &Trainer, records: &[VideoRecord]) -> Result<Vec<PredictionRecord>> {
    check_dataset_compatible(&trainer.model.config, records)?;
    parallel(|| {
        records
            .par_iter()
            .map(|r| {
                let s = Sample::from_record(r)?;
                let (sal, moments) = trainer.predict(&s)?;
                Ok(PredictionRecord::from_model(&r.video_id, r.duration, sal, &moments))
            })
            .collect()
    })
}

pub fn evaluate_predictions(records: &[VideoRecord], preds: &[PredictionRecord]) -> Result<EvalReport> {
    EvalReport::compute(&video_evals(records, preds)?)
}

pub fn evaluate_model(trainer: &Trainer, records: &[VideoRecord]) -> Result<EvalReport> {
    evaluate_predictions(records, &predict_records(trainer, records)?)
}

/// Predictions that reproduce the ground truth exactly.
pub fn oracle_predictions(records: &[VideoRecord]) -> Vec<PredictionRecord> {
    records
        .iter()
        .map(|r| PredictionRecord {
            video_id: r.video_id.clone(),
            moments: r
                .annotations
                .moments
                .iter()
                .map(|m| PredictedMoment { start: m.start, end: m.end, score: 1.0 })
                .collect(),
            saliency: r.annotations.ratings.iter().map(|&x| x as f64).collect(),
        })
        .collect()
}
