//! Pre-extracted clip feature datasets.
//!
//! On disk a dataset is JSON Lines, one [`VideoRecord`] per line, with object
//! keys sorted and floats written in shortest round-trip form.

mod io;
mod sync;
mod synthetic;

pub use io::{load_dataset, parse_dataset, save_dataset, to_canonical_jsonl, validate_dataset};
pub use sync::{synchronize, AlignedClips, TimedFeature};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::Span;
use crate::model::{ModelInput, Targets};
use crate::numerics::Tensor;

/// Default clip length in seconds.
pub const DEFAULT_CLIP_LEN: f64 = 2.0;
/// Highest clip rating.
pub const MAX_RATING: u8 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipFeatures {
    pub t_start: f64,
    pub t_end: f64,
    pub video_feat: Vec<f64>,
    pub audio_feat: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotations {
    pub moments: Vec<Span>,
    /// Per-clip integer ratings, 0-4.
    pub ratings: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub video_id: String,
    pub duration: f64,
    pub clips: Vec<ClipFeatures>,
    pub query_text: String,
    /// `L × d_text` query token features.
    pub query_feat: Vec<Vec<f64>>,
    pub annotations: Annotations,
}

/// Feature widths shared by every record of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureDims {
    pub video: usize,
    pub audio: usize,
    pub text: usize,
}

impl VideoRecord {
    pub fn num_clips(&self) -> usize {
        self.clips.len()
    }

    pub fn dims(&self) -> Option<FeatureDims> {
        Some(FeatureDims {
            video: self.clips.first()?.video_feat.len(),
            audio: self.clips.first()?.audio_feat.len(),
            text: self.query_feat.first()?.len(),
        })
    }

    /// Check every per-record invariant; the error names the offending field.
    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        let fail = |path: String, msg: String| Err((path, msg));
        if self.video_id.is_empty() {
            return fail("video_id".into(), "must not be empty".into());
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return fail("duration".into(), format!("must be positive, got {}", self.duration));
        }
        if self.clips.is_empty() {
            return fail("clips".into(), "at least one clip is required".into());
        }
        let (dv, da) = (self.clips[0].video_feat.len(), self.clips[0].audio_feat.len());
        let mut prev_end = 0.0;
        for (i, c) in self.clips.iter().enumerate() {
            if !(c.t_start.is_finite() && c.t_end.is_finite()) || c.t_end <= c.t_start {
                return fail(format!("clips[{i}].t_end"), format!("t_end {} must exceed t_start {}", c.t_end, c.t_start));
            }
            if c.t_start < prev_end {
                return fail(format!("clips[{i}].t_start"), format!("starts at {} before previous clip ends at {prev_end}", c.t_start));
            }
            if c.t_end > self.duration {
                return fail(format!("clips[{i}].t_end"), format!("{} exceeds duration {}", c.t_end, self.duration));
            }
            if c.video_feat.is_empty() || c.video_feat.len() != dv {
                return fail(format!("clips[{i}].video_feat"), format!("width {} differs from {dv}", c.video_feat.len()));
            }
            if c.audio_feat.is_empty() || c.audio_feat.len() != da {
                return fail(format!("clips[{i}].audio_feat"), format!("width {} differs from {da}", c.audio_feat.len()));
            }
            if c.video_feat.iter().chain(&c.audio_feat).any(|v| !v.is_finite()) {
                return fail(format!("clips[{i}]"), "non-finite feature value".into());
            }
            prev_end = c.t_end;
        }
        let dt = self.query_feat.first().map(Vec::len).unwrap_or(0);
        if dt == 0 {
            return fail("query_feat".into(), "at least one non-empty token is required".into());
        }
        for (i, row) in self.query_feat.iter().enumerate() {
            if row.len() != dt || row.iter().any(|v| !v.is_finite()) {
                return fail(format!("query_feat[{i}]"), format!("expected {dt} finite values"));
            }
        }
        let ann = &self.annotations;
        if ann.ratings.len() != self.clips.len() {
            return fail(
                "annotations.ratings".into(),
                format!("{} ratings for {} clips", ann.ratings.len(), self.clips.len()),
            );
        }
        if let Some(i) = ann.ratings.iter().position(|&r| r > MAX_RATING) {
            return fail(format!("annotations.ratings[{i}]"), format!("rating above {MAX_RATING}"));
        }
        for (i, m) in ann.moments.iter().enumerate() {
            if m.validate().is_err() || m.start < 0.0 || m.end > self.duration {
                return fail(
                    format!("annotations.moments[{i}]"),
                    format!("[{}, {}] is not a span inside [0, {}]", m.start, m.end, self.duration),
                );
            }
        }
        Ok(())
    }

    pub fn video_matrix(&self) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = self.clips.iter().map(|c| c.video_feat.clone()).collect();
        Tensor::from_rows(&rows)
    }

    pub fn audio_matrix(&self) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = self.clips.iter().map(|c| c.audio_feat.clone()).collect();
        Tensor::from_rows(&rows)
    }

    pub fn query_matrix(&self) -> Result<Tensor> {
        Tensor::from_rows(&self.query_feat)
    }

    pub fn targets(&self) -> Result<Targets> {
        let spans: Vec<(f64, f64)> = self.annotations.moments.iter().map(|m| (m.start, m.end)).collect();
        Targets::from_annotations(self.duration, &spans, &self.annotations.ratings)
    }

    pub fn tensors(&self) -> Result<RecordTensors> {
        Ok(RecordTensors {
            video: self.video_matrix()?,
            audio: self.audio_matrix()?,
            query: self.query_matrix()?,
        })
    }
}

/// Owned model inputs for one record.
#[derive(Debug, Clone)]
pub struct RecordTensors {
    pub video: Tensor,
    pub audio: Tensor,
    pub query: Tensor,
}

impl RecordTensors {
    pub fn input(&self) -> ModelInput<'_> {
        ModelInput {
            video: &self.video,
            audio: &self.audio,
            query: &self.query,
        }
    }
}

/// Uniform feature widths of a dataset, or `None` when it is empty.
pub fn dataset_dims(records: &[VideoRecord]) -> Result<Option<FeatureDims>> {
    let mut dims: Option<FeatureDims> = None;
    for r in records {
        let d = r
            .dims()
            .ok_or_else(|| Error::Data(format!("video {}: missing features", r.video_id)))?;
        match dims {
            None => dims = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::Data(format!(
                    "video {}: feature widths {:?} differ from dataset widths {:?}",
                    r.video_id, d, expected
                )))
            }
            _ => {}
        }
    }
    Ok(dims)
}

/// Deterministic bucket in `0..100` derived from the video id.
pub fn id_bucket(video_id: &str) -> u64 {
    let digest = Sha256::digest(video_id.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(head) % 100
}

/// 80/20 train/validation split keyed on the video id hash; order within each
/// side follows the input.
pub fn split_train_val(records: &[VideoRecord]) -> (Vec<VideoRecord>, Vec<VideoRecord>) {
    records.iter().cloned().partition(|r| id_bucket(&r.video_id) < 80)
}
