//! Moment-retrieval and highlight-detection evaluation.
//!
//! Conventions:
//!
//! - Predictions are ranked by descending score; ties keep input order.
//! - A ranked prediction matches the unmatched ground truth with the highest
//!   IoU at or above the threshold (lowest index on IoU ties).
//! - Average precision is the non-interpolated area under the step
//!   precision-recall curve: the mean, over ground truths, of precision at the
//!   rank where each one is matched (unmatched ones contribute 0).
//! - Top-5 mAP truncates the clip ranking at rank 5 and normalizes by the
//!   number of positives found there; positives have rating >= 3.
//! - HIT@1 and highlight mAP count a clip as positive only at the top rating.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Top of the 0-4 rating scale ("Very Good").
pub const VERY_GOOD: u8 = 4;
/// Ratings at or above this are positives for top-5 mAP.
pub const TOP5_POSITIVE_RATING: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        let s = Self { start, end };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite()) || self.end <= self.start {
            return Err(Error::Data(format!(
                "degenerate span [{}, {}]",
                self.start, self.end
            )));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSpan {
    pub span: Span,
    pub score: f64,
}

pub fn iou_1d(a: &Span, b: &Span) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.length() + b.length() - inter;
    Ok(inter / union)
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_sweep() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// Indices ordered by descending score, stable on ties.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

fn validate_inputs(preds: &[ScoredSpan], gts: &[Span]) -> Result<()> {
    for p in preds {
        p.span.validate()?;
        if !p.score.is_finite() {
            return Err(Error::Data(format!("non-finite prediction score {}", p.score)));
        }
    }
    for g in gts {
        g.validate()?;
    }
    Ok(())
}

/// For each prediction in rank order, the ground truth it matched.
fn greedy_match(ranked: &[&ScoredSpan], gts: &[Span], thr: f64) -> Result<Vec<Option<usize>>> {
    let mut taken = vec![false; gts.len()];
    let mut out = Vec::with_capacity(ranked.len());
    for p in ranked {
        let mut best: Option<(usize, f64)> = None;
        for (j, gt) in gts.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let iou = iou_1d(&p.span, gt)?;
            if iou >= thr && best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
        }
        out.push(best.map(|(j, _)| j));
    }
    Ok(out)
}

fn ranked<'a>(preds: &'a [ScoredSpan]) -> Vec<&'a ScoredSpan> {
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    rank_by_score(&scores).into_iter().map(|i| &preds[i]).collect()
}

/// Average precision at one IoU threshold; 0 when there are no ground truths.
pub fn average_precision(preds: &[ScoredSpan], gts: &[Span], iou_thr: f64) -> Result<f64> {
    validate_inputs(preds, gts)?;
    if gts.is_empty() {
        return Ok(0.0);
    }
    let ranked = ranked(preds);
    let matched = greedy_match(&ranked, gts, iou_thr)?;
    let mut tp = 0usize;
    let mut area = 0.0;
    for (rank, m) in matched.iter().enumerate() {
        if m.is_some() {
            tp += 1;
            area += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(area / gts.len() as f64)
}

/// Fraction of ground truths matched by the `k` best predictions.
pub fn recall_at_k(preds: &[ScoredSpan], gts: &[Span], k: usize, iou_thr: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("recall@k needs k >= 1".into()));
    }
    validate_inputs(preds, gts)?;
    if gts.is_empty() {
        return Ok(0.0);
    }
    let ranked = ranked(preds);
    let top = &ranked[..k.min(ranked.len())];
    let matched = greedy_match(top, gts, iou_thr)?;
    Ok(matched.iter().filter(|m| m.is_some()).count() as f64 / gts.len() as f64)
}

/// AP averaged over queries, then over thresholds.
pub fn map_over_thresholds(
    preds_per_query: &[Vec<ScoredSpan>],
    gts_per_query: &[Vec<Span>],
    thresholds: &[f64],
) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(Error::Config("threshold list is empty".into()));
    }
    if preds_per_query.len() != gts_per_query.len() {
        return Err(Error::Data(format!(
            "{} prediction lists for {} queries",
            preds_per_query.len(),
            gts_per_query.len()
        )));
    }
    if gts_per_query.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &thr in thresholds {
        let mut per_thr = 0.0;
        for (p, g) in preds_per_query.iter().zip(gts_per_query) {
            per_thr += average_precision(p, g, thr)?;
        }
        total += per_thr / gts_per_query.len() as f64;
    }
    Ok(total / thresholds.len() as f64)
}

fn check_aligned(scores: &[f64], ratings: &[u8]) -> Result<()> {
    if scores.len() != ratings.len() {
        return Err(Error::Data(format!(
            "{} clip scores for {} ratings",
            scores.len(),
            ratings.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Data("non-finite clip score".into()));
    }
    Ok(())
}

/// Truncated AP over the five highest-scored clips of one video.
pub fn top5_ap(scores: &[f64], ratings: &[u8]) -> Result<f64> {
    check_aligned(scores, ratings)?;
    let order = rank_by_score(scores);
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (rank, &clip) in order.iter().take(5).enumerate() {
        if ratings[clip] >= TOP5_POSITIVE_RATING {
            hits += 1;
            acc += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(if hits == 0 { 0.0 } else { acc / hits as f64 })
}

/// Mean of [`top5_ap`] over videos.
pub fn top5_map(scores: &[Vec<f64>], ratings: &[Vec<u8>]) -> Result<f64> {
    mean_over_videos(scores, ratings, top5_ap)
}

/// Full-ranking AP of one video with positives at `min_rating` and above.
pub fn saliency_ap(scores: &[f64], ratings: &[u8], min_rating: u8) -> Result<f64> {
    check_aligned(scores, ratings)?;
    let positives = ratings.iter().filter(|&&r| r >= min_rating).count();
    if positives == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (rank, clip) in rank_by_score(scores).into_iter().enumerate() {
        if ratings[clip] >= min_rating {
            hits += 1;
            acc += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(acc / positives as f64)
}

/// 1.0 when the top-scored clip (lowest index on ties) is rated Very Good.
pub fn hit_at_1_single(scores: &[f64], ratings: &[u8]) -> Result<f64> {
    check_aligned(scores, ratings)?;
    let top = rank_by_score(scores)
        .first()
        .copied()
        .ok_or_else(|| Error::Data("HIT@1 needs at least one clip".into()))?;
    Ok(if ratings[top] == VERY_GOOD { 1.0 } else { 0.0 })
}

/// Fraction of queries whose top clip is rated Very Good.
pub fn hit_at_1(scores: &[Vec<f64>], ratings: &[Vec<u8>]) -> Result<f64> {
    mean_over_videos(scores, ratings, hit_at_1_single)
}

fn mean_over_videos(
    scores: &[Vec<f64>],
    ratings: &[Vec<u8>],
    per_video: impl Fn(&[f64], &[u8]) -> Result<f64>,
) -> Result<f64> {
    if scores.len() != ratings.len() {
        return Err(Error::Data(format!(
            "{} score lists for {} rating lists",
            scores.len(),
            ratings.len()
        )));
    }
    if scores.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (s, r) in scores.iter().zip(ratings) {
        total += per_video(s, r)?;
    }
    Ok(total / scores.len() as f64)
}

/// Everything needed to score one video/query pair.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoEval {
    pub video_id: String,
    pub predicted_moments: Vec<ScoredSpan>,
    pub gt_moments: Vec<Span>,
    pub clip_scores: Vec<f64>,
    pub ratings: Vec<u8>,
}

/// Named metric values in `[0, 1]` plus warnings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Compute the moment-retrieval suite when any video has ground-truth
    /// moments, and the highlight suite when any video has ratings.
    pub fn compute(videos: &[VideoEval]) -> Result<Self> {
        let mut report = Self::default();
        let has_moments = videos.iter().any(|v| !v.gt_moments.is_empty());
        let has_ratings = videos.iter().any(|v| !v.ratings.is_empty());
        if videos.is_empty() {
            report.warnings.push("no_videos".into());
        }
        for v in videos {
            if v.predicted_moments.is_empty() && has_moments {
                report.warnings.push(format!("no_moment_predictions:{}", v.video_id));
            }
            if has_moments && v.gt_moments.is_empty() {
                report.warnings.push(format!("empty_ground_truth:{}", v.video_id));
            }
            if has_ratings && v.clip_scores.is_empty() {
                report.warnings.push(format!("no_clip_scores:{}", v.video_id));
            }
        }

        if has_moments {
            let preds: Vec<Vec<ScoredSpan>> = videos.iter().map(|v| v.predicted_moments.clone()).collect();
            let gts: Vec<Vec<Span>> = videos.iter().map(|v| v.gt_moments.clone()).collect();
            let m = &mut report.metrics;
            m.insert("MR-mAP@0.5".into(), map_over_thresholds(&preds, &gts, &[0.5])?);
            m.insert("MR-mAP@0.75".into(), map_over_thresholds(&preds, &gts, &[0.75])?);
            m.insert("MR-mAP-avg".into(), map_over_thresholds(&preds, &gts, &iou_sweep())?);
            for k in [1usize, 5] {
                for thr in [0.5, 0.7] {
                    let mut total = 0.0;
                    for (p, g) in preds.iter().zip(&gts) {
                        total += recall_at_k(p, g, k, thr)?;
                    }
                    m.insert(format!("MR-R{k}@{thr}"), total / videos.len() as f64);
                }
            }
        }

        if has_ratings {
            let scored: Vec<&VideoEval> = videos.iter().filter(|v| !v.ratings.is_empty()).collect();
            let mut hit = 0.0;
            let mut top5 = 0.0;
            let mut ap = 0.0;
            for v in &scored {
                // missing clip scores count as zero
                if v.clip_scores.is_empty() {
                    continue;
                }
                hit += hit_at_1_single(&v.clip_scores, &v.ratings)?;
                top5 += top5_ap(&v.clip_scores, &v.ratings)?;
                ap += saliency_ap(&v.clip_scores, &v.ratings, VERY_GOOD)?;
            }
            let n = scored.len().max(1) as f64;
            let m = &mut report.metrics;
            m.insert("HD-HIT@1".into(), hit / n);
            m.insert("HD-top5-mAP".into(), top5 / n);
            m.insert("HD-mAP".into(), ap / n);
        }
        Ok(report)
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    /// Sorted keys, four-decimal values, no insignificant whitespace.
    pub fn to_canonical_json(&self) -> String {
        let mut out = String::from("{\"metrics\":{");
        for (i, (k, v)) in self.metrics.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}:{:.4}", json_string(k), v);
        }
        out.push_str("},\"warnings\":[");
        for (i, w) in self.warnings.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&json_string(w));
        }
        out.push_str("]}");
        out
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}
