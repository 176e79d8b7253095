//! Set-prediction training loss.
//!
//! Predictions are matched to ground-truth moments with [`hungarian_match`]
//! on a cost built from the span L1 distance, generalized IoU, and
//! confidence. Matched pairs contribute L1 and `1 - GIoU` terms; every query
//! contributes a confidence BCE (matched = 1); every clip contributes a
//! saliency BCE against its binary highlight label.

use serde::{Deserialize, Serialize};

use super::matching::hungarian_match;
use super::ForwardOutput;
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Graph, Tensor, Var};

/// Ratings at or above this value count as highlight clips (0-4 scale).
pub const POSITIVE_RATING: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub l1: f64,
    pub iou: f64,
    pub cls: f64,
    pub saliency: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 1.0,
            iou: 1.0,
            cls: 1.0,
            saliency: 1.0,
        }
    }
}

/// Supervision for one video/query pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// Ground-truth moments as normalized `(center, width)`.
    pub moments: Vec<(f64, f64)>,
    /// Per-clip binary highlight labels.
    pub saliency: Vec<f64>,
}

impl Targets {
    /// Build targets from spans in seconds and integer clip ratings.
    pub fn from_annotations(duration: f64, spans: &[(f64, f64)], ratings: &[u8]) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::Data(format!("duration must be positive, got {duration}")));
        }
        let moments = spans
            .iter()
            .map(|&(s, e)| {
                let (s, e) = (s / duration, e / duration);
                ((s + e) / 2.0, e - s)
            })
            .collect();
        let saliency = ratings
            .iter()
            .map(|&r| if r >= POSITIVE_RATING { 1.0 } else { 0.0 })
            .collect();
        Ok(Self { moments, saliency })
    }
}

#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: Var,
    pub total_value: f64,
    pub l1: f64,
    pub giou: f64,
    pub cls: f64,
    pub saliency: f64,
    /// `(query, ground_truth)` pairs.
    pub matches: Vec<(usize, usize)>,
}

/// Generalized IoU of two `(center, width)` spans.
pub fn span_giou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (s1, e1) = (a.0 - a.1 / 2.0, a.0 + a.1 / 2.0);
    let (s2, e2) = (b.0 - b.1 / 2.0, b.0 + b.1 / 2.0);
    let inter = (e1.min(e2) - s1.max(s2)).max(0.0);
    let union = a.1 + b.1 - inter;
    let enclose = e1.max(e2) - s1.min(s2);
    inter / union - (enclose - union) / enclose
}

/// `[Nq × G]` matching cost.
pub fn match_cost(
    centers: &[f64],
    widths: &[f64],
    confidences: &[f64],
    targets: &[(f64, f64)],
    w: &LossWeights,
) -> Result<Tensor> {
    let nq = centers.len();
    let ng = targets.len();
    let mut data = Vec::with_capacity(nq * ng);
    for q in 0..nq {
        for &(tc, tw) in targets {
            let l1 = (centers[q] - tc).abs() + (widths[q] - tw).abs();
            let giou = span_giou((centers[q], widths[q]), (tc, tw));
            data.push(w.l1 * l1 + w.iou * (1.0 - giou) - w.cls * confidences[q]);
        }
    }
    Tensor::matrix(nq, ng, data)
}

pub fn compute_loss(
    g: &mut Graph<'_>,
    out: &ForwardOutput,
    targets: &Targets,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let clips = g.value(out.saliency).len();
    if targets.saliency.is_empty() {
        return Err(Error::Data("no clips to supervise".into()));
    }
    if targets.saliency.len() != clips {
        return Err(Error::Data(format!(
            "{} saliency labels for {clips} clips",
            targets.saliency.len()
        )));
    }
    let nq = g.value(out.centers).len();

    let matches = if targets.moments.is_empty() {
        Vec::new()
    } else {
        let probs: Vec<f64> = g
            .value(out.confidence_logits)
            .data()
            .iter()
            .map(|&z| sigmoid(z))
            .collect();
        let cost = match_cost(
            g.value(out.centers).data(),
            g.value(out.widths).data(),
            &probs,
            &targets.moments,
            weights,
        )?;
        hungarian_match(&cost)?
    };

    let mut terms = Vec::new();
    let (mut l1_value, mut giou_value) = (0.0, 0.0);
    if !matches.is_empty() {
        let qidx: Vec<usize> = matches.iter().map(|m| m.0).collect();
        let tc: Vec<f64> = matches.iter().map(|m| targets.moments[m.1].0).collect();
        let tw: Vec<f64> = matches.iter().map(|m| targets.moments[m.1].1).collect();
        let k = matches.len();
        let pc = g.gather(out.centers, &qidx)?;
        let pw = g.gather(out.widths, &qidx)?;
        let tc = g.constant(Tensor::vector(tc)?)?;
        let tw = g.constant(Tensor::vector(tw)?)?;

        let dc = g.sub(pc, tc)?;
        let dc = g.abs(dc)?;
        let dw = g.sub(pw, tw)?;
        let dw = g.abs(dw)?;
        let l1 = g.add(dc, dw)?;
        let l1 = g.mean(l1)?;
        l1_value = g.scalar(l1);
        terms.push(g.scale(l1, weights.l1)?);

        let half_p = g.scale(pw, 0.5)?;
        let ps = g.sub(pc, half_p)?;
        let pe = g.add(pc, half_p)?;
        let half_t = g.scale(tw, 0.5)?;
        let ts = g.sub(tc, half_t)?;
        let te = g.add(tc, half_t)?;
        let zero = g.constant(Tensor::zeros(&[k]))?;
        let lo = g.maximum(ps, ts)?;
        let hi = g.minimum(pe, te)?;
        let overlap = g.sub(hi, lo)?;
        let inter = g.maximum(overlap, zero)?;
        let widths_sum = g.add(pw, tw)?;
        let union = g.sub(widths_sum, inter)?;
        let outer_hi = g.maximum(pe, te)?;
        let outer_lo = g.minimum(ps, ts)?;
        let enclose = g.sub(outer_hi, outer_lo)?;
        let iou = g.div(inter, union)?;
        let slack = g.sub(enclose, union)?;
        let penalty = g.div(slack, enclose)?;
        let giou = g.sub(iou, penalty)?;
        let giou = g.mean(giou)?;
        // 1 - mean GIoU
        let neg = g.scale(giou, -1.0)?;
        let giou_loss = g.add_scalar(neg, 1.0)?;
        giou_value = g.scalar(giou_loss);
        terms.push(g.scale(giou_loss, weights.iou)?);
    }

    let mut cls_targets = vec![0.0; nq];
    for &(q, _) in &matches {
        cls_targets[q] = 1.0;
    }
    let cls = g.bce_with_logits(out.confidence_logits, &cls_targets)?;
    let cls_value = g.scalar(cls);
    terms.push(g.scale(cls, weights.cls)?);

    let sal = g.bce_with_logits(out.saliency, &targets.saliency)?;
    let sal_value = g.scalar(sal);
    terms.push(g.scale(sal, weights.saliency)?);

    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    Ok(LossBreakdown {
        total,
        total_value: g.scalar(total),
        l1: l1_value,
        giou: giou_value,
        cls: cls_value,
        saliency: sal_value,
        matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn giou_identical_and_disjoint() {
        assert!((span_giou((0.5, 0.2), (0.5, 0.2)) - 1.0).abs() < 1e-15);
        // [0, 0.2] vs [0.8, 1.0]: iou 0, enclose 1, union 0.4 -> -0.6
        assert!((span_giou((0.1, 0.2), (0.9, 0.2)) + 0.6).abs() < 1e-12);
    }

    #[test]
    fn targets_from_seconds() {
        let t = Targets::from_annotations(40.0, &[(10.0, 20.0)], &[0, 3, 4, 2]).unwrap();
        assert_eq!(t.moments, vec![(0.375, 0.25)]);
        assert_eq!(t.saliency, vec![0.0, 1.0, 1.0, 0.0]);
    }
}
