//! Helpers and independent reference implementations shared by the
//! integration tests.

#![allow(dead_code)]

use rand::Rng;
use vvids::attention::PmAttention;
use vvids::metrics::{ScoredSpan, Span};
use vvids::model::ModelConfig;
use vvids::params::{Linear, ParamStore};
use vvids::rng::{normal, seeded, DetRng};
use vvids::Tensor;

pub fn random_tensor(shape: &[usize], rng: &mut DetRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| normal(rng)).collect()).unwrap()
}

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    random_tensor(shape, &mut seeded(seed))
}

/// Add `scale·N(0,1)` to every parameter so gradients are not dominated by
/// the near-zero initialization.
pub fn jitter(store: &mut ParamStore, scale: f64, seed: u64) {
    let mut rng = seeded(seed);
    for t in store.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += scale * normal(&mut rng));
    }
}

pub fn toy_model_config() -> ModelConfig {
    ModelConfig {
        d_video: 5,
        d_audio: 4,
        d_text: 3,
        d_model: 16,
        num_heads: 2,
        num_queries: 2,
        memory_slots: 3,
        max_clips: 16,
        ..ModelConfig::default()
    }
}

// ---------------------------------------------------------------- attention

fn mat(t: &Tensor) -> Vec<Vec<f64>> {
    let cols = t.last_dim();
    t.data().chunks(cols).map(|r| r.to_vec()).collect()
}

fn affine(x: &[Vec<f64>], w: &Tensor, b: &Tensor) -> Vec<Vec<f64>> {
    let (din, dout) = (w.shape()[0], w.shape()[1]);
    x.iter()
        .map(|row| {
            (0..dout)
                .map(|j| b.data()[j] + (0..din).map(|i| row[i] * w.data()[i * dout + j]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn linear_ref(x: &[Vec<f64>], l: &Linear, store: &ParamStore) -> Vec<Vec<f64>> {
    affine(x, store.get(l.weight), store.get(l.bias))
}

/// Textbook multi-head attention with optional extra key/value rows per
/// head, written with plain loops.
pub fn reference_attention(
    attn: &PmAttention,
    store: &ParamStore,
    queries: &Tensor,
    context: &Tensor,
) -> Vec<Vec<f64>> {
    let heads = attn.cfg.num_heads;
    let dh = attn.cfg.d_model / heads;
    let q = linear_ref(&mat(queries), &attn.q, store);
    let k = linear_ref(&mat(context), &attn.k, store);
    let v = linear_ref(&mat(context), &attn.v, store);
    let mut merged = vec![vec![0.0; attn.cfg.d_model]; q.len()];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let mut keys: Vec<Vec<f64>> = k.iter().map(|r| r[cols.clone()].to_vec()).collect();
        let mut values: Vec<Vec<f64>> = v.iter().map(|r| r[cols.clone()].to_vec()).collect();
        if let Some(mem) = &attn.memory {
            let mk = store.get(mem.keys);
            let mv = store.get(mem.values);
            for s in 0..mem.slots {
                let off = (h * mem.slots + s) * dh;
                keys.push(mk.data()[off..off + dh].to_vec());
                values.push(mv.data()[off..off + dh].to_vec());
            }
        }
        for (i, qrow) in q.iter().enumerate() {
            let qh = &qrow[cols.clone()];
            let scores: Vec<f64> = keys
                .iter()
                .map(|kr| qh.iter().zip(kr).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (j, vr) in values.iter().enumerate() {
                for c in 0..dh {
                    merged[i][h * dh + c] += exps[j] / z * vr[c];
                }
            }
        }
    }
    linear_ref(&merged, &attn.out, store)
}

// ---------------------------------------------------------------- optimizers

pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Scalar-loop Lion over a trajectory of gradients.
pub fn lion_oracle(init: &[f64], grads: &[Vec<f64>], lr: f64, wd: f64, b1: f64, b2: f64) -> Vec<f64> {
    let mut p = init.to_vec();
    let mut m = vec![0.0; p.len()];
    for g in grads {
        for i in 0..p.len() {
            let c = b1 * m[i] + (1.0 - b1) * g[i];
            p[i] = p[i] - lr * (sign(c) + wd * p[i]);
            m[i] = b2 * m[i] + (1.0 - b2) * g[i];
        }
    }
    p
}

/// Scalar-loop AdamW with bias correction and decoupled decay.
#[allow(clippy::too_many_arguments)]
pub fn adamw_oracle(
    init: &[f64],
    grads: &[Vec<f64>],
    lr: f64,
    wd: f64,
    b1: f64,
    b2: f64,
    eps: f64,
) -> Vec<f64> {
    let mut p = init.to_vec();
    let mut m = vec![0.0; p.len()];
    let mut v = vec![0.0; p.len()];
    for (step, g) in grads.iter().enumerate() {
        let t = (step + 1) as i32;
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1.powi(t));
            let vh = v[i] / (1.0 - b2.powi(t));
            p[i] = p[i] - lr * (mh / (vh.sqrt() + eps) + wd * p[i]);
        }
    }
    p
}

// ---------------------------------------------------------------- matching

fn permutations(n: usize, k: usize) -> Vec<Vec<usize>> {
    // all injective maps from 0..k into 0..n
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut used = vec![false; n];
    fn rec(n: usize, k: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(n, k, cur, used, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    rec(n, k, &mut cur, &mut used, &mut out);
    out
}

/// Minimum total cost of a maximum-cardinality assignment by enumeration.
pub fn brute_force_assignment(cost: &Tensor) -> f64 {
    let (r, c) = (cost.shape()[0], cost.shape()[1]);
    let at = |i: usize, j: usize| cost.data()[i * c + j];
    if r <= c {
        permutations(c, r)
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| at(i, j)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    } else {
        permutations(r, c)
            .iter()
            .map(|p| p.iter().enumerate().map(|(j, &i)| at(i, j)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }
}

// ---------------------------------------------------------------- metrics

fn iou(a: &Span, b: &Span) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    inter / ((a.end - a.start) + (b.end - b.start) - inter)
}

/// Prediction indices sorted by (score desc, index asc).
fn order(scores: &[f64]) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = scores.iter().enumerate().map(|(i, &s)| (-s, i)).collect();
    keyed.sort_by(|a, b| a.partial_cmp(b).unwrap());
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Number of ground truths matched when only the first `k` ranked
/// predictions are considered, recomputed from scratch.
fn matched_in_prefix(preds: &[ScoredSpan], gts: &[Span], k: usize, thr: f64) -> usize {
    let idx = order(&preds.iter().map(|p| p.score).collect::<Vec<_>>());
    let mut free: Vec<bool> = vec![true; gts.len()];
    let mut n = 0;
    for &pi in idx.iter().take(k) {
        let mut best = None;
        let mut best_iou = -1.0;
        for gi in 0..gts.len() {
            let v = iou(&preds[pi].span, &gts[gi]);
            if free[gi] && v >= thr && v > best_iou {
                best = Some(gi);
                best_iou = v;
            }
        }
        if let Some(gi) = best {
            free[gi] = false;
            n += 1;
        }
    }
    n
}

/// Sum over cutoffs of precision times the recall increment.
pub fn ap_oracle(preds: &[ScoredSpan], gts: &[Span], thr: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut ap = 0.0;
    let mut prev = 0usize;
    for k in 1..=preds.len() {
        let tp = matched_in_prefix(preds, gts, k, thr);
        if tp > prev {
            ap += (tp as f64 / k as f64) * ((tp - prev) as f64 / gts.len() as f64);
        }
        prev = tp;
    }
    ap
}

pub fn recall_oracle(preds: &[ScoredSpan], gts: &[Span], k: usize, thr: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    matched_in_prefix(preds, gts, k, thr) as f64 / gts.len() as f64
}

pub fn map_oracle(preds: &[Vec<ScoredSpan>], gts: &[Vec<Span>], thresholds: &[f64]) -> f64 {
    let per: Vec<f64> = thresholds
        .iter()
        .map(|&t| preds.iter().zip(gts).map(|(p, g)| ap_oracle(p, g, t)).sum::<f64>() / gts.len() as f64)
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

pub fn top5_oracle(scores: &[f64], ratings: &[u8]) -> f64 {
    let idx = order(scores);
    let top: Vec<bool> = idx.iter().take(5).map(|&i| ratings[i] >= 3).collect();
    let hits = top.iter().filter(|&&h| h).count();
    if hits == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (r, &h) in top.iter().enumerate() {
        if h {
            let above = top[..=r].iter().filter(|&&x| x).count();
            sum += above as f64 / (r + 1) as f64;
        }
    }
    sum / hits as f64
}

pub fn hit1_oracle(scores: &[f64], ratings: &[u8]) -> f64 {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    if ratings[best] == 4 {
        1.0
    } else {
        0.0
    }
}

/// Mean over positives of the precision at the positive's rank.
pub fn saliency_ap_oracle(scores: &[f64], ratings: &[u8], min_rating: u8) -> f64 {
    let idx = order(scores);
    let pos: Vec<usize> = (0..scores.len()).filter(|&i| ratings[i] >= min_rating).collect();
    if pos.is_empty() {
        return 0.0;
    }
    let rank_of = |i: usize| idx.iter().position(|&j| j == i).unwrap();
    pos.iter()
        .map(|&p| {
            let r = rank_of(p);
            let above = pos.iter().filter(|&&q| rank_of(q) <= r).count();
            above as f64 / (r + 1) as f64
        })
        .sum::<f64>()
        / pos.len() as f64
}

/// Random spans on a coarse grid so IoU ties and exact threshold hits occur.
pub fn random_span(rng: &mut DetRng) -> Span {
    let a = rng.random_range(0..10) as f64;
    let len = rng.random_range(1..6) as f64;
    Span::new(a, a + len).unwrap()
}

pub fn random_scored(rng: &mut DetRng, n: usize) -> Vec<ScoredSpan> {
    (0..n)
        .map(|_| ScoredSpan { span: random_span(rng), score: rng.random_range(0..5) as f64 / 4.0 })
        .collect()
}
