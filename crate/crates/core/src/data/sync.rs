//! Aligning independently sampled video and audio feature streams onto one
//! clip grid.

use super::ClipFeatures;
use crate::error::{Error, Result};

/// A feature vector stamped with its time in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedFeature {
    pub time: f64,
    pub feat: Vec<f64>,
}

impl TimedFeature {
    pub fn new(time: f64, feat: Vec<f64>) -> Self {
        Self { time, feat }
    }
}

/// Clip-aligned streams. `kept[i]` is the grid index of output clip `i`,
/// covering `[kept[i]·clip_len, (kept[i]+1)·clip_len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedClips {
    pub clip_len: f64,
    pub kept: Vec<usize>,
    pub video: Vec<Vec<f64>>,
    pub audio: Vec<Vec<f64>>,
}

impl AlignedClips {
    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn into_clips(self) -> Vec<ClipFeatures> {
        let len = self.clip_len;
        self.kept
            .into_iter()
            .zip(self.video)
            .zip(self.audio)
            .map(|((k, video_feat), audio_feat)| ClipFeatures {
                t_start: k as f64 * len,
                t_end: (k + 1) as f64 * len,
                video_feat,
                audio_feat,
            })
            .collect()
    }
}

fn check_stream(stream: &[TimedFeature], name: &str) -> Result<usize> {
    let first = stream
        .first()
        .ok_or_else(|| Error::Sync(format!("{name} stream is empty")))?;
    let width = first.feat.len();
    let mut prev = f64::NEG_INFINITY;
    for (i, f) in stream.iter().enumerate() {
        if !f.time.is_finite() || f.time < 0.0 {
            return Err(Error::Sync(format!("{name}[{i}]: invalid timestamp {}", f.time)));
        }
        if f.time < prev {
            return Err(Error::Sync(format!("{name}[{i}]: timestamps not sorted")));
        }
        if f.feat.len() != width || width == 0 {
            return Err(Error::Sync(format!("{name}[{i}]: feature width {} differs from {width}", f.feat.len())));
        }
        prev = f.time;
    }
    Ok(width)
}

/// Mean-pool each stream into `clip_len` intervals starting at time zero and
/// keep only intervals populated in both streams.
pub fn synchronize(video: &[TimedFeature], audio: &[TimedFeature], clip_len: f64) -> Result<AlignedClips> {
    if !(clip_len > 0.0) || !clip_len.is_finite() {
        return Err(Error::Config(format!("clip length must be positive, got {clip_len}")));
    }
    let dv = check_stream(video, "video")?;
    let da = check_stream(audio, "audio")?;
    let bucket = |t: f64| (t / clip_len).floor() as usize;
    let last = bucket(video.last().unwrap().time).max(bucket(audio.last().unwrap().time));

    let pool = |stream: &[TimedFeature], width: usize| {
        let mut sums = vec![vec![0.0; width]; last + 1];
        let mut counts = vec![0usize; last + 1];
        for f in stream {
            let b = bucket(f.time);
            counts[b] += 1;
            for (s, v) in sums[b].iter_mut().zip(&f.feat) {
                *s += v;
            }
        }
        for (s, &c) in sums.iter_mut().zip(&counts) {
            if c > 0 {
                s.iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        (sums, counts)
    };
    let (v_mean, v_count) = pool(video, dv);
    let (a_mean, a_count) = pool(audio, da);

    let mut out = AlignedClips {
        clip_len,
        kept: Vec::new(),
        video: Vec::new(),
        audio: Vec::new(),
    };
    for k in 0..=last {
        if v_count[k] > 0 && a_count[k] > 0 {
            out.kept.push(k);
            out.video.push(v_mean[k].clone());
            out.audio.push(a_mean[k].clone());
        }
    }
    if out.is_empty() {
        return Err(Error::Sync("no interval holds features from both streams".into()));
    }
    Ok(out)
}
