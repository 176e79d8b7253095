//! Align a video stream with an audio stream sampled twice as often.

use vvids::data::{synchronize, TimedFeature};

fn main() -> vvids::Result<()> {
    let video: Vec<TimedFeature> = (0..4).map(|i| TimedFeature::new(2.0 * i as f64, vec![i as f64])).collect();
    // audio every second, with a gap between 4s and 6s
    let audio: Vec<TimedFeature> = (0..8)
        .filter(|i| !(4..6).contains(i))
        .map(|i| TimedFeature::new(i as f64, vec![10.0 * i as f64]))
        .collect();
    let aligned = synchronize(&video, &audio, 2.0)?;
    println!("kept intervals {:?}", aligned.kept);
    for (k, (v, a)) in aligned.kept.iter().zip(aligned.video.iter().zip(&aligned.audio)) {
        println!("[{:.0}s, {:.0}s) video {v:?} audio {a:?}", 2.0 * *k as f64, 2.0 * (*k + 1) as f64);
    }
    Ok(())
}
