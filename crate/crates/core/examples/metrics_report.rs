//! Score hand-made moment and highlight predictions and print the report.

use vvids::metrics::{EvalReport, ScoredSpan, Span, VideoEval};

fn main() -> vvids::Result<()> {
    let videos = vec![
        VideoEval {
            video_id: "a".into(),
            predicted_moments: vec![
                ScoredSpan { span: Span::new(10.0, 20.0)?, score: 0.9 },
                ScoredSpan { span: Span::new(30.0, 40.0)?, score: 0.4 },
            ],
            gt_moments: vec![Span::new(12.0, 20.0)?],
            clip_scores: vec![0.1, 0.8, 0.9, 0.2, 0.3],
            ratings: vec![0, 4, 3, 1, 0],
        },
        VideoEval {
            video_id: "b".into(),
            predicted_moments: vec![ScoredSpan { span: Span::new(0.0, 6.0)?, score: 0.7 }],
            gt_moments: vec![Span::new(20.0, 30.0)?],
            clip_scores: vec![0.5, 0.4, 0.9, 0.1],
            ratings: vec![4, 2, 1, 0],
        },
    ];
    let report = EvalReport::compute(&videos)?;
    for (k, v) in &report.metrics {
        println!("{k:14} {v:.4}");
    }
    println!("{}", report.to_canonical_json());
    Ok(())
}
