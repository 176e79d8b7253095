use proptest::prelude::*;
use vvids::data::{
    generate_synthetic, load_dataset, parse_dataset, save_dataset, split_train_val, synchronize, to_canonical_jsonl,
    SyntheticSpec, TimedFeature,
};

fn small(seed: u64) -> SyntheticSpec {
    SyntheticSpec { seed, n_videos: 12, ..SyntheticSpec::default() }
}

#[test]
fn save_then_load_is_byte_exact_identity() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.jsonl");
    let records = generate_synthetic(&small(3)).unwrap();
    save_dataset(&path, &records).unwrap();
    let loaded = load_dataset(&path).unwrap();
    assert_eq!(loaded, records);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(to_canonical_jsonl(&loaded).unwrap().as_bytes(), &bytes[..]);
}

#[test]
fn empty_file_is_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    assert!(load_dataset(&path).unwrap().is_empty());
    assert!(parse_dataset("\n\n").unwrap().is_empty());
}

#[test]
fn overlapping_clips_are_rejected_with_field_path() {
    let mut records = generate_synthetic(&small(0)).unwrap();
    records[0].clips[2].t_start -= 1.0;
    let text = to_canonical_jsonl(&records).unwrap();
    match parse_dataset(&text) {
        Err(vvids::Error::Parse { line, field, message }) => {
            assert_eq!(line, 1);
            assert_eq!(field, "clips[2].t_start");
            assert!(message.contains(&records[0].video_id));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn schema_violation_names_line_and_field() {
    let records = generate_synthetic(&small(0)).unwrap();
    let text = to_canonical_jsonl(&records[..2]).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let broken = lines[1].replacen("\"duration\":40.0", "\"duration\":\"long\"", 1);
    assert_ne!(broken, lines[1]);
    let text = format!("{}\n{broken}\n", lines[0]);
    match parse_dataset(&text) {
        Err(vvids::Error::Parse { line, field, .. }) => assert_eq!((line, field.as_str()), (2, "duration")),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn mixed_feature_widths_are_data_error() {
    let a = generate_synthetic(&small(0)).unwrap();
    let b = generate_synthetic(&SyntheticSpec { d_video: 7, seed: 1, ..small(1) }).unwrap();
    let text = to_canonical_jsonl(&[a[0].clone(), b[0].clone()]).unwrap();
    assert!(matches!(parse_dataset(&text), Err(vvids::Error::Data(_))));
}

fn stream(times: &[f64], vals: &[f64]) -> Vec<TimedFeature> {
    times.iter().zip(vals).map(|(&t, &v)| TimedFeature::new(t, vec![v, -v])).collect()
}

#[test]
fn identical_grids_align_without_drops() {
    let times = [0.0, 2.0, 4.0, 6.0];
    let v = stream(&times, &[1.0, 2.0, 3.0, 4.0]);
    let a = stream(&times, &[5.0, 6.0, 7.0, 8.0]);
    let s = synchronize(&v, &a, 2.0).unwrap();
    assert_eq!(s.kept, vec![0, 1, 2, 3]);
    assert_eq!(s.video, v.iter().map(|f| f.feat.clone()).collect::<Vec<_>>());
    assert_eq!(s.audio, a.iter().map(|f| f.feat.clone()).collect::<Vec<_>>());
}

#[test]
fn double_rate_audio_is_mean_pooled_in_pairs() {
    let v = stream(&[0.0, 2.0, 4.0, 6.0], &[1.0, 2.0, 3.0, 4.0]);
    let a = stream(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], &[1.0, 3.0, 10.0, 20.0, -4.0, 4.0, 0.5, 0.5]);
    let s = synchronize(&v, &a, 2.0).unwrap();
    assert_eq!(s.kept, vec![0, 1, 2, 3]);
    let means: Vec<f64> = s.audio.iter().map(|f| f[0]).collect();
    assert_eq!(means, vec![2.0, 15.0, 0.0, 0.5]);
    assert_eq!(s.audio[1][1], -15.0);
}

#[test]
fn gaps_are_dropped_from_both_streams() {
    let v = stream(&[0.0, 2.0, 6.0], &[1.0, 2.0, 4.0]);
    let a = stream(&[0.0, 4.0, 6.0], &[5.0, 7.0, 8.0]);
    let s = synchronize(&v, &a, 2.0).unwrap();
    assert_eq!(s.kept, vec![0, 3]);
    assert_eq!(s.video.len(), s.audio.len());
    let clips = s.into_clips();
    assert_eq!((clips[1].t_start, clips[1].t_end), (6.0, 8.0));
}

#[test]
fn disjoint_ranges_are_sync_error() {
    let v = stream(&[0.0, 2.0], &[1.0, 2.0]);
    let a = stream(&[10.0, 12.0], &[1.0, 2.0]);
    assert!(matches!(synchronize(&v, &a, 2.0), Err(vvids::Error::Sync(_))));
    assert!(matches!(synchronize(&[], &a, 2.0), Err(vvids::Error::Sync(_))));
}

proptest! {
    #[test]
    fn synchronized_streams_have_equal_lengths_and_populated_intervals(
        vt in proptest::collection::vec(0.0f64..30.0, 1..20),
        at in proptest::collection::vec(0.0f64..30.0, 1..20),
        clip_len in 0.5f64..4.0,
    ) {
        let mut vt = vt;
        let mut at = at;
        vt.sort_by(f64::total_cmp);
        at.sort_by(f64::total_cmp);
        let v: Vec<_> = vt.iter().map(|&t| TimedFeature::new(t, vec![t])).collect();
        let a: Vec<_> = at.iter().map(|&t| TimedFeature::new(t, vec![t])).collect();
        if let Ok(s) = synchronize(&v, &a, clip_len) {
            prop_assert_eq!(s.video.len(), s.audio.len());
            prop_assert_eq!(s.video.len(), s.kept.len());
            let bucket = |t: f64| (t / clip_len).floor() as usize;
            for &k in &s.kept {
                prop_assert!(vt.iter().any(|&t| bucket(t) == k));
                prop_assert!(at.iter().any(|&t| bucket(t) == k));
            }
        } else {
            let vb: Vec<usize> = vt.iter().map(|&t| (t / clip_len).floor() as usize).collect();
            prop_assert!(at.iter().all(|&t| !vb.contains(&((t / clip_len).floor() as usize))));
        }
    }
}

#[test]
fn synthetic_is_deterministic() {
    let a = to_canonical_jsonl(&generate_synthetic(&small(9)).unwrap()).unwrap();
    let b = to_canonical_jsonl(&generate_synthetic(&small(9)).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn four_clip_moment_gives_exactly_four_top_ratings() {
    let records = generate_synthetic(&SyntheticSpec { n_videos: 200, ..SyntheticSpec::default() }).unwrap();
    let mut seen = 0;
    for r in &records {
        let m = &r.annotations.moments[0];
        if m.end - m.start == 4.0 * 2.0 {
            seen += 1;
            assert_eq!(r.annotations.ratings.iter().filter(|&&x| x == 4).count(), 4);
        }
    }
    assert!(seen > 0);
}

#[test]
fn ratings_agree_with_planted_moments() {
    for seed in 0..5 {
        let spec = SyntheticSpec { moments_per_video: 1 + seed as usize % 3, ..small(seed) };
        for r in generate_synthetic(&spec).unwrap() {
            for (c, &rating) in r.clips.iter().zip(&r.annotations.ratings) {
                let mid = (c.t_start + c.t_end) / 2.0;
                let inside = r.annotations.moments.iter().any(|m| m.start <= mid && mid <= m.end);
                assert_eq!(rating == 4, inside);
                assert!(rating == 4 || rating <= 1);
            }
        }
    }
}

#[test]
fn too_many_moments_is_spec_error() {
    let spec = SyntheticSpec { clips: 3, moments_per_video: 4, ..small(0) };
    assert!(matches!(generate_synthetic(&spec), Err(vvids::Error::Config(_))));
}

#[test]
fn split_is_deterministic_and_roughly_eighty_twenty() {
    let records = generate_synthetic(&SyntheticSpec { n_videos: 200, ..SyntheticSpec::default() }).unwrap();
    let (train, val) = split_train_val(&records);
    assert_eq!(train.len() + val.len(), 200);
    assert!((140..=180).contains(&train.len()), "{}", train.len());
    let (again, _) = split_train_val(&records);
    assert_eq!(train, again);
}
