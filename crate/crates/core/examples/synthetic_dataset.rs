//! Generate a planted-moment dataset, save it as JSONL and load it back.

use vvids::data::{generate_synthetic, load_dataset, save_dataset, split_train_val, SyntheticSpec};

fn main() -> vvids::Result<()> {
    let spec = SyntheticSpec { n_videos: 20, clips: 20, ..SyntheticSpec::default() };
    let records = generate_synthetic(&spec)?;
    let path = std::env::temp_dir().join("vvids_synthetic_example.jsonl");
    save_dataset(&path, &records)?;
    let loaded = load_dataset(&path)?;
    assert_eq!(loaded, records);
    let (train, val) = split_train_val(&loaded);
    println!("{} videos written to {} ({} train, {} val)", loaded.len(), path.display(), train.len(), val.len());
    let r = &loaded[0];
    let ratings: String = r.annotations.ratings.iter().map(|x| x.to_string()).collect();
    println!("{}: moments {:?}", r.video_id, r.annotations.moments.iter().map(|m| (m.start, m.end)).collect::<Vec<_>>());
    println!("ratings {ratings}");
    std::fs::remove_file(&path)?;
    Ok(())
}
