//! Train a small model on synthetic data for a few steps and evaluate it on
//! the held-out split.

use vvids::data::{generate_synthetic, split_train_val, SyntheticSpec};
use vvids::model::ModelConfig;
use vvids::run::{evaluate_model, train_records, Preset, RunConfig};

fn main() -> vvids::Result<()> {
    let records = generate_synthetic(&SyntheticSpec { n_videos: 40, ..SyntheticSpec::default() })?;
    let (train, val) = split_train_val(&records);
    let cfg = RunConfig {
        model: ModelConfig { d_model: 32, ..ModelConfig::default() },
        max_steps: Some(60),
        epochs: 3,
        ..RunConfig::preset(Preset::TvsumLike)
    };
    let outcome = train_records(&cfg, &train, &val)?;
    for log in &outcome.logs {
        println!("epoch {} steps {} train {:.4} val {:?}", log.epoch, log.steps, log.train_loss, log.val_loss);
    }
    let report = evaluate_model(&outcome.trainer, &val)?;
    println!("{}", report.to_canonical_json());
    Ok(())
}
