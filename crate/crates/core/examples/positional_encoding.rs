//! Map clip indices onto a 2D grid and print their sine-cosine encodings.

use vvids::embeddings::{clip_encoding, grid_map, PosEncodingConfig};

fn main() -> vvids::Result<()> {
    let clips = 10;
    let cfg = PosEncodingConfig::for_max_len(16, clips);
    println!("grid width {} for {clips} clips", cfg.grid_width);
    let enc = clip_encoding(clips, &cfg)?;
    for t in 0..clips {
        let (r, c) = grid_map(t, cfg.grid_width);
        let row: Vec<String> = enc.row(t).iter().take(8).map(|v| format!("{v:+.3}")).collect();
        println!("clip {t:2} -> ({r}, {c})  {} ...", row.join(" "));
    }
    Ok(())
}
