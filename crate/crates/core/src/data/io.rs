use std::path::Path;

use super::{dataset_dims, VideoRecord};
use crate::error::{Error, Result};

/// Read a JSONL dataset. Blank lines are skipped.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<VideoRecord>> {
    let text = crate::error::read_text(path)?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Vec<VideoRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(line);
        let record: VideoRecord = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            line: line_no,
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if let Err((field, msg)) = record.validate() {
            return Err(Error::Parse {
                line: line_no,
                field,
                message: format!("video {}: {msg}", record.video_id),
            });
        }
        records.push(record);
    }
    validate_dataset(&records)?;
    Ok(records)
}

/// Dataset-level checks: uniform feature widths and unique ids.
pub fn validate_dataset(records: &[VideoRecord]) -> Result<()> {
    dataset_dims(records)?;
    let mut seen = std::collections::BTreeSet::new();
    for r in records {
        if !seen.insert(r.video_id.as_str()) {
            return Err(Error::Data(format!("duplicate video_id {}", r.video_id)));
        }
    }
    Ok(())
}

/// One canonical JSON object per line, keys sorted.
pub fn to_canonical_jsonl(records: &[VideoRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        // serde_json::Value objects keep keys sorted
        let value = serde_json::to_value(r).map_err(|e| Error::Data(e.to_string()))?;
        out.push_str(&serde_json::to_string(&value).map_err(|e| Error::Data(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_dataset(path: impl AsRef<Path>, records: &[VideoRecord]) -> Result<()> {
    crate::error::write_file(path, to_canonical_jsonl(records)?)?;
    Ok(())
}
