//! Canonical line-oriented JSON records.
//!
//! Every artifact file in the toolkit is UTF-8, one JSON object per line,
//! with object keys in lexicographic order at every nesting level. Going
//! through `serde_json::Value` gives the ordering for free because its map
//! is a `BTreeMap`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Serializes `value` as a single line of JSON with sorted keys.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    let value =
        serde_json::to_value(value).map_err(|e| Error::Format(format!("serialize: {e}")))?;
    serde_json::to_string(&value).map_err(|e| Error::Format(format!("serialize: {e}")))
}

/// Pretty variant used for single-document files (manifests, models).
pub fn to_canonical_pretty<T: Serialize>(value: &T) -> Result<String> {
    let value =
        serde_json::to_value(value).map_err(|e| Error::Format(format!("serialize: {e}")))?;
    let mut out = serde_json::to_string_pretty(&value)
        .map_err(|e| Error::Format(format!("serialize: {e}")))?;
    out.push('\n');
    Ok(out)
}

pub fn encode_lines<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for record in records {
        out.push_str(&to_canonical_string(record)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses non-blank lines; errors carry the 1-based line number.
pub fn decode_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    decode_lines(&read_text(path)?)
}

pub fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    write_text(path, &encode_lines(records)?)
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}
