use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parses one JSON object per non-blank line, tagging errors with the line number.
pub(crate) fn parse_lines<T: DeserializeOwned>(text: &str, source_name: &str) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record =
            serde_json::from_str(line).map_err(|e| Error::parse(source_name, idx + 1, e.to_string()))?;
        out.push((idx + 1, record));
    }
    Ok(out)
}

pub(crate) fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lines(&text, &path.display().to_string())
}

pub(crate) fn format_lines<'a, T: Serialize + 'a>(records: impl IntoIterator<Item = &'a T>) -> String {
    let mut out = String::new();
    for r in records {
        // Serializing plain structs of strings and numbers cannot fail.
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub(crate) fn write_lines<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    fs::write(path, format_lines(records)).map_err(|e| Error::io(path, e))
}
