use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub text: String,
    /// Passed through untouched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<serde_json::Value>,
}

/// A malformed line skipped in lenient mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Read one JSON object per non-blank line. In strict mode the first bad
/// line is fatal; otherwise bad lines are collected and skipped.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    strict: bool,
) -> Result<(Vec<T>, Vec<LineError>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(record) => records.push(record),
            Err(e) if strict => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                });
            }
            Err(e) => errors.push(LineError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok((records, errors))
}

pub fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Load input documents and reject duplicate ids.
pub fn load_jsonl(path: &Path, strict: bool) -> Result<(Vec<DocumentRecord>, Vec<LineError>)> {
    let (records, errors) = read_jsonl::<DocumentRecord>(path, strict)?;
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "duplicate document id {:?}",
                r.id
            )));
        }
    }
    Ok((records, errors))
}
