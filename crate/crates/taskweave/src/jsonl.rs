//! JSON Lines IO: one object per line, UTF-8, newline-delimited.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::PipelineError;

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, PipelineError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| PipelineError::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| PipelineError::Json {
            path: path.display().to_string(),
            line: index + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_jsonl<T: Serialize>(
    path: impl AsRef<Path>,
    records: &[T],
) -> Result<(), PipelineError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| PipelineError::io(parent.display().to_string(), e))?;
    }
    let file = File::create(path).map_err(|e| PipelineError::io(path.display().to_string(), e))?;
    let mut writer = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| PipelineError::Json {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(writer, "{line}").map_err(|e| PipelineError::io(path.display().to_string(), e))?;
    }
    writer
        .flush()
        .map_err(|e| PipelineError::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn write_json_pretty<T: Serialize>(
    path: impl AsRef<Path>,
    value: &T,
) -> Result<(), PipelineError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| PipelineError::io(parent.display().to_string(), e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Json {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    std::fs::write(path, text + "\n").map_err(|e| PipelineError::io(path.display().to_string(), e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, PipelineError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Json {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })
}
