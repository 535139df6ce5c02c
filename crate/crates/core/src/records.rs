//! Line-delimited JSON files with a provenance header line.
//!
//! Line 1 is `{"header": {...}}`; every following non-empty line is one
//! record. Nothing time-dependent goes into the header, so identical inputs
//! give byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// What the records are: `candidates`, `corpus`, `encoded`, ...
    pub format: String,
    pub schema_version: u32,
    pub tool_version: String,
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_version: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(format: &str, stage: &str) -> Self {
        Self {
            format: format.to_string(),
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            stage: stage.to_string(),
            config_hash: None,
            prompt_version: None,
            seeds: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn with_config_hash(mut self, hash: Option<String>) -> Self {
        self.config_hash = hash;
        self
    }

    pub fn note(mut self, key: &str, value: impl Into<String>) -> Self {
        self.notes.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: Provenance,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line 1: missing or malformed header: {0}")]
    Header(String),
    #[error("expected a `{expected}` file, found `{found}`")]
    WrongFormat { expected: String, found: String },
    #[error("schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    WrongVersion { found: u32 },
    #[error("line {line}: schema mismatch: {message}")]
    Schema { line: usize, message: String },
    #[error("config hash mismatch: input was produced with {found}, current config is {expected} (use --force to override)")]
    ConfigMismatch { expected: String, found: String },
}

impl RecordError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        RecordError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Hex sha256 of `bytes`, truncated to 16 characters.
pub fn short_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))[..16].to_string()
}

pub fn render<T: Serialize>(prov: &Provenance, items: &[T]) -> String {
    let mut out = serde_json::to_string(&HeaderLine {
        header: prov.clone(),
    })
    .expect("header serializes");
    out.push('\n');
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), RecordError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| RecordError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| RecordError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| RecordError::io(path, e))?;
    tmp.flush().map_err(|e| RecordError::io(path, e))?;
    tmp.persist(path).map_err(|e| RecordError::io(path, e.error))?;
    Ok(())
}

pub fn write_records<T: Serialize>(
    path: &Path,
    prov: &Provenance,
    items: &[T],
) -> Result<(), RecordError> {
    write_atomic(path, render(prov, items).as_bytes())
}

/// Parses records from a reader. An empty input has no header and no
/// records. Line numbers in errors are 1-based file lines.
pub fn parse_records<T: DeserializeOwned, R: BufRead>(
    reader: R,
    expected_format: &str,
) -> Result<(Option<Provenance>, Vec<T>), RecordError> {
    let mut header = None;
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| RecordError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let h: HeaderLine =
                serde_json::from_str(&line).map_err(|e| RecordError::Header(e.to_string()))?;
            if h.header.format != expected_format {
                return Err(RecordError::WrongFormat {
                    expected: expected_format.to_string(),
                    found: h.header.format,
                });
            }
            if h.header.schema_version != SCHEMA_VERSION {
                return Err(RecordError::WrongVersion {
                    found: h.header.schema_version,
                });
            }
            header = Some(h.header);
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| RecordError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok((header, items))
}

pub fn read_records<T: DeserializeOwned>(
    path: &Path,
    expected_format: &str,
) -> Result<(Option<Provenance>, Vec<T>), RecordError> {
    let file = fs::File::open(path).map_err(|e| RecordError::io(path, e))?;
    parse_records(BufReader::new(file), expected_format)
}

/// Reads plain line-delimited JSON rows, such as externally produced score
/// files. A leading header line, if present, is returned separately.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<(Option<Provenance>, Vec<T>), RecordError> {
    let file = fs::File::open(path).map_err(|e| RecordError::io(path, e))?;
    parse_rows(BufReader::new(file))
}

pub fn parse_rows<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<(Option<Provenance>, Vec<T>), RecordError> {
    let mut header = None;
    let mut rows = Vec::new();
    let mut first = true;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| RecordError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if std::mem::take(&mut first) {
            if let Ok(h) = serde_json::from_str::<HeaderLine>(&line) {
                header = Some(h.header);
                continue;
            }
        }
        rows.push(serde_json::from_str(&line).map_err(|e| RecordError::Schema {
            line: line_no,
            message: e.to_string(),
        })?);
    }
    Ok((header, rows))
}

/// Format name recorded in the header of `path`, if it has one.
pub fn peek_format(path: &Path) -> Result<Option<String>, RecordError> {
    let file = fs::File::open(path).map_err(|e| RecordError::io(path, e))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| RecordError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        return Ok(serde_json::from_str::<HeaderLine>(&line).ok().map(|h| h.header.format));
    }
    Ok(None)
}

/// Refuses inputs produced under a different configuration unless forced.
/// Inputs without a recorded hash are accepted.
pub fn check_config_hash(
    header: Option<&Provenance>,
    current: &str,
    force: bool,
) -> Result<(), RecordError> {
    match header.and_then(|h| h.config_hash.as_deref()) {
        Some(found) if found != current && !force => Err(RecordError::ConfigMismatch {
            expected: current.to_string(),
            found: found.to_string(),
        }),
        Some(found) if found != current => {
            log::warn!("config hash {found} differs from {current}; continuing because of --force");
            Ok(())
        }
        _ => Ok(()),
    }
}
