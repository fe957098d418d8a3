//! Append-only newline-delimited JSON store for grid entries.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{CellKey, GridEntry};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("run store {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run store {path}, line {line}: {message}")]
    Malformed { path: String, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses every entry. A final line without a trailing newline that fails
/// to parse is treated as an interrupted write and dropped.
fn parse_entries(path: &Path, text: &str) -> Result<(Vec<GridEntry>, usize), StoreError> {
    let mut entries = Vec::new();
    let mut good_len = 0;
    let mut offset = 0;
    for (idx, line) in text.split_inclusive('\n').enumerate() {
        offset += line.len();
        if line.trim().is_empty() {
            good_len = offset;
            continue;
        }
        match serde_json::from_str::<GridEntry>(line) {
            Ok(e) => {
                entries.push(e);
                good_len = offset;
            }
            Err(_) if !line.ends_with('\n') => {
                tracing::warn!(path = %path.display(), line = idx + 1, "dropping truncated trailing record");
            }
            Err(e) => {
                return Err(StoreError::Malformed {
                    path: path.display().to_string(),
                    line: idx + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((entries, good_len))
}

/// Reads all entries; a missing file yields none.
pub fn read_entries(path: impl AsRef<Path>) -> Result<Vec<GridEntry>, StoreError> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_entries(path, &text)?.0)
}

/// Serialized single writer; each entry is flushed as one line.
pub struct RecordStore {
    path: PathBuf,
    existing: HashSet<CellKey>,
    writer: Mutex<BufWriter<File>>,
}

impl RecordStore {
    /// Creates or truncates `path`.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(io_err(&path))?;
        Ok(Self {
            path,
            existing: HashSet::new(),
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    /// Opens `path` for appending, remembering the cells already stored.
    pub fn resume(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let text = if path.exists() {
            std::fs::read_to_string(&path).map_err(io_err(&path))?
        } else {
            String::new()
        };
        let (entries, good_len) = parse_entries(&path, &text)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        if good_len < text.len() {
            file.set_len(good_len as u64).map_err(io_err(&path))?;
        }
        Ok(Self {
            existing: entries.iter().map(GridEntry::key).collect(),
            path,
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, key: &CellKey) -> bool {
        self.existing.contains(key)
    }

    pub fn existing_len(&self) -> usize {
        self.existing.len()
    }

    pub fn append(&self, entry: &GridEntry) -> Result<(), StoreError> {
        let line = serde_json::to_string(entry).expect("grid entry serializes");
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(w, "{line}")
            .and_then(|_| w.flush())
            .map_err(io_err(&self.path))
    }
}
