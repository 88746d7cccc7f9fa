use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::scan::{Document, DocumentId};
use crate::error::{Error, Result};

/// How a corpus file maps onto documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DocMode {
    /// One document per file.
    #[default]
    File,
    /// One document per blank-line-separated block.
    Blocks,
}

impl FromStr for DocMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "file" => Ok(DocMode::File),
            "blocks" | "block" => Ok(DocMode::Blocks),
            other => Err(Error::Config(format!("unknown document mode {other:?} (file|blocks)"))),
        }
    }
}

/// Streams the documents of a corpus directory in sorted path order. Files
/// that cannot be read as UTF-8 come out as `Err` items and do not consume a
/// document id.
pub struct CorpusReader {
    files: VecDeque<PathBuf>,
    mode: DocMode,
    pending: VecDeque<String>,
    next_id: u32,
}

pub fn read_corpus(dir: &Path, mode: DocMode) -> Result<CorpusReader> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(CorpusReader {
        files: files.into(),
        mode,
        pending: VecDeque::new(),
        next_id: 0,
    })
}

fn blocks(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.trim().is_empty() {
                out.push(std::mem::take(&mut current));
            }
            current.clear();
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    if !current.trim().is_empty() {
        out.push(current);
    }
    out
}

impl CorpusReader {
    fn emit(&mut self, text: String) -> Document {
        let id = DocumentId(self.next_id);
        self.next_id += 1;
        Document { id, text }
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(text) = self.pending.pop_front() {
                return Some(Ok(self.emit(text)));
            }
            let path = self.files.pop_front()?;
            let bytes = match fs::read(&path) {
                Ok(b) => b,
                Err(e) => return Some(Err(Error::io(path, e))),
            };
            let text = match String::from_utf8(bytes) {
                Ok(t) => t,
                Err(e) => {
                    return Some(Err(Error::io(
                        path,
                        std::io::Error::new(std::io::ErrorKind::InvalidData, e),
                    )))
                }
            };
            match self.mode {
                DocMode::File => return Some(Ok(self.emit(text))),
                DocMode::Blocks => self.pending.extend(blocks(&text)),
            }
        }
    }
}
