//! Line-delimited transcript of model exchanges, one JSON object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GatewayError, RoleTag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub index: usize,
    pub role_tag: RoleTag,
    pub request_digest: String,
    pub response_text: String,
}

fn transcript_err(path: &Path, message: impl Into<String>) -> GatewayError {
    GatewayError::Transcript {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Reads every entry and checks that indices run 0, 1, 2, ...
pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, GatewayError> {
    let file = File::open(path).map_err(|e| transcript_err(path, e.to_string()))?;
    let mut entries = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| transcript_err(path, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry = serde_json::from_str(&line)
            .map_err(|e| transcript_err(path, format!("line {}: {e}", lineno + 1)))?;
        if entry.index != entries.len() {
            return Err(transcript_err(
                path,
                format!("line {}: expected index {}, found {}", lineno + 1, entries.len(), entry.index),
            ));
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Appends entries as they happen so a crash loses at most the call in flight.
#[derive(Debug)]
pub struct TranscriptWriter {
    path: PathBuf,
    file: File,
    next_index: usize,
}

impl TranscriptWriter {
    pub fn create(path: &Path) -> Result<Self, GatewayError> {
        let file = File::create(path).map_err(|e| transcript_err(path, e.to_string()))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            next_index: 0,
        })
    }

    /// Reopens an existing transcript keeping only its first `keep` entries.
    pub fn resume(path: &Path, keep: usize) -> Result<Self, GatewayError> {
        let entries = if path.exists() { read_transcript(path)? } else { Vec::new() };
        if entries.len() < keep {
            return Err(transcript_err(
                path,
                format!("holds {} entries, run consumed {keep}", entries.len()),
            ));
        }
        let mut writer = Self::create(path)?;
        for entry in entries.into_iter().take(keep) {
            writer.write_line(&entry)?;
        }
        writer.next_index = keep;
        Ok(writer)
    }

    fn write_line(&mut self, entry: &TranscriptEntry) -> Result<(), GatewayError> {
        let mut line = serde_json::to_string(entry).expect("entries serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| transcript_err(&self.path, e.to_string()))
    }

    pub fn append(
        &mut self,
        role_tag: RoleTag,
        request_digest: String,
        response_text: String,
    ) -> Result<(), GatewayError> {
        let entry = TranscriptEntry {
            index: self.next_index,
            role_tag,
            request_digest,
            response_text,
        };
        self.write_line(&entry)?;
        self.next_index += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.next_index
    }

    pub fn is_empty(&self) -> bool {
        self.next_index == 0
    }
}
