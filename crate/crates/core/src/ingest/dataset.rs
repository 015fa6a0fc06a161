use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IngestError;

pub const DEFAULT_PREVIEW_ROWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Comma-separated values with a header row.
    DelimitedText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHandle {
    pub path: PathBuf,
    pub format: DatasetFormat,
    pub columns: Vec<String>,
    pub row_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPreview {
    pub columns: Vec<String>,
    pub head_rows: Vec<Vec<String>>,
    pub k: usize,
}

impl DataPreview {
    /// Renders the preview as comma-separated lines for prompt embedding.
    pub fn to_csv_text(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.head_rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedDataset {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::MissingInput {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn read_header(path: &Path, rdr: &mut csv::Reader<File>) -> Result<Vec<String>, IngestError> {
    let header = rdr
        .headers()
        .map_err(|e| malformed(path, format!("header: {e}")))?;
    let columns: Vec<String> = header.iter().map(|c| c.trim().to_string()).collect();
    if columns.is_empty() || columns.iter().all(String::is_empty) {
        return Err(malformed(path, "missing header row"));
    }
    let mut seen = HashSet::new();
    for c in &columns {
        if c.is_empty() {
            return Err(malformed(path, "empty column name in header"));
        }
        if !seen.insert(c.as_str()) {
            return Err(malformed(path, format!("duplicate column {c:?}")));
        }
    }
    Ok(columns)
}

/// Parses the header and counts data rows. Ragged rows are rejected.
pub fn open_dataset(path: &Path) -> Result<DatasetHandle, IngestError> {
    let mut rdr = reader(path)?;
    let columns = read_header(path, &mut rdr)?;
    let mut row_count = 0;
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => row_count += 1,
            Ok(false) => break,
            Err(e) => return Err(malformed(path, format!("row {}: {e}", row_count + 1))),
        }
    }
    Ok(DatasetHandle {
        path: path.to_path_buf(),
        format: DatasetFormat::DelimitedText,
        columns,
        row_count,
    })
}

/// First `k` data rows, values exactly as they appear in the file.
pub fn preview_dataset(handle: &DatasetHandle, k: usize) -> Result<DataPreview, IngestError> {
    if k == 0 {
        return Err(IngestError::InvalidArgument(
            "preview depth must be at least 1".into(),
        ));
    }
    let mut rdr = reader(&handle.path)?;
    let columns = read_header(&handle.path, &mut rdr)?;
    let mut head_rows = Vec::with_capacity(k);
    for (i, record) in rdr.records().take(k).enumerate() {
        let record = record.map_err(|e| malformed(&handle.path, format!("row {}: {e}", i + 1)))?;
        head_rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(DataPreview {
        columns,
        k: head_rows.len(),
        head_rows,
    })
}
