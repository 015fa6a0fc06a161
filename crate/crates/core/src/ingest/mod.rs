//! Loading and validating the three run inputs: the paper text, the
//! codebook and the dataset, plus an optional hand-supplied reference result.

mod codebook;
mod dataset;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{parse_result, CanonicalResult, SchemaViolation};

pub use codebook::{is_missing_label, parse_codebook, Codebook, CodebookWarning, VariableDoc};
pub use dataset::{
    open_dataset, preview_dataset, DataPreview, DatasetFormat, DatasetHandle,
    DEFAULT_PREVIEW_ROWS,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    MissingInput {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("paper {0} contains no extractable text")]
    EmptyPaper(PathBuf),
    #[error("malformed dataset {path}: {reason}")]
    MalformedDataset { path: PathBuf, reason: String },
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("reference {path}: {violation}")]
    Reference {
        path: PathBuf,
        violation: SchemaViolation,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperBundle {
    pub paper_text: String,
    /// Raw document bytes forwarded as an attachment when the provider
    /// accepts file input. Never parsed locally.
    #[serde(skip)]
    pub paper_bytes: Option<Vec<u8>>,
    pub codebook: Codebook,
    pub dataset: DatasetHandle,
    pub target_id: String,
}

impl PaperBundle {
    pub fn with_document(mut self, bytes: Vec<u8>) -> Self {
        self.paper_bytes = Some(bytes);
        self
    }
}

fn read_text(path: &Path) -> Result<String, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::MissingInput {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

pub fn load_bundle(
    paper_path: &Path,
    codebook_path: &Path,
    data_path: &Path,
    target_id: &str,
) -> Result<PaperBundle, IngestError> {
    let target_id = target_id.trim();
    if target_id.is_empty() {
        return Err(IngestError::InvalidArgument("target id must not be empty".into()));
    }
    let paper_text = read_text(paper_path)?;
    if paper_text.trim().is_empty() {
        return Err(IngestError::EmptyPaper(paper_path.to_path_buf()));
    }
    let codebook = parse_codebook(&read_text(codebook_path)?)?;
    for warning in &codebook.warnings {
        tracing::warn!(%warning, "codebook");
    }
    let dataset = open_dataset(data_path)?;
    Ok(PaperBundle {
        paper_text,
        paper_bytes: None,
        codebook,
        dataset,
        target_id: target_id.to_string(),
    })
}

pub fn load_reference(path: &Path) -> Result<CanonicalResult, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::MissingInput {
        path: path.to_path_buf(),
        source,
    })?;
    parse_result(&bytes).map_err(|violation| IngestError::Reference {
        path: path.to_path_buf(),
        violation,
    })
}
