//! Step 1: turn the paper, codebook and dataset into a target summary, an
//! instruction summary and (unless the user supplied one) a structured
//! transcription of the published result.

mod instructions;
mod markdown;
mod summary;

use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{parse_result, serialize, CanonicalResult, SchemaViolation};
use crate::ingest::PaperBundle;
use crate::llm::{GatewayError, LlmSession, PromptRequest, RoleTag};
use crate::prompts;

pub use instructions::{parse_instructions, InstructionSummary, MissingRule, VariableMapping};
pub use summary::{parse_summary, Checklist, ModelSpec, TargetKind, TargetSummary};

pub const SUMMARY_FILE: &str = "summary.md";
pub const INSTRUCTIONS_FILE: &str = "instructions.md";
pub const REFERENCE_FILE: &str = "reference.json";
pub const REFERENCE_RAW_FILE: &str = "reference.raw.txt";
pub const REFERENCE_REPAIR_RAW_FILE: &str = "reference.repair.raw.txt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum SpecWarning {
    UnparseableSummary,
    KindConflict { stated: TargetKind, reference: TargetKind },
    UnknownColumn { concept: String, column: String },
}

impl std::fmt::Display for SpecWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpecWarning::UnparseableSummary => {
                write!(f, "summary has no recognizable sections; narrative kept, checklist empty")
            }
            SpecWarning::KindConflict { stated, reference } => {
                write!(f, "summary states kind {stated:?} but the reference is {reference:?}")
            }
            SpecWarning::UnknownColumn { concept, column } => {
                write!(f, "mapping for {concept:?} references column {column} which is not in the dataset")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum SpecGenError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("instruction summary maps no variables to dataset columns")]
    EmptyMapping,
    #[error("transcribed reference: {0}")]
    Schema(SchemaViolation),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    User,
    Transcribed { repaired: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecOutputs {
    pub summary: TargetSummary,
    pub instructions: InstructionSummary,
    pub reference: CanonicalResult,
    pub reference_source: ReferenceSource,
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), SpecGenError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|source| SpecGenError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn summary_request(bundle: &PaperBundle) -> PromptRequest {
    let user = format!("TARGET: {}\n\nPAPER\n{}", bundle.target_id, bundle.paper_text);
    PromptRequest::new(RoleTag::Summary, prompts::SUMMARY.text, user).with_attachment(bundle.paper_bytes.clone())
}

pub fn instruction_request(bundle: &PaperBundle, summary: &TargetSummary) -> PromptRequest {
    let user = format!(
        "TARGET: {}\n\nANALYSIS SUMMARY\n{}\n\nCODEBOOK\n{}\nDATASET COLUMNS\n{}\n",
        bundle.target_id,
        summary.narrative.trim_end(),
        bundle.codebook.to_text(),
        bundle.dataset.columns.join(", ")
    );
    PromptRequest::new(RoleTag::Instruction, prompts::INSTRUCTION.text, user)
}

pub fn transcription_request(bundle: &PaperBundle) -> PromptRequest {
    let user = format!("TARGET: {}\n\nPAPER\n{}", bundle.target_id, bundle.paper_text);
    PromptRequest::new(RoleTag::Transcription, prompts::TRANSCRIPTION.text, user)
        .with_attachment(bundle.paper_bytes.clone())
}

fn repair_request(bundle: &PaperBundle, previous: &str, violation: &SchemaViolation) -> PromptRequest {
    let system = prompts::REPAIR.text.replace("{{problem}}", &violation.to_string());
    let user = format!(
        "TARGET: {}\n\nPREVIOUS REPLY\n{}\n",
        bundle.target_id,
        previous.trim_end()
    );
    PromptRequest::new(RoleTag::Transcription, system, user)
}

/// The JSON document in a reply: the last fenced block if there is one,
/// otherwise the whole text.
pub fn json_payload(text: &str) -> &str {
    let re = Regex::new(r"(?s)```[A-Za-z]*[ \t]*\r?\n(.*?)```").expect("valid regex");
    match re.captures_iter(text).last() {
        Some(c) => c.get(1).expect("group").as_str(),
        None => text.trim(),
    }
}

pub fn summarize_target(
    session: &mut LlmSession,
    bundle: &PaperBundle,
    reference_kind: Option<crate::canonical::ResultKind>,
    out_dir: &Path,
) -> Result<TargetSummary, SpecGenError> {
    let reply = session.complete(&summary_request(bundle))?;
    write(out_dir, SUMMARY_FILE, reply.text.as_bytes())?;
    let summary = parse_summary(&bundle.target_id, &reply.text, reference_kind);
    for w in &summary.warnings {
        tracing::warn!(warning = %w, "summary");
    }
    Ok(summary)
}

pub fn build_instructions(
    session: &mut LlmSession,
    bundle: &PaperBundle,
    summary: &TargetSummary,
    out_dir: &Path,
) -> Result<InstructionSummary, SpecGenError> {
    let reply = session.complete(&instruction_request(bundle, summary))?;
    write(out_dir, INSTRUCTIONS_FILE, reply.text.as_bytes())?;
    let instructions = parse_instructions(&reply.text, &bundle.dataset.columns);
    if instructions.variable_map.is_empty() {
        return Err(SpecGenError::EmptyMapping);
    }
    for w in &instructions.warnings {
        tracing::warn!(warning = %w, "instructions");
    }
    Ok(instructions)
}

/// One transcription call plus at most one repair re-prompt. Raw replies
/// are written before parsing.
pub fn transcribe_reference(
    session: &mut LlmSession,
    bundle: &PaperBundle,
    out_dir: &Path,
) -> Result<(CanonicalResult, bool), SpecGenError> {
    let reply = session.complete(&transcription_request(bundle))?;
    write(out_dir, REFERENCE_RAW_FILE, reply.text.as_bytes())?;
    let violation = match parse_result(json_payload(&reply.text).as_bytes()) {
        Ok(r) => return Ok((r, false)),
        Err(v) => v,
    };
    tracing::warn!(%violation, "transcription failed schema, asking once for a repair");
    let repaired = session.complete(&repair_request(bundle, &reply.text, &violation))?;
    write(out_dir, REFERENCE_REPAIR_RAW_FILE, repaired.text.as_bytes())?;
    parse_result(json_payload(&repaired.text).as_bytes())
        .map(|r| (r, true))
        .map_err(SpecGenError::Schema)
}

/// Runs all of Step 1 and persists summary.md, instructions.md and
/// reference.json under `out_dir`. A user reference skips transcription.
pub fn generate(
    session: &mut LlmSession,
    bundle: &PaperBundle,
    user_reference: Option<CanonicalResult>,
    out_dir: &Path,
) -> Result<SpecOutputs, SpecGenError> {
    let reference_kind = user_reference.as_ref().map(|r| r.kind());
    let summary = summarize_target(session, bundle, reference_kind, out_dir)?;
    let instructions = build_instructions(session, bundle, &summary, out_dir)?;
    let (reference, reference_source) = match user_reference {
        Some(r) => (r, ReferenceSource::User),
        None => {
            let (r, repaired) = transcribe_reference(session, bundle, out_dir)?;
            (r, ReferenceSource::Transcribed { repaired })
        }
    };
    write(out_dir, REFERENCE_FILE, &serialize(&reference))?;
    Ok(SpecOutputs {
        summary,
        instructions,
        reference,
        reference_source,
    })
}

/// Rebuilds Step 1 outputs from a run directory without any model calls.
/// `user_reference` must match the original run so the summary kind is
/// derived the same way.
pub fn load_persisted(
    bundle: &PaperBundle,
    out_dir: &Path,
    user_reference: bool,
) -> std::io::Result<(TargetSummary, InstructionSummary, CanonicalResult)> {
    let reference_bytes = std::fs::read(out_dir.join(REFERENCE_FILE))?;
    let reference = parse_result(&reference_bytes)
        .map_err(|v| std::io::Error::new(std::io::ErrorKind::InvalidData, v.to_string()))?;
    let summary_text = std::fs::read_to_string(out_dir.join(SUMMARY_FILE))?;
    let instruction_text = std::fs::read_to_string(out_dir.join(INSTRUCTIONS_FILE))?;
    Ok((
        parse_summary(&bundle.target_id, &summary_text, user_reference.then(|| reference.kind())),
        parse_instructions(&instruction_text, &bundle.dataset.columns),
        reference,
    ))
}
