//! Step 2 prompt assembly: the code-generation request for attempt i with
//! feedback from the best and the previous attempt, and extraction of the
//! code block from the reply.

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::DiscrepancyReport;
use crate::ingest::DataPreview;
use crate::llm::{PromptRequest, RoleTag};
use crate::prompts;
use crate::sandbox::ErrorReport;
use crate::spec_gen::{InstructionSummary, TargetSummary};

pub const ENTRYPOINT: &str = "run_analysis";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Feedback {
    Discrepancy(DiscrepancyReport),
    Error(ErrorReport),
}

impl Feedback {
    fn render(&self) -> String {
        match self {
            Feedback::Discrepancy(r) => format!("DISCREPANCY REPORT\n{}", r.to_markdown()),
            Feedback::Error(e) => format!("ERROR REPORT\n{}", e.to_text()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorAttempt {
    pub attempt_index: usize,
    /// None when no code could be extracted from the reply.
    pub source: Option<String>,
    pub score: Option<u8>,
    pub feedback: Feedback,
}

#[derive(Debug, Clone)]
pub struct AttemptContext<'a> {
    pub attempt_index: usize,
    pub target_id: &'a str,
    pub summary: &'a TargetSummary,
    pub instructions: &'a InstructionSummary,
    pub preview: &'a DataPreview,
    pub row_count: usize,
    pub best: Option<&'a PriorAttempt>,
    pub previous: Option<&'a PriorAttempt>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodeLoopError {
    #[error("invalid attempt context: {0}")]
    InvalidContext(String),
    #[error("reply contains no fenced code block defining {ENTRYPOINT}")]
    NoCodeFound,
}

impl AttemptContext<'_> {
    pub fn validate(&self) -> Result<(), CodeLoopError> {
        let bad = |m: &str| Err(CodeLoopError::InvalidContext(m.to_string()));
        if self.attempt_index == 0 {
            return bad("attempt index starts at 1");
        }
        if self.attempt_index == 1 && (self.best.is_some() || self.previous.is_some()) {
            return bad("first attempt has no prior attempts");
        }
        if self.attempt_index > 1 && self.previous.is_none() {
            return bad("later attempts need the previous attempt");
        }
        if let Some(b) = self.best {
            if b.score.is_none() || b.source.is_none() || !matches!(b.feedback, Feedback::Discrepancy(_)) {
                return bad("best attempt must be a scored attempt");
            }
            if b.attempt_index >= self.attempt_index {
                return bad("best attempt must precede the current one");
            }
        }
        if let Some(p) = self.previous {
            if p.attempt_index + 1 != self.attempt_index {
                return bad("previous attempt must be attempt i-1");
            }
        }
        Ok(())
    }
}

fn code_block(source: Option<&str>) -> String {
    match source {
        Some(code) => format!("```python\n{code}\n```\n"),
        None => "(no code could be extracted from the reply)\n".to_string(),
    }
}

fn attempt_section(title: &str, a: &PriorAttempt, note: Option<&str>) -> String {
    let mut s = match a.score {
        Some(score) => format!("{title} (attempt {}, score {score}/100)\n", a.attempt_index),
        None => format!("{title} (attempt {}, failed)\n", a.attempt_index),
    };
    if let Some(note) = note {
        s.push_str(note);
        s.push('\n');
    }
    s.push_str(&code_block(a.source.as_deref()));
    s.push_str(&a.feedback.render());
    s
}

pub fn build_codegen_prompt(ctx: &AttemptContext<'_>) -> Result<PromptRequest, CodeLoopError> {
    ctx.validate()?;
    let mut u = String::new();
    u.push_str(&format!(
        "TARGET: {} ({})\nATTEMPT: {}\n\n",
        ctx.target_id, ctx.summary.kind.result_kind(), ctx.attempt_index
    ));
    u.push_str("ANALYSIS SUMMARY\n");
    u.push_str(ctx.summary.narrative.trim_end());
    u.push_str("\n\nINSTRUCTION SUMMARY\n");
    u.push_str(ctx.instructions.narrative.trim_end());
    u.push_str("\n\n");
    if ctx.attempt_index == 1 && !ctx.instructions.warnings.is_empty() {
        u.push_str("MAPPING WARNINGS\n");
        for w in &ctx.instructions.warnings {
            u.push_str(&format!("- {w}\n"));
        }
        u.push('\n');
    }
    u.push_str(&format!(
        "DATASET PREVIEW (first {} of {} rows)\n{}\n",
        ctx.preview.head_rows.len(),
        ctx.row_count,
        ctx.preview.to_csv_text()
    ));
    match (ctx.best, ctx.previous) {
        (Some(b), Some(p)) if b.attempt_index == p.attempt_index => {
            u.push_str(&attempt_section(
                "BEST ATTEMPT",
                b,
                Some("This is also the previous attempt; BEST and PREVIOUS sections are merged."),
            ));
            u.push('\n');
        }
        (best, previous) => {
            if let Some(b) = best {
                u.push_str(&attempt_section("BEST ATTEMPT", b, None));
                u.push('\n');
            }
            if let Some(p) = previous {
                u.push_str(&attempt_section("PREVIOUS ATTEMPT", p, None));
                u.push('\n');
            }
        }
    }
    if ctx.attempt_index == 1 {
        u.push_str(&format!("Write the code defining {ENTRYPOINT}.\n"));
    } else {
        u.push_str(&format!(
            "Revise the code to remove the discrepancies and errors above. Reply with the complete code defining {ENTRYPOINT}.\n"
        ));
    }
    Ok(PromptRequest::new(RoleTag::Codegen, prompts::CODEGEN.text, u))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceArtifact {
    pub code_text: String,
    pub entrypoint_name: String,
    pub attempt_index: usize,
}

/// The last fenced block that mentions the entrypoint, without its fences.
pub fn extract_code(completion: &str, attempt_index: usize) -> Result<SourceArtifact, CodeLoopError> {
    let re = Regex::new(r"(?ms)^[ \t]*```[^\n]*\n(.*?)^[ \t]*```").expect("valid regex");
    re.captures_iter(completion)
        .filter_map(|c| c.get(1).map(|m| m.as_str()))
        .filter(|block| block.contains(ENTRYPOINT))
        .last()
        .map(|block| SourceArtifact {
            code_text: block.trim_end_matches(['\n', '\r']).to_string(),
            entrypoint_name: ENTRYPOINT.to_string(),
            attempt_index,
        })
        .ok_or(CodeLoopError::NoCodeFound)
}
