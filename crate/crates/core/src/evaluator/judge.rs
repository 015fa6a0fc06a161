use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::canonical::{serialize, CanonicalResult};
use crate::llm::{GatewayError, LlmSession, PromptRequest, RoleTag};
use crate::prompts;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeOpinion {
    /// The model's own 0-100 rating. Logged only; never used for termination.
    pub score_opinion: Option<u8>,
    pub narrative: String,
}

fn judge_request(
    reference: &CanonicalResult,
    candidate: &CanonicalResult,
    figure_files: &[&Path],
) -> PromptRequest {
    let mut user = String::new();
    user.push_str("PUBLISHED RESULT\n");
    user.push_str(&String::from_utf8_lossy(&serialize(reference)));
    user.push_str("\nGENERATED RESULT\n");
    user.push_str(&String::from_utf8_lossy(&serialize(candidate)));
    if !figure_files.is_empty() {
        user.push_str("\nFIGURE FILES PRODUCED\n");
        for f in figure_files {
            let name = f.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
            user.push_str(&format!("- {name}\n"));
        }
    }
    PromptRequest::new(RoleTag::Judge, prompts::JUDGE.text, user)
}

pub fn parse_opinion(text: &str) -> JudgeOpinion {
    let re = Regex::new(r"(?mi)^\s*score\s*:\s*(\d{1,3})\s*$").expect("valid regex");
    let score_opinion = re
        .captures_iter(text)
        .last()
        .and_then(|c| c[1].parse::<u32>().ok())
        .filter(|s| *s <= 100)
        .map(|s| s as u8);
    let narrative = re.replace_all(text, "").trim().to_string();
    JudgeOpinion {
        score_opinion,
        narrative,
    }
}

/// Asks the model for a narrative comparison. Provider failures degrade to
/// `Ok(None)` so the deterministic report is still produced; replay errors
/// propagate because they mean the run itself is broken.
pub fn judge(
    session: &mut LlmSession,
    reference: &CanonicalResult,
    candidate: &CanonicalResult,
    figure_files: &[&Path],
) -> Result<Option<JudgeOpinion>, GatewayError> {
    let request = judge_request(reference, candidate, figure_files);
    match session.complete(&request) {
        Ok(c) => {
            let opinion = parse_opinion(&c.text);
            tracing::info!(opinion = ?opinion.score_opinion, "judge opinion");
            Ok(Some(opinion))
        }
        Err(GatewayError::Provider(e)) => {
            tracing::warn!(error = %e, "judge unavailable, continuing without narrative");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}
