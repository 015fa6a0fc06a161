//! All model traffic goes through this module.
//!
//! A [`ChatProvider`] talks to a chat-completions endpoint and may be shared
//! between runs. Each run owns an [`LlmSession`], which either forwards to a
//! provider (optionally recording every exchange to a transcript) or replays
//! a transcript recorded earlier.

mod http;
mod retry;
mod session;
mod transcript;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpProvider, ENV_API_KEY, ENV_API_URL, ENV_MODEL};
pub use retry::{call_with_retry, RetryPolicy};
pub use session::{LlmMode, LlmSession};
pub use transcript::{read_transcript, TranscriptEntry, TranscriptWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    Summary,
    Instruction,
    Transcription,
    Codegen,
    Judge,
}

impl RoleTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RoleTag::Summary => "summary",
            RoleTag::Instruction => "instruction",
            RoleTag::Transcription => "transcription",
            RoleTag::Codegen => "codegen",
            RoleTag::Judge => "judge",
        }
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRequest {
    pub role_tag: RoleTag,
    pub system_text: String,
    pub user_text: String,
    pub attachments: Option<Vec<u8>>,
    pub max_output_tokens: u32,
    pub temperature: f32,
}

impl PromptRequest {
    pub fn new(role_tag: RoleTag, system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        Self {
            role_tag,
            system_text: system_text.into(),
            user_text: user_text.into(),
            attachments: None,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: 0.0,
        }
    }

    pub fn with_attachment(mut self, bytes: Option<Vec<u8>>) -> Self {
        self.attachments = bytes;
        self
    }

    /// Content hash over role, system text, user text and attachment bytes.
    /// Sampling settings and token limits are deliberately excluded.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        let mut field = |bytes: &[u8]| {
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(bytes);
        };
        field(self.role_tag.as_str().as_bytes());
        field(self.system_text.as_bytes());
        field(self.user_text.as_bytes());
        match &self.attachments {
            Some(a) => {
                field(b"1");
                field(a);
            }
            None => field(b"0"),
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Complete,
    Length,
    Other(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionText {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
}

impl CompletionText {
    pub fn complete(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            finish_reason: FinishReason::Complete,
            usage: Usage::default(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("provider error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
pub struct ProviderError {
    pub message: String,
    pub status: Option<u16>,
    /// Rate limits, 5xx responses and connection failures.
    pub transient: bool,
}

impl ProviderError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            status: None,
            transient: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            status: None,
            transient: false,
        }
    }
}

/// Anything that can answer a prompt. Implementations must be shareable
/// across concurrently running sessions.
pub trait ChatProvider: Send + Sync {
    fn send(&self, request: &PromptRequest) -> Result<CompletionText, ProviderError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("transcript exhausted after {consumed} entries")]
    TranscriptExhausted { consumed: usize },
    #[error("transcript entry {index}: stored digest {stored} does not match request digest {actual}")]
    DigestMismatch {
        index: usize,
        stored: String,
        actual: String,
    },
    #[error("transcript {path}: {message}")]
    Transcript { path: String, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl GatewayError {
    pub fn is_provider(&self) -> bool {
        matches!(self, GatewayError::Provider(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> PromptRequest {
        PromptRequest::new(RoleTag::Codegen, "sys", "user text")
    }

    #[test]
    fn digest_is_stable_and_content_sensitive() {
        assert_eq!(req().digest(), req().digest());
        let mut other = req();
        other.user_text.push('!');
        assert_ne!(req().digest(), other.digest());
        let mut role = req();
        role.role_tag = RoleTag::Judge;
        assert_ne!(req().digest(), role.digest());
    }

    #[test]
    fn digest_ignores_sampling_settings() {
        let mut warm = req();
        warm.temperature = 0.7;
        warm.max_output_tokens = 10;
        assert_eq!(req().digest(), warm.digest());
    }

    #[test]
    fn digest_separates_fields() {
        let a = PromptRequest::new(RoleTag::Summary, "ab", "c");
        let b = PromptRequest::new(RoleTag::Summary, "a", "bc");
        assert_ne!(a.digest(), b.digest());
        let with = req().with_attachment(Some(Vec::new()));
        assert_ne!(req().digest(), with.digest());
    }
}
