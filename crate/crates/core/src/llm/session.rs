use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    call_with_retry, read_transcript, ChatProvider, CompletionText, GatewayError, PromptRequest,
    RetryPolicy, TranscriptEntry, TranscriptWriter,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    Live,
    Record,
    Replay,
}

enum Backend {
    Live {
        provider: Arc<dyn ChatProvider>,
        retry: RetryPolicy,
        recorder: Option<TranscriptWriter>,
    },
    Replay {
        entries: Vec<TranscriptEntry>,
        strict: bool,
    },
}

/// One run's view of the model: calls are serialized and counted so a
/// resumed run can pick up a replay transcript exactly where it stopped.
pub struct LlmSession {
    backend: Backend,
    calls: usize,
}

impl LlmSession {
    pub fn live(provider: Arc<dyn ChatProvider>, retry: RetryPolicy) -> Self {
        Self {
            backend: Backend::Live {
                provider,
                retry,
                recorder: None,
            },
            calls: 0,
        }
    }

    /// Forwards to `provider` and appends every exchange to `path`. With
    /// `already_consumed > 0` the existing transcript is kept up to that
    /// many entries and extended.
    pub fn record(
        provider: Arc<dyn ChatProvider>,
        retry: RetryPolicy,
        path: &Path,
        already_consumed: usize,
    ) -> Result<Self, GatewayError> {
        let recorder = if already_consumed == 0 {
            TranscriptWriter::create(path)?
        } else {
            TranscriptWriter::resume(path, already_consumed)?
        };
        Ok(Self {
            backend: Backend::Live {
                provider,
                retry,
                recorder: Some(recorder),
            },
            calls: already_consumed,
        })
    }

    pub fn replay(path: &Path, strict: bool, already_consumed: usize) -> Result<Self, GatewayError> {
        let entries = read_transcript(path)?;
        Ok(Self::replay_entries(entries, strict, already_consumed))
    }

    pub fn replay_entries(entries: Vec<TranscriptEntry>, strict: bool, already_consumed: usize) -> Self {
        Self {
            backend: Backend::Replay { entries, strict },
            calls: already_consumed,
        }
    }

    /// Number of completed calls, including any consumed before a resume.
    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn complete(&mut self, request: &PromptRequest) -> Result<CompletionText, GatewayError> {
        if request.user_text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("user_text is empty".into()));
        }
        let digest = request.digest();
        let out = match &mut self.backend {
            Backend::Live {
                provider,
                retry,
                recorder,
            } => {
                let completion = call_with_retry(provider.as_ref(), request, retry)?;
                if let Some(rec) = recorder {
                    rec.append(request.role_tag, digest, completion.text.clone())?;
                }
                completion
            }
            Backend::Replay { entries, strict } => {
                let entry = entries
                    .get(self.calls)
                    .ok_or(GatewayError::TranscriptExhausted {
                        consumed: self.calls,
                    })?;
                if entry.request_digest != digest {
                    if *strict {
                        return Err(GatewayError::DigestMismatch {
                            index: entry.index,
                            stored: entry.request_digest.clone(),
                            actual: digest,
                        });
                    }
                    tracing::warn!(
                        index = entry.index,
                        role = %request.role_tag,
                        "replayed request differs from recorded digest"
                    );
                }
                CompletionText::complete(entry.response_text.clone())
            }
        };
        self.calls += 1;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ProviderError, RoleTag};
    use std::sync::Mutex;

    struct Echo(Mutex<u32>);

    impl ChatProvider for Echo {
        fn send(&self, request: &PromptRequest) -> Result<CompletionText, ProviderError> {
            let mut n = self.0.lock().unwrap();
            *n += 1;
            Ok(CompletionText::complete(format!("reply {} to {}", *n, request.user_text)))
        }
    }

    fn reqs() -> Vec<PromptRequest> {
        ["a", "b", "c"]
            .iter()
            .map(|u| PromptRequest::new(RoleTag::Codegen, "sys", *u))
            .collect()
    }

    fn recorded(dir: &Path) -> std::path::PathBuf {
        let path = dir.join("t.jsonl");
        let mut s = LlmSession::record(Arc::new(Echo(Mutex::new(0))), RetryPolicy::none(), &path, 0).unwrap();
        for r in reqs() {
            s.complete(&r).unwrap();
        }
        path
    }

    #[test]
    fn replay_returns_recorded_texts_in_order_then_exhausts() {
        let dir = tempfile::tempdir().unwrap();
        let path = recorded(dir.path());
        let mut s = LlmSession::replay(&path, true, 0).unwrap();
        let texts: Vec<_> = reqs().iter().map(|r| s.complete(r).unwrap().text).collect();
        assert_eq!(texts, ["reply 1 to a", "reply 2 to b", "reply 3 to c"]);
        assert!(matches!(
            s.complete(&reqs()[0]),
            Err(GatewayError::TranscriptExhausted { consumed: 3 })
        ));
    }

    #[test]
    fn strict_replay_detects_edited_prompt() {
        let dir = tempfile::tempdir().unwrap();
        let path = recorded(dir.path());
        let mut edited = reqs()[0].clone();
        edited.user_text.push_str(" (edited)");

        let mut strict = LlmSession::replay(&path, true, 0).unwrap();
        match strict.complete(&edited) {
            Err(GatewayError::DigestMismatch { index, actual, .. }) => {
                assert_eq!(index, 0);
                assert_eq!(actual, edited.digest());
            }
            other => panic!("expected mismatch, got {other:?}"),
        }

        let mut lenient = LlmSession::replay(&path, false, 0).unwrap();
        assert_eq!(lenient.complete(&edited).unwrap().text, "reply 1 to a");
    }

    #[test]
    fn replay_can_start_mid_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let path = recorded(dir.path());
        let mut s = LlmSession::replay(&path, true, 2).unwrap();
        assert_eq!(s.complete(&reqs()[2]).unwrap().text, "reply 3 to c");
        assert_eq!(s.calls(), 3);
    }

    #[test]
    fn empty_user_text_rejected() {
        let mut s = LlmSession::replay_entries(Vec::new(), false, 0);
        let r = PromptRequest::new(RoleTag::Summary, "s", "  ");
        assert!(matches!(s.complete(&r), Err(GatewayError::InvalidRequest(_))));
        assert_eq!(s.calls(), 0);
    }
}
