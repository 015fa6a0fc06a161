use std::time::Duration;

use super::{ChatProvider, CompletionText, PromptRequest, ProviderError};

/// Exponential backoff for transient provider failures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    /// Three retries after 1 s, 2 s and 4 s.
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base_delay: Duration::ZERO,
        }
    }

    pub fn delay_for(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

pub fn call_with_retry(
    provider: &dyn ChatProvider,
    request: &PromptRequest,
    policy: &RetryPolicy,
) -> Result<CompletionText, ProviderError> {
    let mut retry = 0;
    loop {
        match provider.send(request) {
            Ok(c) => return Ok(c),
            Err(e) if e.transient && retry < policy.max_retries => {
                let delay = policy.delay_for(retry);
                tracing::warn!(error = %e, retry = retry + 1, ?delay, "retrying provider call");
                std::thread::sleep(delay);
                retry += 1;
            }
            Err(e) => return Err(e),
        }
    }
}
