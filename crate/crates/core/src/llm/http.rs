use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{ChatProvider, CompletionText, FinishReason, PromptRequest, ProviderError, Usage};

pub const ENV_API_KEY: &str = "REPCHECK_API_KEY";
pub const ENV_API_URL: &str = "REPCHECK_API_URL";
pub const ENV_MODEL: &str = "REPCHECK_MODEL";

const DEFAULT_API_URL: &str = "https://api.openai.com/v1/chat/completions";

/// Chat-completions client. One instance can serve many sessions.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
    model: String,
}

impl HttpProvider {
    pub fn new(url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(600))
            .build()
            .map_err(|e| ProviderError::fatal(format!("http client: {e}")))?;
        Ok(Self {
            client,
            url: url.into(),
            api_key: api_key.into(),
            model: model.into(),
        })
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        let api_key = std::env::var(ENV_API_KEY)
            .map_err(|_| ProviderError::fatal(format!("{ENV_API_KEY} is not set")))?;
        let url = std::env::var(ENV_API_URL).unwrap_or_else(|_| DEFAULT_API_URL.to_string());
        let model = std::env::var(ENV_MODEL)
            .map_err(|_| ProviderError::fatal(format!("{ENV_MODEL} is not set")))?;
        Self::new(url, api_key, model)
    }

    fn body(&self, request: &PromptRequest) -> Value {
        let user_content = match &request.attachments {
            Some(bytes) => {
                let data = base64::engine::general_purpose::STANDARD.encode(bytes);
                json!([
                    {"type": "file", "file": {
                        "filename": "paper.pdf",
                        "file_data": format!("data:application/pdf;base64,{data}"),
                    }},
                    {"type": "text", "text": request.user_text},
                ])
            }
            None => Value::String(request.user_text.clone()),
        };
        let mut messages = Vec::new();
        if !request.system_text.is_empty() {
            messages.push(json!({"role": "system", "content": request.system_text}));
        }
        messages.push(json!({"role": "user", "content": user_content}));
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_completion_tokens": request.max_output_tokens,
        })
    }
}

fn parse_completion(body: &Value) -> Result<CompletionText, ProviderError> {
    let choice = body
        .pointer("/choices/0")
        .ok_or_else(|| ProviderError::fatal("response has no choices"))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("stop") | None => FinishReason::Complete,
        Some("length") => FinishReason::Length,
        Some(other) => FinishReason::Other(other.to_string()),
    };
    if finish_reason == FinishReason::Complete && text.is_empty() {
        return Err(ProviderError::fatal("completed response carries no text"));
    }
    let usage = Usage {
        prompt_tokens: body.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: body
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    };
    Ok(CompletionText {
        text,
        finish_reason,
        usage,
    })
}

impl ChatProvider for HttpProvider {
    fn send(&self, request: &PromptRequest) -> Result<CompletionText, ProviderError> {
        let response = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&self.body(request))
            .send()
            .map_err(|e| ProviderError::transient(format!("request failed: {e}")))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| ProviderError::transient(format!("reading response: {e}")))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(500).collect();
            return Err(ProviderError {
                message: snippet,
                status: Some(status.as_u16()),
                transient: status.as_u16() == 429 || status.is_server_error(),
            });
        }
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| ProviderError::fatal(format!("response is not JSON: {e}")))?;
        parse_completion(&body)
    }
}
