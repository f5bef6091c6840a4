// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{AgentError, ChatAgent, ChatRequest, ChatResponse, Role, TokenUsage};
use crate::codec::encode_rgb_png;

pub const API_KEY_ENV: &str = "COTSEG_CHAT_API_KEY";
pub const ENDPOINT_ENV: &str = "COTSEG_CHAT_ENDPOINT";

const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";

/// OpenAI-compatible chat-completions backend.
///
/// Images are sent inline as `data:image/png;base64,…` URLs. Rate-limited
/// requests (429, 503) are retried up to `max_retries` times with exponential
/// backoff; the request body is serialized once and resent unchanged.
pub struct OpenAiChat {
    client: Client,
    url: String,
    model: String,
    api_key: Option<String>,
    pub max_retries: u32,
    pub base_backoff: Duration,
    pub temperature: Option<f32>,
}

impl OpenAiChat {
    pub fn new(
        endpoint: &str,
        model: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self, AgentError> {
        let endpoint = endpoint.trim_end_matches('/');
        let url = if endpoint.ends_with("/chat/completions") {
            endpoint.to_string()
        } else {
            format!("{endpoint}/chat/completions")
        };
        let client = Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url,
            model: model.into(),
            api_key,
            max_retries: 3,
            base_backoff: Duration::from_millis(500),
            temperature: Some(0.0),
        })
    }

    /// Endpoint from `COTSEG_CHAT_ENDPOINT` (default OpenAI), key from
    /// `COTSEG_CHAT_API_KEY`.
    pub fn from_env(model: impl Into<String>) -> Result<Self, AgentError> {
        let endpoint = std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string());
        Self::new(&endpoint, model, std::env::var(API_KEY_ENV).ok())
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Chat-completions JSON body for `req`.
    pub fn request_body(&self, req: &ChatRequest) -> Result<Value, AgentError> {
        let mut messages = Vec::with_capacity(req.turns.len());
        for turn in &req.turns {
            let role = match turn.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            if turn.images.is_empty() {
                messages.push(json!({ "role": role, "content": turn.text }));
                continue;
            }
            let mut parts = Vec::new();
            if !turn.text.is_empty() {
                parts.push(json!({ "type": "text", "text": turn.text }));
            }
            for img in &turn.images {
                let png =
                    encode_rgb_png(img).map_err(|e| AgentError::InvalidRequest(e.to_string()))?;
                parts.push(json!({
                    "type": "image_url",
                    "image_url": { "url": format!("data:image/png;base64,{}", B64.encode(png)) },
                }));
            }
            messages.push(json!({ "role": role, "content": parts }));
        }
        let mut body = json!({ "model": self.model, "messages": messages });
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        Ok(body)
    }
}

fn parse_completion(v: &Value) -> Result<(String, Option<TokenUsage>), AgentError> {
    let content = &v["choices"][0]["message"]["content"];
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        _ => {
            return Err(AgentError::Decode(
                "completion has no message content".into(),
            ))
        }
    };
    let usage = v.get("usage").and_then(|u| {
        Some(TokenUsage {
            prompt_tokens: u["prompt_tokens"].as_u64()?,
            completion_tokens: u["completion_tokens"].as_u64()?,
            total_tokens: u["total_tokens"].as_u64()?,
        })
    });
    Ok((text, usage))
}

impl ChatAgent for OpenAiChat {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, AgentError> {
        req.validate()?;
        let payload = serde_json::to_vec(&self.request_body(req)?)
            .map_err(|e| AgentError::Decode(e.to_string()))?;
        let start = Instant::now();
        let mut attempt = 0u32;
        loop {
            let mut call = self
                .client
                .post(&self.url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(payload.clone());
            if let Some(key) = &self.api_key {
                call = call.bearer_auth(key);
            }
            let resp = call
                .send()
                .map_err(|e| AgentError::Transport(e.to_string()))?;
            let status = resp.status();
            if status == StatusCode::TOO_MANY_REQUESTS || status == StatusCode::SERVICE_UNAVAILABLE
            {
                if attempt >= self.max_retries {
                    return Err(AgentError::RateLimited {
                        attempts: attempt + 1,
                    });
                }
                std::thread::sleep(self.base_backoff * 2u32.pow(attempt));
                attempt += 1;
                continue;
            }
            let body = resp
                .text()
                .map_err(|e| AgentError::Transport(e.to_string()))?;
            if !status.is_success() {
                return Err(AgentError::Http {
                    status: status.as_u16(),
                    body,
                });
            }
            let v: Value =
                serde_json::from_str(&body).map_err(|e| AgentError::Decode(e.to_string()))?;
            let (text, usage) = parse_completion(&v)?;
            return Ok(ChatResponse {
                text,
                latency_ms: start.elapsed().as_millis() as u64,
                usage,
            });
        }
    }
}
