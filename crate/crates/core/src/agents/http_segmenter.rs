// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Client side of the segmenter wire protocol.
//!
//! ```text
//! GET  /capabilities -> SegmentorCapabilities JSON
//! POST /segment      multipart{image: PNG, meta_query: JSON}
//!                    200 -> multipart{scores: 16-bit grayscale PNG} (a bare PNG body is also accepted)
//!                    422 -> reason code
//! ```

use std::time::Duration;

use reqwest::blocking::{multipart, Client};
use reqwest::StatusCode;

use super::{AgentError, Segmenter};
use crate::codec::{decode_scores_png, encode_rgb_png};
use crate::types::{ImageData, MetaQuery, RejectReason, ScoreMap, SegmentorCapabilities};

pub const SEG_ENDPOINT_ENV: &str = "COTSEG_SEG_ENDPOINT";

pub struct HttpSegmenter {
    client: Client,
    base: String,
}

impl HttpSegmenter {
    pub fn new(base: &str) -> Result<Self, AgentError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            base: base.trim_end_matches('/').to_string(),
        })
    }

    pub fn from_env() -> Result<Self, AgentError> {
        let base = std::env::var(SEG_ENDPOINT_ENV)
            .map_err(|_| AgentError::InvalidRequest(format!("{SEG_ENDPOINT_ENV} is not set")))?;
        Self::new(&base)
    }

    fn raw_segment(&self, image: &ImageData, mq: &MetaQuery) -> Result<ScoreMap, AgentError> {
        let png = encode_rgb_png(image).map_err(|e| AgentError::InvalidRequest(e.to_string()))?;
        let mq_json =
            serde_json::to_vec(mq).map_err(|e| AgentError::InvalidRequest(e.to_string()))?;
        let form = multipart::Form::new()
            .part(
                "image",
                multipart::Part::bytes(png)
                    .file_name("image.png")
                    .mime_str("image/png")
                    .expect("static mime"),
            )
            .part(
                "meta_query",
                multipart::Part::bytes(mq_json)
                    .mime_str("application/json")
                    .expect("static mime"),
            );
        let resp = self
            .client
            .post(format!("{}/segment", self.base))
            .multipart(form)
            .send()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        let status = resp.status();
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("")
            .to_string();
        let body = resp
            .bytes()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        if status == StatusCode::UNPROCESSABLE_ENTITY {
            return Err(AgentError::Rejected(parse_reason(&body)?));
        }
        if !status.is_success() {
            return Err(AgentError::Http {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&body).into_owned(),
            });
        }
        let png = if content_type.starts_with("multipart/") {
            parse_multipart_part(&content_type, &body, "scores")
                .ok_or_else(|| AgentError::Decode("response has no `scores` part".into()))?
        } else {
            body.to_vec()
        };
        Ok(decode_scores_png(&png)?)
    }
}

/// Accepts `{"reason": "<code>"}` or a bare code.
fn parse_reason(body: &[u8]) -> Result<RejectReason, AgentError> {
    let text = String::from_utf8_lossy(body);
    let code = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.get("reason").and_then(|r| r.as_str()).map(str::to_string))
        .unwrap_or_else(|| text.trim().trim_matches('"').to_string());
    RejectReason::from_code(&code)
        .ok_or_else(|| AgentError::Decode(format!("unknown reason code `{code}`")))
}

fn find(haystack: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from > haystack.len() {
        return None;
    }
    haystack[from..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

/// Extracts the body of the part named `name` from a multipart payload.
pub fn parse_multipart_part(content_type: &str, body: &[u8], name: &str) -> Option<Vec<u8>> {
    let boundary = content_type
        .split(';')
        .map(str::trim)
        .find_map(|p| p.strip_prefix("boundary="))?
        .trim_matches('"');
    let delim = format!("--{boundary}");
    let delim = delim.as_bytes();
    let mut pos = find(body, delim, 0)?;
    loop {
        let start = pos + delim.len();
        if body[start..].starts_with(b"--") {
            return None;
        }
        let header_end = find(body, b"\r\n\r\n", start)?;
        let next = find(body, delim, header_end + 4)?;
        let headers = String::from_utf8_lossy(&body[start..header_end]).to_ascii_lowercase();
        let wanted = format!("name=\"{}\"", name.to_ascii_lowercase());
        if headers.contains(&wanted) {
            let mut end = next;
            if end >= 2 && &body[end - 2..end] == b"\r\n" {
                end -= 2;
            }
            return Some(body[header_end + 4..end].to_vec());
        }
        pos = next;
    }
}

impl Segmenter for HttpSegmenter {
    fn capabilities(&self) -> Result<SegmentorCapabilities, AgentError> {
        let resp = self
            .client
            .get(format!("{}/capabilities", self.base))
            .send()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(AgentError::Http {
                status: status.as_u16(),
                body,
            });
        }
        let caps: SegmentorCapabilities =
            serde_json::from_str(&body).map_err(|e| AgentError::Decode(e.to_string()))?;
        caps.validate()
            .map_err(|e| AgentError::Decode(e.to_string()))?;
        Ok(caps)
    }

    fn segment(&self, image: &ImageData, mq: &MetaQuery) -> Result<ScoreMap, AgentError> {
        let scores = self.raw_segment(image, mq)?;
        if !scores.same_dims(image.width(), image.height()) {
            return Err(AgentError::InvalidResponseShape {
                expected: (image.width(), image.height()),
                actual: (scores.width(), scores.height()),
            });
        }
        Ok(scores)
    }
}
