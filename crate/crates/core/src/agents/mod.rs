// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Agent interfaces and their backends.
//!
//! Three roles take part in a run: a chat MLLM (reasoner and evaluator), a
//! promptable segmenter and an optional retrieval source. Each role is a
//! trait; an [`AgentBundle`] groups one implementation of each.

mod cassette;
mod http_segmenter;
mod openai;
mod oracle;
mod retrieval;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::protocol::{ImageRef, PromptText};
use crate::types::{ImageData, MetaQuery, RejectReason, ScoreMap, SegmentorCapabilities};

pub use cassette::{
    Cassette, CassetteEntry, CassetteRecorder, CassetteReplay, InteractionKind, RecordingAgents,
};
pub use http_segmenter::{parse_multipart_part, HttpSegmenter, SEG_ENDPOINT_ENV};
pub use openai::{OpenAiChat, API_KEY_ENV, ENDPOINT_ENV};
pub use oracle::OracleSegmenter;
pub use retrieval::{LocalCorpus, NoRetrieval};
pub use scripted::{
    ScriptRule, ScriptedChat, COMPARE_KEY, EVALUATOR_KEY, KEYWORDS_KEY, NO_COT_KEY, REASONER_KEY,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("cassette mismatch at entry {index}: {detail}")]
    CassetteMismatch { index: usize, detail: String },
    #[error("cassette exhausted after {0} entries")]
    CassetteExhausted(usize),
    #[error("segmenter returned {actual:?} scores for a {expected:?} image")]
    InvalidResponseShape {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("segmenter rejected meta-query: {0}")]
    Rejected(RejectReason),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for AgentError {
    fn from(e: std::io::Error) -> Self {
        AgentError::Io(e.to_string())
    }
}

impl From<crate::codec::CodecError> for AgentError {
    fn from(e: crate::codec::CodecError) -> Self {
        AgentError::Decode(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    pub images: Vec<ImageData>,
}

impl ChatTurn {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            images: Vec::new(),
        }
    }
}

/// Ordered conversation sent to a chat backend.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub turns: Vec<ChatTurn>,
}

/// Stable content hash of an image: dimensions plus raw RGB bytes.
pub fn image_digest(image: &ImageData) -> String {
    let mut h = Sha256::new();
    h.update(image.width().to_le_bytes());
    h.update(image.height().to_le_bytes());
    h.update(image.pixels());
    hex::encode(h.finalize())
}

/// Serializes `v` with object keys sorted at every level.
pub fn canonical_json(v: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                let mut out = serde_json::Map::new();
                for k in keys {
                    out.insert(k.clone(), sort(&map[k]));
                }
                Value::Object(out)
            }
            Value::Array(items) => Value::Array(items.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    // serde_json::Map keeps insertion order only with `preserve_order`;
    // inserting in sorted order makes the output canonical either way.
    sort(v).to_string()
}

pub(crate) fn digest_value(v: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(v).as_bytes()))
}

impl ChatRequest {
    /// Expands image placeholders in `prompt` through `resolve`.
    pub fn from_prompt(
        prompt: &PromptText,
        mut resolve: impl FnMut(ImageRef) -> Option<ImageData>,
    ) -> Result<Self, AgentError> {
        let mut turns = vec![ChatTurn::new(Role::System, prompt.system.clone())];
        for t in &prompt.user_turns {
            let images = t
                .images
                .iter()
                .map(|&r| {
                    resolve(r).ok_or_else(|| {
                        AgentError::InvalidRequest(format!("image {r:?} not attached"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            turns.push(ChatTurn {
                role: Role::User,
                text: t.text.clone(),
                images,
            });
        }
        let req = Self { turns };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !self.turns.iter().any(|t| t.role == Role::User) {
            return Err(AgentError::InvalidRequest(
                "request has no user turn".into(),
            ));
        }
        Ok(())
    }

    /// Appends the model's previous reply and a follow-up user message.
    pub fn followed_by(&self, reply: &str, user_text: &str) -> Self {
        let mut next = self.clone();
        next.turns.push(ChatTurn::new(Role::Assistant, reply));
        next.turns.push(ChatTurn::new(Role::User, user_text));
        next
    }

    /// Concatenation of every turn's text, used for keyword matching.
    pub fn full_text(&self) -> String {
        self.turns
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn digest(&self) -> String {
        let turns: Vec<Value> = self
            .turns
            .iter()
            .map(|t| {
                serde_json::json!({
                    "role": t.role,
                    "text": t.text,
                    "images": t.images.iter().map(image_digest).collect::<Vec<_>>(),
                })
            })
            .collect();
        digest_value(&serde_json::json!({ "turns": turns }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
}

impl ChatResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            latency_ms: 0,
            usage: None,
        }
    }
}

/// External knowledge handed to the reasoner.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub snippets: Vec<String>,
    pub images: Vec<ImageData>,
}

impl RetrievedContext {
    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty() && self.images.is_empty()
    }
}

pub trait ChatAgent: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, AgentError>;
}

pub trait Segmenter: Send + Sync {
    fn capabilities(&self) -> Result<SegmentorCapabilities, AgentError>;

    /// Implementations must return a score map with the image's dimensions.
    fn segment(&self, image: &ImageData, mq: &MetaQuery) -> Result<ScoreMap, AgentError>;
}

pub trait RetrievalAgent: Send + Sync {
    /// A miss is an empty context, not an error.
    fn retrieve(&self, keywords: &[String]) -> Result<RetrievedContext, AgentError>;
}

/// Segments and enforces the dimension contract regardless of backend.
pub fn segment_checked(
    seg: &dyn Segmenter,
    image: &ImageData,
    mq: &MetaQuery,
) -> Result<ScoreMap, AgentError> {
    let scores = seg.segment(image, mq)?;
    if !scores.same_dims(image.width(), image.height()) {
        return Err(AgentError::InvalidResponseShape {
            expected: (image.width(), image.height()),
            actual: (scores.width(), scores.height()),
        });
    }
    Ok(scores)
}

/// One implementation of each agent role.
#[derive(Clone)]
pub struct AgentBundle {
    pub chat: Arc<dyn ChatAgent>,
    pub segmenter: Arc<dyn Segmenter>,
    pub retrieval: Arc<dyn RetrievalAgent>,
}

impl AgentBundle {
    pub fn new(
        chat: Arc<dyn ChatAgent>,
        segmenter: Arc<dyn Segmenter>,
        retrieval: Arc<dyn RetrievalAgent>,
    ) -> Self {
        Self {
            chat,
            segmenter,
            retrieval,
        }
    }

    /// Wraps every agent so that each interaction is appended to `path`.
    pub fn recording(self, path: impl AsRef<std::path::Path>) -> Result<Self, AgentError> {
        let rec = Arc::new(RecordingAgents::new(
            self,
            CassetteRecorder::create(path.as_ref())?,
        ));
        Ok(Self::new(rec.clone(), rec.clone(), rec))
    }

    /// Serves every interaction from a recorded cassette, in order.
    pub fn replay(path: impl AsRef<std::path::Path>) -> Result<Self, AgentError> {
        let replay = Arc::new(CassetteReplay::new(Cassette::load(path.as_ref())?));
        Ok(Self::new(replay.clone(), replay.clone(), replay))
    }
}
