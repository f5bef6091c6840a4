// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Record/replay of agent interactions as JSON Lines.
//!
//! Each line is `{"kind", "digest", "response_b64"}`; failed interactions
//! additionally carry an `"error"` message and an empty response.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    digest_value, image_digest, AgentBundle, AgentError, ChatAgent, ChatRequest, ChatResponse,
    RetrievalAgent, RetrievedContext, Segmenter,
};
use crate::types::{ImageData, MetaQuery, ScoreMap, SegmentorCapabilities};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Chat,
    Segment,
    Capabilities,
    Retrieve,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub kind: InteractionKind,
    pub digest: String,
    pub response_b64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    pub entries: Vec<CassetteEntry>,
    pub path: Option<PathBuf>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let file =
            File::open(path).map_err(|e| AgentError::Io(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line).map_err(|e| {
                AgentError::Decode(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            entries.push(entry);
        }
        Ok(Self {
            entries,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, kind: InteractionKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }
}

fn segment_digest(image: &ImageData, mq: &MetaQuery) -> String {
    digest_value(&serde_json::json!({
        "image": image_digest(image),
        "meta_query": mq,
    }))
}

fn retrieve_digest(keywords: &[String]) -> String {
    digest_value(&serde_json::json!({ "keywords": keywords }))
}

fn capabilities_digest() -> String {
    digest_value(&serde_json::json!({ "capabilities": null }))
}

/// Appends entries to a cassette file as interactions happen.
pub struct CassetteRecorder {
    path: PathBuf,
    file: Mutex<File>,
}

impl CassetteRecorder {
    pub fn create(path: &Path) -> Result<Self, AgentError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let file =
            File::create(path).map_err(|e| AgentError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append<T: Serialize>(
        &self,
        kind: InteractionKind,
        digest: String,
        result: &Result<T, AgentError>,
    ) -> Result<(), AgentError> {
        let entry = match result {
            Ok(v) => CassetteEntry {
                kind,
                digest,
                response_b64: B64
                    .encode(serde_json::to_vec(v).map_err(|e| AgentError::Decode(e.to_string()))?),
                error: None,
            },
            Err(e) => CassetteEntry {
                kind,
                digest,
                response_b64: String::new(),
                error: Some(e.to_string()),
            },
        };
        let mut line =
            serde_json::to_string(&entry).map_err(|e| AgentError::Decode(e.to_string()))?;
        line.push('\n');
        let mut f = self.file.lock().expect("cassette lock poisoned");
        f.write_all(line.as_bytes())?;
        f.flush()?;
        Ok(())
    }
}

/// Pass-through agents that log every interaction to one cassette.
pub struct RecordingAgents {
    inner: AgentBundle,
    recorder: CassetteRecorder,
}

impl RecordingAgents {
    pub fn new(inner: AgentBundle, recorder: CassetteRecorder) -> Self {
        Self { inner, recorder }
    }

    fn pass<T: Serialize>(
        &self,
        kind: InteractionKind,
        digest: String,
        result: Result<T, AgentError>,
    ) -> Result<T, AgentError> {
        self.recorder.append(kind, digest, &result)?;
        result
    }
}

impl ChatAgent for RecordingAgents {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, AgentError> {
        self.pass(
            InteractionKind::Chat,
            req.digest(),
            self.inner.chat.chat(req),
        )
    }
}

impl Segmenter for RecordingAgents {
    fn capabilities(&self) -> Result<SegmentorCapabilities, AgentError> {
        self.pass(
            InteractionKind::Capabilities,
            capabilities_digest(),
            self.inner.segmenter.capabilities(),
        )
    }

    fn segment(&self, image: &ImageData, mq: &MetaQuery) -> Result<ScoreMap, AgentError> {
        self.pass(
            InteractionKind::Segment,
            segment_digest(image, mq),
            self.inner.segmenter.segment(image, mq),
        )
    }
}

impl RetrievalAgent for RecordingAgents {
    fn retrieve(&self, keywords: &[String]) -> Result<RetrievedContext, AgentError> {
        self.pass(
            InteractionKind::Retrieve,
            retrieve_digest(keywords),
            self.inner.retrieval.retrieve(keywords),
        )
    }
}

/// Serves interactions from a cassette, strictly in recorded order.
pub struct CassetteReplay {
    cassette: Cassette,
    cursor: Mutex<usize>,
}

impl CassetteReplay {
    pub fn new(cassette: Cassette) -> Self {
        Self {
            cassette,
            cursor: Mutex::new(0),
        }
    }

    /// Number of entries consumed so far.
    pub fn position(&self) -> usize {
        *self.cursor.lock().expect("cassette lock poisoned")
    }

    fn next<T: DeserializeOwned>(
        &self,
        kind: InteractionKind,
        digest: &str,
    ) -> Result<T, AgentError> {
        let mut cursor = self.cursor.lock().expect("cassette lock poisoned");
        let index = *cursor;
        let entry = self
            .cassette
            .entries
            .get(index)
            .ok_or(AgentError::CassetteExhausted(index))?;
        if entry.kind != kind {
            return Err(AgentError::CassetteMismatch {
                index,
                detail: format!(
                    "expected a {:?} interaction, cassette has {:?}",
                    kind, entry.kind
                ),
            });
        }
        if entry.digest != digest {
            return Err(AgentError::CassetteMismatch {
                index,
                detail: format!(
                    "request digest {digest} differs from recorded {}",
                    entry.digest
                ),
            });
        }
        *cursor += 1;
        if let Some(err) = &entry.error {
            return Err(AgentError::Transport(format!("replayed failure: {err}")));
        }
        let bytes = B64
            .decode(&entry.response_b64)
            .map_err(|e| AgentError::Decode(format!("entry {index}: {e}")))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| AgentError::Decode(format!("entry {index}: {e}")))
    }
}

impl ChatAgent for CassetteReplay {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, AgentError> {
        self.next(InteractionKind::Chat, &req.digest())
    }
}

impl Segmenter for CassetteReplay {
    fn capabilities(&self) -> Result<SegmentorCapabilities, AgentError> {
        self.next(InteractionKind::Capabilities, &capabilities_digest())
    }

    fn segment(&self, image: &ImageData, mq: &MetaQuery) -> Result<ScoreMap, AgentError> {
        self.next(InteractionKind::Segment, &segment_digest(image, mq))
    }
}

impl RetrievalAgent for CassetteReplay {
    fn retrieve(&self, keywords: &[String]) -> Result<RetrievedContext, AgentError> {
        self.next(InteractionKind::Retrieve, &retrieve_digest(keywords))
    }
}
