// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Backend selection shared by `run` and `eval`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use cotseg::agents::{
    AgentBundle, ChatAgent, HttpSegmenter, LocalCorpus, NoRetrieval, OpenAiChat, OracleSegmenter,
    ScriptedChat,
};
use cotseg::bench::Sample;
use cotseg::{AgentError, RetrievalAgent, Segmenter};

#[derive(Debug, Clone, Args)]
pub struct AgentArgs {
    /// Replay a recorded cassette (a directory of per-sample cassettes for `eval`).
    /// No network access is made.
    #[arg(long, value_name = "CASSETTE", conflicts_with_all = ["record", "scripted", "oracle", "corpus"])]
    pub replay: Option<PathBuf>,

    /// Record every agent interaction to a cassette (a directory for `eval`).
    #[arg(long, value_name = "CASSETTE")]
    pub record: Option<PathBuf>,

    /// Answer chat requests from a keyword script instead of the chat endpoint.
    #[arg(long, value_name = "SCRIPT")]
    pub scripted: Option<PathBuf>,

    /// Segment from a directory of per-label mask PNGs instead of the segmenter endpoint.
    #[arg(long, value_name = "DIR")]
    pub oracle: Option<PathBuf>,

    /// Local retrieval corpus of keyword-named files.
    #[arg(long, value_name = "DIR")]
    pub corpus: Option<PathBuf>,

    /// Chat model name sent to the chat endpoint.
    #[arg(long, default_value = "gpt-4o")]
    pub model: String,
}

/// Cassette file name for a sample id such as `dog#0`.
pub fn cassette_file(id: &str) -> String {
    format!("{}.jsonl", id.replace(['#', '/', '\\'], "_"))
}

/// Backends that are built once and shared by every run.
pub struct Backends {
    args: AgentArgs,
    oracle: Option<Arc<OracleSegmenter>>,
}

impl Backends {
    pub fn new(args: &AgentArgs) -> Result<Self> {
        let oracle = match &args.oracle {
            Some(dir) => Some(Arc::new(OracleSegmenter::from_dir(dir).with_context(
                || format!("loading oracle masks from {}", dir.display()),
            )?)),
            None => None,
        };
        Ok(Self {
            args: args.clone(),
            oracle,
        })
    }

    fn live(&self) -> Result<AgentBundle, AgentError> {
        let chat: Arc<dyn ChatAgent> = match &self.args.scripted {
            Some(path) => Arc::new(ScriptedChat::from_file(path)?),
            None => Arc::new(OpenAiChat::from_env(self.args.model.clone())?),
        };
        let segmenter: Arc<dyn Segmenter> = match &self.oracle {
            Some(o) => o.clone(),
            None => Arc::new(HttpSegmenter::from_env()?),
        };
        let retrieval: Arc<dyn RetrievalAgent> = match &self.args.corpus {
            Some(dir) => Arc::new(LocalCorpus::new(dir)),
            None => Arc::new(NoRetrieval),
        };
        Ok(AgentBundle::new(chat, segmenter, retrieval))
    }

    fn bundle(
        &self,
        replay: Option<PathBuf>,
        record: Option<PathBuf>,
    ) -> Result<AgentBundle, AgentError> {
        if let Some(path) = replay {
            return AgentBundle::replay(path);
        }
        let live = self.live()?;
        match record {
            Some(path) => live.recording(path),
            None => Ok(live),
        }
    }

    /// Agents for a single run; `--replay` and `--record` name cassette files.
    pub fn single(&self) -> Result<AgentBundle, AgentError> {
        self.bundle(self.args.replay.clone(), self.args.record.clone())
    }

    /// Agents for one dataset sample; `--replay` and `--record` name directories.
    pub fn for_sample(&self, sample: &Sample) -> Result<AgentBundle, AgentError> {
        let file = cassette_file(&sample.id);
        let at = |dir: &Option<PathBuf>| dir.as_deref().map(|d: &Path| d.join(&file));
        self.bundle(at(&self.args.replay), at(&self.args.record))
    }

    pub fn record_dir(&self) -> Option<&Path> {
        self.args.record.as_deref()
    }
}
