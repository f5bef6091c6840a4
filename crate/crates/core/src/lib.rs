// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Training-free reasoning segmentation.
//!
//! A chat model reasons about an implicit query in question/answer steps and
//! compiles an explicit meta-query; a promptable segmenter turns that into a
//! mask; the chat model then judges the mask and issues positive and negative
//! directives until it is satisfied or the round budget runs out.
//!
//! All model access goes through the traits in [`agents`], so runs can be
//! recorded to a cassette and replayed offline.

pub mod agents;
pub mod bench;
pub mod codec;
pub mod config;
pub mod evaluator;
pub mod maskops;
pub mod pipeline;
pub mod protocol;
pub mod reasoner;
pub mod record;
pub mod types;

pub use agents::{AgentBundle, AgentError, ChatAgent, RetrievalAgent, Segmenter};
pub use pipeline::{run, run_no_cot, PipelineError};
pub use record::{RoundRecord, RunFlag, RunRecord, TerminationReason};
pub use types::{
    ControlAnnotation, ControlKind, CotLengthMode, EvalVerdict, ImageData, InputType, MetaQuery,
    NormPoint, PipelineConfig, RasterMask, ScoreMap, SegQuery, SegmentorCapabilities,
};
