// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Everything a run produced, in a form that serializes to `run.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{save_mask_png, CodecError};
use crate::protocol::CompareChoice;
use crate::types::{
    CoTTrace, EvalVerdict, MetaQuery, PipelineConfig, RasterMask, ScoreMap, SegQuery,
    SegmentorCapabilities,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Capabilities,
    Keywords,
    Reason,
    Segment,
    Assess,
    Refine,
    Choose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    JudgedCorrect,
    MaxRounds,
    AgentFailureFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunFlag {
    /// The reasoner never produced a parseable reply; the raw query was used.
    ReasonerFallback,
    /// An evaluator reply never parsed and was read as "correct".
    EvaluatorFailOpen,
    /// A compare reply had no choice tag; the refined mask was kept.
    ChoiceTagMissing,
}

/// How the refined mask of a round was adopted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevertDecision {
    /// The evaluator compared both masks.
    Chose(CompareChoice),
    /// Revert is disabled; the refined mask is used as is.
    Skipped,
}

/// Round 0 is the first-turn segmentation. Each later round holds one
/// verdict and, if the mask was judged wrong, the refinement it triggered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub meta_queries: Vec<MetaQuery>,
    pub score_maps: Vec<ScoreMap>,
    /// `score_maps` binarized, one per meta-query.
    pub masks: Vec<RasterMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<EvalVerdict>,
    /// Result of combining the previous mask with the directive masks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<RasterMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revert: Option<RevertDecision>,
    /// Mask in effect once the round is over.
    pub mask: RasterMask,
    pub durations: Vec<StageTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: PipelineConfig,
    pub query: SegQuery,
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<SegmentorCapabilities>,
    pub trace: CoTTrace,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
    pub rounds: Vec<RoundRecord>,
    /// Absent only when the run failed before a first mask existed.
    pub final_mask: Option<RasterMask>,
    pub termination_reason: TerminationReason,
    pub flags: Vec<RunFlag>,
    pub errors: Vec<String>,
    /// Stages outside any round (capabilities, keywords, reasoning).
    pub durations: Vec<StageTiming>,
    pub total_seconds: f64,
}

impl RunRecord {
    /// Copy with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let zero = |d: &[StageTiming]| {
            d.iter()
                .map(|t| StageTiming {
                    stage: t.stage,
                    seconds: 0.0,
                })
                .collect()
        };
        let mut out = self.clone();
        out.total_seconds = 0.0;
        out.durations = zero(&self.durations);
        for r in &mut out.rounds {
            r.durations = zero(&r.durations);
        }
        out
    }

    /// Rounds that produced a refined candidate. A round that only judged the
    /// mask correct does not count.
    pub fn refinement_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| r.candidate.is_some()).count()
    }

    pub fn first_turn_mask(&self) -> Option<&RasterMask> {
        self.rounds.first().map(|r| &r.mask)
    }

    pub fn has_flag(&self, flag: RunFlag) -> bool {
        self.flags.contains(&flag)
    }

    /// Seconds spent in `stage` over the whole run.
    pub fn stage_seconds(&self, stage: Stage) -> f64 {
        self.durations
            .iter()
            .chain(self.rounds.iter().flat_map(|r| r.durations.iter()))
            .filter(|t| t.stage == stage)
            .map(|t| t.seconds)
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run records always serialize")
    }

    /// Writes `run.json` plus one 1-bit PNG per round mask and the final mask.
    pub fn write_run_dir(&self, dir: &Path) -> Result<(), CodecError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("run.json"), self.to_json())?;
        for r in &self.rounds {
            save_mask_png(&r.mask, &dir.join(format!("round_{}_mask.png", r.round)))?;
            if let Some(c) = &r.candidate {
                save_mask_png(c, &dir.join(format!("round_{}_candidate.png", r.round)))?;
            }
        }
        if let Some(m) = &self.final_mask {
            save_mask_png(m, &dir.join("mask.png"))?;
        }
        Ok(())
    }
}
