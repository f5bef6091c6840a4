// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! The end-to-end state machine.
//!
//! ```text
//! capabilities -> reason -> segment -> binarize
//!     loop r in 1..=max_refine_rounds:
//!         assess; correct => stop (judged_correct)
//!         segment s_P, s_N; combine; choose previous/refined
//!     => stop (max_rounds)
//! ```
//!
//! Agent failures before the first mask end the run without a mask; later
//! failures keep the last good mask. Either way the termination reason is
//! `agent_failure_fallback`.

use std::time::Instant;

use log::{info, warn};
use thiserror::Error;

use crate::agents::{segment_checked, AgentBundle, AgentError};
use crate::evaluator::{assess_and_refine, choose};
use crate::maskops::{binarize, combine};
use crate::reasoner::reason;
use crate::record::{
    RevertDecision, RoundRecord, RunFlag, RunRecord, Stage, StageTiming, TerminationReason,
};
use crate::types::{
    CoTTrace, CotLengthMode, ImageData, InvariantError, MetaQuery, PipelineConfig, RasterMask,
    ScoreMap, SegQuery,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(InvariantError),
    #[error("invalid query: {0}")]
    Query(InvariantError),
}

fn timed<T>(stage: Stage, log: &mut Vec<StageTiming>, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    log.push(StageTiming {
        stage,
        seconds: start.elapsed().as_secs_f64(),
    });
    out
}

struct Run<'a> {
    image: &'a ImageData,
    cfg: &'a PipelineConfig,
    agents: &'a AgentBundle,
    record: RunRecord,
    started: Instant,
}

impl Run<'_> {
    fn finish(mut self, reason: TerminationReason) -> RunRecord {
        self.record.termination_reason = reason;
        self.record.final_mask = self.record.rounds.last().map(|r| r.mask.clone());
        self.record.total_seconds = self.started.elapsed().as_secs_f64();
        info!(
            "run on {} finished: {:?} after {} refinement round(s)",
            self.record.image_id,
            reason,
            self.record.refinement_rounds()
        );
        self.record
    }

    fn fail(mut self, err: impl std::fmt::Display) -> RunRecord {
        warn!("agent failure: {err}");
        self.record.errors.push(err.to_string());
        self.finish(TerminationReason::AgentFailureFallback)
    }

    fn flag(&mut self, flag: RunFlag) {
        if !self.record.flags.contains(&flag) {
            self.record.flags.push(flag);
        }
    }

    fn segment(
        &self,
        mq: &MetaQuery,
        log: &mut Vec<StageTiming>,
        stage: Stage,
    ) -> Result<(ScoreMap, RasterMask), AgentError> {
        let scores = timed(stage, log, || {
            segment_checked(self.agents.segmenter.as_ref(), self.image, mq)
        })?;
        let mask = binarize(&scores, self.cfg.binarize_threshold);
        Ok((scores, mask))
    }
}

/// Runs reasoning, segmentation and self-correction for one image-query pair.
///
/// Only invalid inputs are errors; agent failures are reported inside the
/// returned record.
pub fn run(
    image: &ImageData,
    query: &SegQuery,
    cfg: &PipelineConfig,
    agents: &AgentBundle,
) -> Result<RunRecord, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    query.validate().map_err(PipelineError::Query)?;

    let mut run = Run {
        image,
        cfg,
        agents,
        record: RunRecord {
            config: cfg.clone(),
            query: query.clone(),
            image_id: image.source_id().to_string(),
            capabilities: None,
            trace: CoTTrace::default(),
            keywords: Vec::new(),
            rounds: Vec::new(),
            final_mask: None,
            termination_reason: TerminationReason::AgentFailureFallback,
            flags: Vec::new(),
            errors: Vec::new(),
            durations: Vec::new(),
            total_seconds: 0.0,
        },
        started: Instant::now(),
    };

    let mut log = Vec::new();
    let caps = timed(Stage::Capabilities, &mut log, || {
        agents.segmenter.capabilities()
    });
    run.record.durations = std::mem::take(&mut log);
    let caps = match caps {
        Ok(c) => c,
        Err(e) => return Ok(run.fail(e)),
    };
    run.record.capabilities = Some(caps.clone());

    let outcome = timed(Stage::Reason, &mut log, || {
        reason(
            image,
            query,
            &caps,
            cfg,
            agents.chat.as_ref(),
            agents.retrieval.as_ref(),
        )
    });
    run.record.durations.append(&mut log);
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => return Ok(run.fail(e)),
    };
    run.record.trace = outcome.trace;
    run.record.keywords = outcome.keywords;
    if outcome.fallback {
        run.flag(RunFlag::ReasonerFallback);
    }

    let (scores, mut current) = match run.segment(&outcome.meta_query, &mut log, Stage::Segment) {
        Ok(s) => s,
        Err(e) => {
            run.record.durations.append(&mut log);
            return Ok(run.fail(e));
        }
    };
    run.record.rounds.push(RoundRecord {
        round: 0,
        meta_queries: vec![outcome.meta_query],
        score_maps: vec![scores],
        masks: vec![current.clone()],
        verdict: None,
        candidate: None,
        revert: None,
        mask: current.clone(),
        durations: std::mem::take(&mut log),
    });

    for r in 1..=cfg.max_refine_rounds {
        let mut round = RoundRecord {
            round: r,
            meta_queries: Vec::new(),
            score_maps: Vec::new(),
            masks: Vec::new(),
            verdict: None,
            candidate: None,
            revert: None,
            mask: current.clone(),
            durations: Vec::new(),
        };

        let assessed = timed(Stage::Assess, &mut round.durations, || {
            assess_and_refine(image, &current, query, &caps, agents.chat.as_ref())
        });
        let assessment = match assessed {
            Ok(a) => a,
            Err(e) => {
                run.record.rounds.push(round);
                return Ok(run.fail(e));
            }
        };
        if assessment.fail_open {
            run.flag(RunFlag::EvaluatorFailOpen);
        }
        let verdict = assessment.verdict;
        round.verdict = Some(verdict.clone());
        if verdict.correct() {
            run.record.rounds.push(round);
            return Ok(run.finish(TerminationReason::JudgedCorrect));
        }

        let (w, h) = (image.width(), image.height());
        let directive =
            |mq: Option<&MetaQuery>, round: &mut RoundRecord| -> Result<RasterMask, String> {
                let Some(mq) = mq else {
                    return Ok(RasterMask::empty(w, h));
                };
                let (scores, mask) = run
                    .segment(mq, &mut round.durations, Stage::Refine)
                    .map_err(|e| e.to_string())?;
                round.meta_queries.push(mq.clone());
                round.score_maps.push(scores);
                round.masks.push(mask.clone());
                Ok(mask)
            };
        let pos = directive(verdict.positive(), &mut round);
        let neg = match pos {
            Ok(_) => directive(verdict.negative(), &mut round),
            Err(_) => Ok(RasterMask::empty(w, h)),
        };
        let (pos, neg) = match (pos, neg) {
            (Ok(p), Ok(n)) => (p, n),
            (Err(e), _) | (_, Err(e)) => {
                run.record.rounds.push(round);
                return Ok(run.fail(e));
            }
        };
        let candidate = match combine(&current, &pos, &neg) {
            Ok(c) => c,
            Err(e) => {
                run.record.rounds.push(round);
                return Ok(run.fail(e));
            }
        };
        round.candidate = Some(candidate.clone());

        if cfg.revert_enabled {
            let chosen = timed(Stage::Choose, &mut round.durations, || {
                choose(image, query, &current, &candidate, agents.chat.as_ref())
            });
            match chosen {
                Ok(c) => {
                    if c.tag_missing {
                        run.flag(RunFlag::ChoiceTagMissing);
                    }
                    round.revert = Some(RevertDecision::Chose(c.choice));
                    current = c.mask;
                }
                Err(e) => {
                    run.record.rounds.push(round);
                    return Ok(run.fail(e));
                }
            }
        } else {
            round.revert = Some(RevertDecision::Skipped);
            current = candidate;
        }
        round.mask = current.clone();
        run.record.rounds.push(round);
    }
    Ok(run.finish(TerminationReason::MaxRounds))
}

/// [`run`] with chain-of-thought disabled: the model names the target directly.
pub fn run_no_cot(
    image: &ImageData,
    query: &SegQuery,
    cfg: &PipelineConfig,
    agents: &AgentBundle,
) -> Result<RunRecord, PipelineError> {
    let cfg = PipelineConfig {
        max_cot_rounds: 0,
        cot_length_mode: CotLengthMode::Variational,
        ..cfg.clone()
    };
    run(image, query, &cfg, agents)
}
