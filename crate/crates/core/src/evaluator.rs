// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Self-correction: judging a mask and picking between two candidates.

use log::warn;
use thiserror::Error;

use crate::agents::{AgentError, ChatAgent, ChatRequest};
use crate::maskops::{render_masked, MaskError};
use crate::protocol::{
    parse_compare, parse_self_correction, render_compare, render_self_correction,
    repair_instruction, CompareChoice, ImageRef,
};
use crate::types::{EvalVerdict, ImageData, RasterMask, SegQuery, SegmentorCapabilities};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluatorError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    pub verdict: EvalVerdict,
    /// The reply never parsed and the mask was accepted by default.
    pub fail_open: bool,
    pub chat_calls: u32,
}

/// Shows the evaluator the image and the masked composite and parses its
/// verdict.
///
/// A reply that still fails to parse after one repair request is treated as
/// "correct" and flagged, so a flaky evaluator cannot make things worse.
pub fn assess_and_refine(
    image: &ImageData,
    mask: &RasterMask,
    query: &SegQuery,
    caps: &SegmentorCapabilities,
    chat: &dyn ChatAgent,
) -> Result<Assessment, EvaluatorError> {
    let masked = render_masked(image, mask)?;
    let prompt = render_self_correction(query, caps);
    let request = ChatRequest::from_prompt(&prompt, |r| match r {
        ImageRef::Input => Some(image.clone()),
        ImageRef::Masked => Some(masked.clone()),
        _ => None,
    })?;
    let reply = chat.chat(&request)?;
    if let Ok(verdict) = parse_self_correction(&reply.text, caps) {
        return Ok(Assessment {
            verdict,
            fail_open: false,
            chat_calls: 1,
        });
    }
    let retry = request.followed_by(&reply.text, repair_instruction());
    let second = chat.chat(&retry)?;
    match parse_self_correction(&second.text, caps) {
        Ok(verdict) => Ok(Assessment {
            verdict,
            fail_open: false,
            chat_calls: 2,
        }),
        Err(e) => {
            warn!("evaluator reply unparseable after repair ({e}); accepting the mask");
            Ok(Assessment {
                verdict: EvalVerdict::accept(format!("evaluator output could not be parsed: {e}")),
                fail_open: true,
                chat_calls: 2,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChooseOutcome {
    pub choice: CompareChoice,
    pub mask: RasterMask,
    /// No `<choice>` tag was found; the refined mask was kept.
    pub tag_missing: bool,
}

/// Asks the evaluator whether the previous or the refined mask fits the query
/// better. A reply without a choice tag keeps the refined mask.
pub fn choose(
    image: &ImageData,
    query: &SegQuery,
    previous: &RasterMask,
    refined: &RasterMask,
    chat: &dyn ChatAgent,
) -> Result<ChooseOutcome, EvaluatorError> {
    let a = render_masked(image, previous)?;
    let b = render_masked(image, refined)?;
    let request = ChatRequest::from_prompt(&render_compare(query), |r| match r {
        ImageRef::Input => Some(image.clone()),
        ImageRef::CandidateA => Some(a.clone()),
        ImageRef::CandidateB => Some(b.clone()),
        _ => None,
    })?;
    let reply = chat.chat(&request)?;
    let (choice, tag_missing) = match parse_compare(&reply.text) {
        Ok(c) => (c, false),
        Err(_) => (CompareChoice::Refined, true),
    };
    let mask = match choice {
        CompareChoice::Previous => previous.clone(),
        CompareChoice::Refined => refined.clone(),
    };
    Ok(ChooseOutcome {
        choice,
        mask,
        tag_missing,
    })
}
