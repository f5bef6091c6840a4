// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Chain-of-thought reasoning that turns an implicit query into a meta-query.
//!
//! The whole question/answer exchange happens inside a single chat
//! completion: the first-turn template asks for every pair at once, followed
//! by a summary, a `Prompt:` line and a label list.

use log::{debug, warn};

use crate::agents::{AgentError, ChatAgent, ChatRequest, RetrievalAgent, RetrievedContext};
use crate::protocol::{
    parse_first_turn, parse_labels, render_first_turn_with, render_keywords, repair_instruction,
    CotInstruction, FirstTurnOptions, ImageRef,
};
use crate::types::{
    denormalize, validate_meta_query, CoTTrace, ControlKind, CotLengthMode, ImageData,
    InvariantError, MetaQuery, NormPoint, PipelineConfig, SegQuery, SegmentorCapabilities,
};

const ANNOTATION_RED: [u8; 3] = [255, 0, 0];

#[derive(Debug, Clone, PartialEq)]
pub struct ReasonOutcome {
    pub trace: CoTTrace,
    pub meta_query: MetaQuery,
    /// The reply could not be parsed even after a repair request.
    pub fallback: bool,
    pub keywords: Vec<String>,
    pub chat_calls: u32,
}

/// Runs the first turn and compiles a meta-query for the segmenter.
///
/// Transport errors are returned; malformed replies get one repair request
/// and then fall back to the raw query text.
pub fn reason(
    image: &ImageData,
    query: &SegQuery,
    caps: &SegmentorCapabilities,
    cfg: &PipelineConfig,
    chat: &dyn ChatAgent,
    retrieval: &dyn RetrievalAgent,
) -> Result<ReasonOutcome, AgentError> {
    let mut chat_calls = 0;
    let mut keywords = Vec::new();
    let mut retrieved = RetrievedContext::default();
    if cfg.retrieval_enabled && !query.text.trim().is_empty() {
        keywords = extract_keywords(query, chat)?;
        chat_calls += 1;
        if !keywords.is_empty() {
            retrieved = retrieval.retrieve(&keywords).unwrap_or_else(|e| {
                warn!("retrieval failed, continuing without context: {e}");
                RetrievedContext::default()
            });
        }
    }

    let control = match &query.control {
        Some(_) => Some(
            encode_control(query, image).map_err(|e| AgentError::InvalidRequest(e.to_string()))?,
        ),
        None => None,
    };

    let cot = if !cfg.cot_enabled() {
        CotInstruction::Disabled
    } else {
        match cfg.cot_length_mode {
            CotLengthMode::Fixed(n) => CotInstruction::Exact(n),
            CotLengthMode::Variational => CotInstruction::Variational,
        }
    };
    let opts = FirstTurnOptions {
        cot,
        retrieved: (!retrieved.is_empty()).then_some(&retrieved),
        control_description: control.as_ref().map(|(_, d)| d.as_str()),
    };
    let prompt = render_first_turn_with(query, caps, &opts);
    let request = ChatRequest::from_prompt(&prompt, |r| match r {
        ImageRef::Input => Some(image.clone()),
        ImageRef::Annotated => control.as_ref().map(|(img, _)| img.clone()),
        ImageRef::Retrieved(i) => retrieved.images.get(i).cloned(),
        _ => None,
    })?;

    let reply = chat.chat(&request)?;
    chat_calls += 1;
    let parsed = match parse_first_turn(&reply.text) {
        Ok(p) => Some(p),
        Err(e) => {
            debug!("first turn did not parse ({e}), asking for a repair");
            let retry = request.followed_by(&reply.text, repair_instruction());
            let second = chat.chat(&retry)?;
            chat_calls += 1;
            parse_first_turn(&second.text).ok()
        }
    };

    let Some(parsed) = parsed else {
        warn!("first turn unparseable after repair, falling back to the raw query");
        return Ok(ReasonOutcome {
            trace: CoTTrace::default(),
            meta_query: fallback_meta_query(query, caps),
            fallback: true,
            keywords,
            chat_calls,
        });
    };

    let mut trace = parsed.trace;
    let cap = match cfg.cot_length_mode {
        CotLengthMode::Fixed(n) => n.min(cfg.max_cot_rounds),
        CotLengthMode::Variational => cfg.max_cot_rounds,
    };
    trace.truncate(cap as usize);
    if trace.is_empty() {
        trace.summary.clear();
    }

    let meta_query = compile_meta_query(query, caps, parsed.prompt_line, parsed.labels);
    match meta_query {
        Some(mq) => Ok(ReasonOutcome {
            trace,
            meta_query: mq,
            fallback: false,
            keywords,
            chat_calls,
        }),
        None => Ok(ReasonOutcome {
            trace,
            meta_query: fallback_meta_query(query, caps),
            fallback: true,
            keywords,
            chat_calls,
        }),
    }
}

/// Text meta-query when the segmenter takes text, otherwise the user's
/// annotation coordinates in a modality the segmenter accepts.
fn compile_meta_query(
    query: &SegQuery,
    caps: &SegmentorCapabilities,
    prompt: String,
    labels: Vec<String>,
) -> Option<MetaQuery> {
    let text = MetaQuery::text(prompt.clone(), labels.clone());
    if validate_meta_query(&text, caps).is_ok() {
        return Some(text);
    }
    let control = query.control.as_ref()?;
    let input_type = control.kind().input_type()?;
    let spatial = MetaQuery::spatial(input_type, prompt, labels, control.coords().to_vec());
    validate_meta_query(&spatial, caps)
        .is_ok()
        .then_some(spatial)
}

fn fallback_meta_query(query: &SegQuery, caps: &SegmentorCapabilities) -> MetaQuery {
    let prompt = if query.text.trim().is_empty() {
        "Please segment the object marked on the image.".to_string()
    } else {
        query.text.trim().to_string()
    };
    compile_meta_query(query, caps, prompt.clone(), Vec::new())
        .unwrap_or_else(|| MetaQuery::text(prompt, Vec::new()))
}

/// Asks the chat agent for lookup keywords in the query.
pub fn extract_keywords(query: &SegQuery, chat: &dyn ChatAgent) -> Result<Vec<String>, AgentError> {
    if query.text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let prompt = render_keywords(query);
    let req = ChatRequest::from_prompt(&prompt, |_| None)?;
    let reply = chat.chat(&req)?;
    let text = reply.text.trim();
    let body = text
        .split_once(':')
        .filter(|(head, _)| head.trim().eq_ignore_ascii_case("keywords"))
        .map_or(text, |(_, rest)| rest);
    Ok(parse_labels(body))
}

fn disc(img: &mut ImageData, cx: u32, cy: u32, radius: f64) {
    let r = radius.ceil() as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            if (dx * dx + dy * dy) as f64 > radius * radius {
                continue;
            }
            let (x, y) = (i64::from(cx) + dx, i64::from(cy) + dy);
            if x >= 0 && y >= 0 && x < i64::from(img.width()) && y < i64::from(img.height()) {
                img.put_pixel(x as u32, y as u32, ANNOTATION_RED);
            }
        }
    }
}

/// 2px-wide segment: pixel centres within 1px of the segment.
fn thick_segment(img: &mut ImageData, a: (f64, f64), b: (f64, f64)) {
    let (w, h) = (img.width(), img.height());
    let x0 = (a.0.min(b.0) - 2.0).floor().max(0.0) as u32;
    let x1 = ((a.0.max(b.0) + 2.0).ceil() as u32).min(w - 1);
    let y0 = (a.1.min(b.1) - 2.0).floor().max(0.0) as u32;
    let y1 = ((a.1.max(b.1) + 2.0).ceil() as u32).min(h - 1);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
            };
            let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
            if (px - qx).powi(2) + (py - qy).powi(2) <= 1.0 {
                img.put_pixel(x, y, ANNOTATION_RED);
            }
        }
    }
}

fn pixel_centre(p: &NormPoint, w: u32, h: u32) -> Result<(f64, f64), InvariantError> {
    let px = denormalize(std::slice::from_ref(p), w, h)?[0];
    Ok((f64::from(px.x) + 0.5, f64::from(px.y) + 0.5))
}

/// Draws the user's annotation in red on a copy of the image and describes it.
///
/// Points become filled discs of radius `max(3px, 1% of the shorter side)`,
/// boxes a 2px outline, scribbles a 2px polyline and highlights a closed 2px
/// outline.
pub fn encode_control(
    query: &SegQuery,
    image: &ImageData,
) -> Result<(ImageData, String), InvariantError> {
    let control = query.control.as_ref().ok_or(InvariantError::EmptyQuery)?;
    control.validate()?;
    let (w, h) = (image.width(), image.height());
    let mut out = image.clone();
    let coords = control.coords();
    match control.kind() {
        ControlKind::Points => {
            let radius = (0.01 * f64::from(w.min(h))).max(3.0);
            for px in denormalize(coords, w, h)? {
                disc(&mut out, px.x, px.y, radius);
            }
        }
        ControlKind::Box => {
            let px = denormalize(coords, w, h)?;
            let (x0, x1) = (px[0].x.min(px[1].x), px[0].x.max(px[1].x));
            let (y0, y1) = (px[0].y.min(px[1].y), px[0].y.max(px[1].y));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let edge = x < x0 + 2 || x + 2 > x1 || y < y0 + 2 || y + 2 > y1;
                    if edge {
                        out.put_pixel(x, y, ANNOTATION_RED);
                    }
                }
            }
        }
        ControlKind::Scribble | ControlKind::Highlight => {
            let pts = coords
                .iter()
                .map(|p| pixel_centre(p, w, h))
                .collect::<Result<Vec<_>, _>>()?;
            for pair in pts.windows(2) {
                thick_segment(&mut out, pair[0], pair[1]);
            }
            if control.kind() == ControlKind::Highlight {
                thick_segment(&mut out, pts[pts.len() - 1], pts[0]);
            }
        }
    }
    let listed: Vec<String> = coords.iter().map(|p| p.to_string()).collect();
    let description = format!(
        "The user marked the target on the annotated image in red using a {} annotation. Normalized coordinates (x rightward, y downward, origin at the top-left corner): {}.",
        control.kind(),
        listed.join(", ")
    );
    Ok((out, description))
}
