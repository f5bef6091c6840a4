// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Prompt rendering and parsing of the MLLM's free-text replies.
//!
//! Parsers scan for literal markers (`Question k:`, `Answer k:`, `Summary:`,
//! `Prompt:`, tag pairs such as `<correctness>…</correctness>`) rather than
//! trying to parse a full grammar: whitespace, bullets and line breaks in
//! model output drift from reply to reply, the markers do not.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::RetrievedContext;
use crate::types::{
    validate_meta_query, CoTTrace, CotStep, EvalVerdict, MetaQuery, RejectReason, ScoreSemantics,
    SegQuery, SegmentorCapabilities,
};

pub const FIRST_TURN_TEMPLATE: &str = include_str!("../templates/first_turn.txt");
pub const NO_COT_TEMPLATE: &str = include_str!("../templates/no_cot.txt");
pub const SELF_CORRECTION_TEMPLATE: &str = include_str!("../templates/self_correction.txt");
pub const COMPARE_TEMPLATE: &str = include_str!("../templates/compare.txt");
pub const KEYWORDS_TEMPLATE: &str = include_str!("../templates/keywords.txt");
pub const REPAIR_TEMPLATE: &str = include_str!("../templates/repair.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("model output is empty")]
    EmptyOutput,
    #[error("no `Prompt:` line found in model output")]
    MissingPromptLine,
    #[error("no correctness verdict found in model output")]
    MissingCorrectnessTag,
    #[error("verdict is incorrect but both refinement directives are None")]
    InconsistentVerdict,
    #[error("refinement directive rejected: {0}")]
    Directive(RejectReason),
    #[error("no <choice>A|B</choice> tag found in model output")]
    MissingChoiceTag,
}

/// Placeholder for an image the caller attaches when building the request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRef {
    Input,
    Masked,
    Annotated,
    Retrieved(usize),
    CandidateA,
    CandidateB,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTurn {
    pub text: String,
    pub images: Vec<ImageRef>,
}

impl PromptTurn {
    fn new(text: impl Into<String>, images: Vec<ImageRef>) -> Self {
        Self {
            text: text.into(),
            images,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText {
    pub system: String,
    pub user_turns: Vec<PromptTurn>,
}

/// How many question/answer pairs the first turn asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CotInstruction {
    #[default]
    Variational,
    Exact(u32),
    /// No chain of thought: the model names the target directly.
    Disabled,
}

#[derive(Debug, Clone, Default)]
pub struct FirstTurnOptions<'a> {
    pub cot: CotInstruction,
    pub retrieved: Option<&'a RetrievedContext>,
    /// Text describing a user annotation; attached with [`ImageRef::Annotated`].
    pub control_description: Option<&'a str>,
}

/// One sentence per capability field, then the backend's own description.
pub fn capability_text(caps: &SegmentorCapabilities) -> String {
    let types: Vec<&str> = caps.input_types.iter().map(|t| t.as_str()).collect();
    let scores = match caps.score_semantics {
        ScoreSemantics::Binary => "binary",
        ScoreSemantics::Soft => "soft (probability-like)",
    };
    let multi = if caps.multi_object { "can" } else { "cannot" };
    format!(
        "Segmentation model capabilities: it accepts the following input types: {}. Its output scores are {scores}. It {multi} segment multiple objects from a single query. {}",
        types.join(", "),
        caps.description.trim()
    )
}

fn query_slot(query: &SegQuery) -> &str {
    if query.text.trim().is_empty() {
        "(no text query; the target is marked on the annotated image)"
    } else {
        query.text.trim()
    }
}

fn fill(template: &str, query: &str, capabilities: &str) -> String {
    template
        .replace("{{CAPABILITIES}}", capabilities)
        .replace("{{QUERY}}", query)
        .trim_end()
        .to_string()
}

pub fn render_first_turn(
    query: &SegQuery,
    caps: &SegmentorCapabilities,
    retrieved: Option<&RetrievedContext>,
) -> PromptText {
    render_first_turn_with(
        query,
        caps,
        &FirstTurnOptions {
            retrieved,
            ..Default::default()
        },
    )
}

pub fn render_first_turn_with(
    query: &SegQuery,
    caps: &SegmentorCapabilities,
    opts: &FirstTurnOptions<'_>,
) -> PromptText {
    let mut capabilities = capability_text(caps);
    let template = match opts.cot {
        CotInstruction::Disabled => NO_COT_TEMPLATE,
        CotInstruction::Variational => FIRST_TURN_TEMPLATE,
        CotInstruction::Exact(n) => {
            capabilities.push_str(&format!("\nUse exactly {n} question-answer pairs."));
            FIRST_TURN_TEMPLATE
        }
    };
    let system = fill(template, query_slot(query), &capabilities);

    let mut user_turns = vec![PromptTurn::new("Input image.", vec![ImageRef::Input])];
    if let Some(desc) = opts.control_description {
        user_turns.push(PromptTurn::new(desc, vec![ImageRef::Annotated]));
    }
    if let Some(ctx) = opts.retrieved {
        for snippet in &ctx.snippets {
            user_turns.push(PromptTurn::new(
                format!("Retrieved reference information:\n{snippet}"),
                vec![],
            ));
        }
        if !ctx.images.is_empty() {
            user_turns.push(PromptTurn::new(
                "Retrieved reference images.",
                (0..ctx.images.len()).map(ImageRef::Retrieved).collect(),
            ));
        }
    }
    PromptText { system, user_turns }
}

pub fn render_self_correction(query: &SegQuery, caps: &SegmentorCapabilities) -> PromptText {
    PromptText {
        system: fill(
            SELF_CORRECTION_TEMPLATE,
            query_slot(query),
            &capability_text(caps),
        ),
        user_turns: vec![
            PromptTurn::new("Original image.", vec![ImageRef::Input]),
            PromptTurn::new("Segmentation result after masking.", vec![ImageRef::Masked]),
        ],
    }
}

pub fn render_compare(query: &SegQuery) -> PromptText {
    PromptText {
        system: fill(COMPARE_TEMPLATE, query_slot(query), ""),
        user_turns: vec![
            PromptTurn::new("Original image.", vec![ImageRef::Input]),
            PromptTurn::new(
                "Candidate A (previous segmentation).",
                vec![ImageRef::CandidateA],
            ),
            PromptTurn::new(
                "Candidate B (refined segmentation).",
                vec![ImageRef::CandidateB],
            ),
        ],
    }
}

pub fn render_keywords(query: &SegQuery) -> PromptText {
    PromptText {
        system: fill(KEYWORDS_TEMPLATE, query_slot(query), ""),
        user_turns: vec![PromptTurn::new("List the keywords.", vec![])],
    }
}

pub fn repair_instruction() -> &'static str {
    REPAIR_TEMPLATE.trim()
}

/// Result of parsing the reasoner's first-turn reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirstTurnParse {
    pub trace: CoTTrace,
    pub prompt_line: String,
    pub labels: Vec<String>,
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes dangling list syntax left between a field and the next marker.
fn clean_field(s: &str) -> String {
    static TAIL: OnceLock<Regex> = OnceLock::new();
    let tail = TAIL.get_or_init(|| Regex::new(r"(?:\s*(?:\d+\.|[-*•]|\*\*))+\s*$").unwrap());
    let s = squash(s);
    let s = s.trim_start_matches(['-', '*', '•', ' ']);
    tail.replace(s, "").trim().to_string()
}

fn prompt_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?mi)^[ \t]*(?:[-*•][ \t]*)?(?:\*\*)?prompt(?:\*\*)?[ \t]*:(?:\*\*)?").unwrap()
    })
}

fn inline_prompt_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:^|\s)-\s*prompt\s*:").unwrap())
}

pub fn parse_first_turn(text: &str) -> Result<FirstTurnParse, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyOutput);
    }
    let marker = prompt_marker()
        .find_iter(text)
        .last()
        .or_else(|| inline_prompt_marker().find_iter(text).last())
        .ok_or(ParseError::MissingPromptLine)?;

    let after = &text[marker.end()..];
    let mut lines = after.lines();
    let mut prompt_line = squash(lines.next().unwrap_or(""));
    if prompt_line.is_empty() {
        prompt_line = lines
            .by_ref()
            .map(squash)
            .find(|l| !l.is_empty())
            .unwrap_or_default();
    }
    if prompt_line.is_empty() {
        return Err(ParseError::MissingPromptLine);
    }
    let labels = lines
        .map(|l| strip_labels_prefix(l.trim()))
        .find(|l| !l.is_empty())
        .map(parse_labels)
        .unwrap_or_default();

    let trace = parse_trace(&text[..marker.start()]);
    Ok(FirstTurnParse {
        trace,
        prompt_line,
        labels,
    })
}

fn strip_labels_prefix(line: &str) -> &str {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?i)^(?:[-*•]\s*)?(?:\*\*)?labels?(?:\*\*)?\s*:(?:\*\*)?\s*").unwrap()
    });
    match re.find(line) {
        Some(m) => line[m.end()..].trim(),
        None => line.trim_start_matches(['-', '*', '•', ' ']).trim(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TraceMarker {
    Question(u32),
    Answer(u32),
    Summary,
}

fn parse_trace(region: &str) -> CoTTrace {
    static QA: OnceLock<Regex> = OnceLock::new();
    static SUMMARY: OnceLock<Regex> = OnceLock::new();
    let qa = QA.get_or_init(|| Regex::new(r"(?i)\b(question|answer)\s*(\d+)\s*:").unwrap());
    let summary = SUMMARY.get_or_init(|| Regex::new(r"(?i)\bsummary\s*:").unwrap());

    let mut markers: Vec<(usize, usize, TraceMarker)> = qa
        .captures_iter(region)
        .map(|c| {
            let m = c.get(0).unwrap();
            let k = c[2].parse().unwrap_or(0);
            let kind = if c[1].eq_ignore_ascii_case("question") {
                TraceMarker::Question(k)
            } else {
                TraceMarker::Answer(k)
            };
            (m.start(), m.end(), kind)
        })
        .collect();
    if let Some(m) = summary.find_iter(region).last() {
        markers.push((m.start(), m.end(), TraceMarker::Summary));
    }
    markers.sort_by_key(|m| m.0);

    let mut steps: Vec<(u32, CotStep, bool)> = Vec::new();
    let mut summary_text = String::new();
    for (i, &(_, end, kind)) in markers.iter().enumerate() {
        let stop = markers.get(i + 1).map_or(region.len(), |m| m.0);
        let body = clean_field(&region[end..stop]);
        match kind {
            TraceMarker::Question(k) => steps.push((
                k,
                CotStep {
                    question: body,
                    answer: String::new(),
                },
                false,
            )),
            TraceMarker::Answer(k) => {
                match steps
                    .iter_mut()
                    .rev()
                    .find(|(qk, _, answered)| *qk == k && !answered)
                {
                    Some(slot) => {
                        slot.1.answer = body;
                        slot.2 = true;
                    }
                    None => steps.push((
                        k,
                        CotStep {
                            question: String::new(),
                            answer: body,
                        },
                        true,
                    )),
                }
            }
            TraceMarker::Summary => summary_text = body,
        }
    }
    let steps: Vec<CotStep> = steps.into_iter().map(|(_, s, _)| s).collect();
    if summary_text.is_empty() {
        if let Some(last) = steps.last() {
            summary_text = last.answer.clone();
        }
    }
    CoTTrace {
        steps,
        summary: summary_text,
    }
}

fn is_none_literal(s: &str) -> bool {
    let t = s.trim().trim_end_matches('.').trim();
    t.is_empty() || t.eq_ignore_ascii_case("none")
}

/// Splits a period-separated label list. A lone `None` means no labels.
pub fn parse_labels(text: &str) -> Vec<String> {
    let t = text.trim();
    if t.trim_end_matches('.').trim().eq_ignore_ascii_case("none") {
        return Vec::new();
    }
    t.split('.')
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

fn tag_content<'t>(text: &'t str, tag: &str) -> Option<&'t str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let lower = text.to_ascii_lowercase();
    let start = lower.find(&open)? + open.len();
    let end = start + lower[start..].find(&close)?;
    Some(&text[start..end])
}

/// Finds `Positive:` / `Negative:` markers in `section` and returns the text
/// up to the next one.
fn directive_fields(section: &str) -> Vec<(String, &str)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)\b(positive|negative)\s*:").unwrap());
    let found: Vec<(usize, usize, String)> = re
        .captures_iter(section)
        .map(|c| {
            let m = c.get(0).unwrap();
            (m.start(), m.end(), c[1].to_ascii_lowercase())
        })
        .collect();
    found
        .iter()
        .enumerate()
        .map(|(i, (_, end, name))| {
            let stop = found.get(i + 1).map_or(section.len(), |n| n.0);
            (name.clone(), &section[*end..stop])
        })
        .collect()
}

fn first_field<'t>(fields: &[(String, &'t str)], name: &str) -> Option<&'t str> {
    fields.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
}

/// Parses the evaluator's reply into a verdict.
///
/// Tagged fields (`<correctness>`, `<positive>`, `<plabels>` …) are preferred;
/// untagged `Correctness:` / `Positive:` / `Negative:` markers under the
/// meta-query and `Labels:` headings are accepted as well. A `None` directive
/// is absent. Directives are text meta-queries checked against `caps`.
pub fn parse_self_correction(
    text: &str,
    caps: &SegmentorCapabilities,
) -> Result<EvalVerdict, ParseError> {
    static TAGGED: OnceLock<Regex> = OnceLock::new();
    static MARKED: OnceLock<Regex> = OnceLock::new();
    static LABELS: OnceLock<Regex> = OnceLock::new();
    static REASONING: OnceLock<Regex> = OnceLock::new();
    if text.trim().is_empty() {
        return Err(ParseError::EmptyOutput);
    }
    let tagged = TAGGED.get_or_init(|| {
        Regex::new(r"(?is)<correctness>\s*\**\s*(true|false)\s*\.?\s*\**\s*</correctness>").unwrap()
    });
    let marked = MARKED
        .get_or_init(|| Regex::new(r"(?i)\bcorrectness\s*\**\s*:\s*\**\s*(true|false)\b").unwrap());
    let caps_match = tagged
        .captures(text)
        .or_else(|| marked.captures(text))
        .ok_or(ParseError::MissingCorrectnessTag)?;
    let whole = caps_match.get(0).unwrap();
    let correct = caps_match[1].eq_ignore_ascii_case("true");

    // reasoning is everything before the correctness line
    let line_start = text[..whole.start()].rfind('\n').map_or(0, |i| i + 1);
    let reasoning_re = REASONING.get_or_init(|| {
        Regex::new(r"(?i)^\s*(?:[-*•]\s*)?(?:\*\*)?reasoning process(?:\*\*)?\s*:").unwrap()
    });
    let mut reasoning = text[..line_start].trim();
    if let Some(m) = reasoning_re.find(reasoning) {
        reasoning = reasoning[m.end()..].trim();
    }
    let reasoning = reasoning
        .trim_end_matches(['-', ',', ' ', '\n'])
        .to_string();

    if correct {
        return Ok(EvalVerdict::accept(reasoning));
    }

    let after = &text[whole.end()..];
    let labels_re = LABELS.get_or_init(|| {
        Regex::new(r"(?mi)^[ \t]*(?:[-*•][ \t]*)?(?:\*\*)?labels(?:\*\*)?[ \t]*:").unwrap()
    });
    let (meta_section, label_section) = match labels_re.find(after) {
        Some(m) => (&after[..m.start()], &after[m.end()..]),
        None => (after, ""),
    };
    let meta_fields = directive_fields(meta_section);
    let label_fields = directive_fields(label_section);

    let field = |tag: &str, marker: &str, fields: &[(String, &str)]| -> Option<String> {
        tag_content(text, tag)
            .or_else(|| first_field(fields, marker))
            .map(clean_field)
    };
    let directive =
        |tag: &str, label_tag: &str, marker: &str| -> Result<Option<MetaQuery>, ParseError> {
            let Some(prompt) = field(tag, marker, &meta_fields) else {
                return Ok(None);
            };
            if is_none_literal(&prompt) {
                return Ok(None);
            }
            let labels = field(label_tag, marker, &label_fields)
                .map(|l| parse_labels(&l))
                .unwrap_or_default();
            let mq = MetaQuery::text(prompt, labels);
            validate_meta_query(&mq, caps).map_err(ParseError::Directive)?;
            Ok(Some(mq))
        };
    let positive = directive("positive", "plabels", "positive")?;
    let negative = directive("negative", "nlabels", "negative")?;
    EvalVerdict::reject(reasoning, positive, negative).map_err(|_| ParseError::InconsistentVerdict)
}

/// Which mask the evaluator prefers after a refinement round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareChoice {
    Previous,
    Refined,
}

pub fn parse_compare(text: &str) -> Result<CompareChoice, ParseError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)<choice>\s*([ab])\s*</choice>").unwrap());
    let c = re.captures(text).ok_or(ParseError::MissingChoiceTag)?;
    Ok(if c[1].eq_ignore_ascii_case("a") {
        CompareChoice::Previous
    } else {
        CompareChoice::Refined
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::InputType;
    use proptest::prelude::*;

    fn text_caps() -> SegmentorCapabilities {
        SegmentorCapabilities::new(
            [InputType::Text],
            ScoreSemantics::Binary,
            true,
            "Text-promptable segmenter.",
        )
        .unwrap()
    }

    #[test]
    fn first_turn_contains_template_then_query() {
        let p = render_first_turn(&SegQuery::text("the leash"), &text_caps(), None);
        let head = "You will serve as an agent for language-based image segmentation model";
        let i = p.system.find(head).unwrap();
        let j = p.system.rfind("the leash").unwrap();
        assert!(i < j);
        assert!(p.system.ends_with("the leash"));
        assert!(p.system.contains("Segmentation model capabilities"));
        assert_eq!(p.user_turns.len(), 1);
        assert_eq!(p.user_turns[0].images, vec![ImageRef::Input]);
    }

    #[test]
    fn empty_retrieval_is_identity() {
        let q = SegQuery::text("the frog");
        let empty = RetrievedContext::default();
        assert_eq!(
            render_first_turn(&q, &text_caps(), Some(&empty)),
            render_first_turn(&q, &text_caps(), None)
        );
        let ctx = RetrievedContext {
            snippets: vec!["A small green frog from Ecuador.".into()],
            images: vec![],
        };
        let with = render_first_turn(&q, &text_caps(), Some(&ctx));
        let without = render_first_turn(&q, &text_caps(), None);
        assert_eq!(with.user_turns.len(), without.user_turns.len() + 1);
        assert!(with
            .user_turns
            .last()
            .unwrap()
            .text
            .contains("A small green frog from Ecuador."));
        assert_eq!(with.system, without.system);
    }

    #[test]
    fn fixed_length_instruction() {
        let q = SegQuery::text("x");
        let opts = FirstTurnOptions {
            cot: CotInstruction::Exact(3),
            ..Default::default()
        };
        assert!(render_first_turn_with(&q, &text_caps(), &opts)
            .system
            .contains("Use exactly 3 question-answer pairs."));
        let no_cot = FirstTurnOptions {
            cot: CotInstruction::Disabled,
            ..Default::default()
        };
        let p = render_first_turn_with(&q, &text_caps(), &no_cot);
        assert!(!p.system.contains("Question 1"));
        assert!(!p.system.contains("chain of thoughts"));
    }

    #[test]
    fn self_correction_template_tags_and_capabilities() {
        let p = render_self_correction(&SegQuery::text("q"), &text_caps());
        for tag in [
            "<correctness>",
            "<positive>",
            "<negative>",
            "<plabels>",
            "<nlabels>",
        ] {
            assert!(p.system.contains(tag), "{tag}");
        }
        assert!(p.system.contains("input types: text."));
        let all =
            SegmentorCapabilities::new(InputType::ALL, ScoreSemantics::Soft, false, "d").unwrap();
        let p = render_self_correction(&SegQuery::text("q"), &all);
        assert!(p
            .system
            .contains("input types: text, points, box, scribble."));
        assert_eq!(p.user_turns[1].images, vec![ImageRef::Masked]);
    }

    #[test]
    fn renders_are_pure() {
        let q = SegQuery::text("q");
        assert_eq!(render_compare(&q), render_compare(&q));
        assert_eq!(
            render_self_correction(&q, &text_caps()),
            render_self_correction(&q, &text_caps())
        );
    }

    #[test]
    fn labels() {
        assert_eq!(
            parse_labels("cat. remote control. television."),
            vec!["cat", "remote control", "television"]
        );
        assert!(parse_labels("None.").is_empty());
        assert!(parse_labels("none").is_empty());
        assert!(parse_labels("   ").is_empty());
        assert_eq!(parse_labels("shell"), vec!["shell"]);
        assert_eq!(
            parse_labels("person's clothing."),
            vec!["person's clothing"]
        );
    }

    #[test]
    fn first_turn_without_questions() {
        let p = parse_first_turn("- Prompt: Please segment the sofa of the image.\nsofa.").unwrap();
        assert!(p.trace.is_empty());
        assert_eq!(p.prompt_line, "Please segment the sofa of the image.");
        assert_eq!(p.labels, vec!["sofa"]);
    }

    #[test]
    fn first_turn_missing_prompt() {
        assert_eq!(
            parse_first_turn("- Question 1: what? - Answer 1: that."),
            Err(ParseError::MissingPromptLine)
        );
        assert_eq!(parse_first_turn("  \n"), Err(ParseError::EmptyOutput));
    }

    #[test]
    fn first_turn_inline_pairs() {
        let text = "- Question 1: What is shown? - Answer 1: A kitchen.\n\
                    - Question 2: Where is the kettle?\n- Answer 2: On the stove.\n\
                    Summary: A kitchen with a kettle on the stove.\n\
                    - Prompt: The image shows a kitchen. Please segment the kettle located at the center of the image.\n\
                    kettle.";
        let p = parse_first_turn(text).unwrap();
        assert_eq!(p.trace.steps.len(), 2);
        assert_eq!(p.trace.steps[0].question, "What is shown?");
        assert_eq!(p.trace.steps[0].answer, "A kitchen.");
        assert_eq!(p.trace.steps[1].answer, "On the stove.");
        assert_eq!(p.trace.summary, "A kitchen with a kettle on the stove.");
        assert_eq!(p.labels, vec!["kettle"]);
    }

    #[test]
    fn self_correction_accept_and_inconsistent() {
        let v = parse_self_correction("<correctness>True</correctness>", &text_caps()).unwrap();
        assert!(v.correct());
        assert!(v.positive().is_none() && v.negative().is_none());
        let bad = "<correctness>False</correctness>\n<positive>None</positive>\n<negative>None</negative>";
        assert_eq!(
            parse_self_correction(bad, &text_caps()),
            Err(ParseError::InconsistentVerdict)
        );
        assert_eq!(
            parse_self_correction("looks good to me", &text_caps()),
            Err(ParseError::MissingCorrectnessTag)
        );
    }

    #[test]
    fn self_correction_tagged() {
        let text = "- Reasoning process:\n1. Original image: a desk.\n- Correctness: <correctness>false</correctness>\n\
            - Meta-queries (Output if the correctness is false):\n\
            1. Positive: <positive>Please also segment the mouse, located at the right of the original image.</positive>\n\
            2. Negative: <negative>Please remove the cup, located at the left of the segmentation image.</negative>\n\
            - Labels:\n1. Positive: <plabels>mouse.</plabels>\n2. Negative: <nlabels>cup. saucer.</nlabels>";
        let v = parse_self_correction(text, &text_caps()).unwrap();
        assert!(!v.correct());
        assert_eq!(v.reasoning(), "1. Original image: a desk.");
        let p = v.positive().unwrap();
        assert_eq!(
            p.prompt,
            "Please also segment the mouse, located at the right of the original image."
        );
        assert_eq!(p.labels, vec!["mouse"]);
        assert_eq!(p.input_type, InputType::Text);
        assert_eq!(v.negative().unwrap().labels, vec!["cup", "saucer"]);
    }

    #[test]
    fn directive_needs_text_capability() {
        let boxes =
            SegmentorCapabilities::new([InputType::Box], ScoreSemantics::Binary, true, "box only")
                .unwrap();
        let text =
            "<correctness>False</correctness><positive>Please also segment the cat.</positive>";
        assert_eq!(
            parse_self_correction(text, &boxes),
            Err(ParseError::Directive(RejectReason::UnsupportedInputType))
        );
    }

    #[test]
    fn compare_choice() {
        assert_eq!(
            parse_compare("<choice>A</choice>"),
            Ok(CompareChoice::Previous)
        );
        assert_eq!(
            parse_compare("<choice>B</choice>"),
            Ok(CompareChoice::Refined)
        );
        assert_eq!(
            parse_compare("I think B is better. <choice>B</choice>"),
            Ok(CompareChoice::Refined)
        );
        assert_eq!(
            parse_compare("<choice> a </choice>"),
            Ok(CompareChoice::Previous)
        );
        assert_eq!(parse_compare("B"), Err(ParseError::MissingChoiceTag));
    }

    fn arb_label() -> impl Strategy<Value = String> {
        "[a-zA-Z'][a-zA-Z' -]{0,14}[a-zA-Z']".prop_map(|s| s.trim().to_string())
    }

    proptest! {
        #[test]
        fn labels_round_trip(labels in proptest::collection::vec(arb_label(), 0..8)) {
            prop_assume!(!(labels.len() == 1 && labels[0].eq_ignore_ascii_case("none")));
            let joined = labels.join(". ");
            prop_assert_eq!(parse_labels(&joined), labels);
        }

        #[test]
        fn self_correction_never_inconsistent(text in "[ -~\n]{0,200}") {
            if let Ok(v) = parse_self_correction(&text, &text_caps()) {
                prop_assert_eq!(v.correct(), v.positive().is_none() && v.negative().is_none());
            }
        }
    }
}
