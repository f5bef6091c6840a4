// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use super::{AgentError, Segmenter};
use crate::codec::load_mask;
use crate::types::{
    validate_meta_query, ImageData, InputType, MetaQuery, RasterMask, ScoreMap, ScoreSemantics,
    SegmentorCapabilities,
};

fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase().replace('_', " ")
}

/// Test backend mapping labels to stored masks.
///
/// Labels of the meta-query are looked up and their masks unioned. When the
/// meta-query carries no labels, every known label occurring as a whole word
/// in the prompt is used instead. Unknown labels produce an all-zero map.
///
/// Masks can be global or scoped to an image `source_id`; scoped masks win.
#[derive(Debug, Clone, Default)]
pub struct OracleSegmenter {
    global: BTreeMap<String, RasterMask>,
    scoped: BTreeMap<String, BTreeMap<String, RasterMask>>,
}

impl OracleSegmenter {
    pub fn from_masks(masks: impl IntoIterator<Item = (String, RasterMask)>) -> Self {
        Self {
            global: masks
                .into_iter()
                .map(|(k, v)| (normalize_label(&k), v))
                .collect(),
            scoped: BTreeMap::new(),
        }
    }

    pub fn with_scoped(
        mut self,
        source_id: impl Into<String>,
        masks: impl IntoIterator<Item = (String, RasterMask)>,
    ) -> Self {
        self.scoped
            .entry(source_id.into())
            .or_default()
            .extend(masks.into_iter().map(|(k, v)| (normalize_label(&k), v)));
        self
    }

    /// Reads `<dir>/<label>.png` as global masks and
    /// `<dir>/<source_id>/<label>.png` as image-scoped masks.
    /// Underscores in file names stand for spaces.
    pub fn from_dir(dir: &Path) -> Result<Self, AgentError> {
        let mut oracle = Self::default();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let path = entry.path();
            if path.is_dir() {
                let scope = entry.file_name().to_string_lossy().into_owned();
                oracle.scoped.insert(scope, read_masks(&path)?);
            }
        }
        oracle.global = read_masks(dir)?;
        Ok(oracle)
    }

    fn lookup(&self, source_id: &str, label: &str) -> Option<&RasterMask> {
        self.scoped
            .get(source_id)
            .and_then(|m| m.get(label))
            .or_else(|| self.global.get(label))
    }

    fn known_labels(&self, source_id: &str) -> Vec<&str> {
        let mut labels: Vec<&str> = self.global.keys().map(String::as_str).collect();
        if let Some(scoped) = self.scoped.get(source_id) {
            labels.extend(scoped.keys().map(String::as_str));
        }
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

fn read_masks(dir: &Path) -> Result<BTreeMap<String, RasterMask>, AgentError> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        out.insert(normalize_label(stem), load_mask(&path)?);
    }
    Ok(out)
}

fn contains_word(haystack: &str, needle: &str) -> bool {
    haystack.match_indices(needle).any(|(i, _)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + needle.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

impl Segmenter for OracleSegmenter {
    fn capabilities(&self) -> Result<SegmentorCapabilities, AgentError> {
        Ok(SegmentorCapabilities::new(
            [InputType::Text],
            ScoreSemantics::Binary,
            true,
            "Text-prompted segmenter. Give a short instruction naming the object(s) to segment and a period-separated label list.",
        )
        .expect("static descriptor is valid"))
    }

    fn segment(&self, image: &ImageData, mq: &MetaQuery) -> Result<ScoreMap, AgentError> {
        validate_meta_query(mq, &self.capabilities()?).map_err(AgentError::Rejected)?;
        let source = image.source_id();
        let labels: Vec<String> = if mq.labels.is_empty() {
            let prompt = mq.prompt.to_lowercase();
            self.known_labels(source)
                .into_iter()
                .filter(|l| contains_word(&prompt, l))
                .map(str::to_string)
                .collect()
        } else {
            mq.labels.iter().map(|l| normalize_label(l)).collect()
        };
        let (w, h) = (image.width(), image.height());
        let mut out = RasterMask::empty(w, h);
        for label in labels {
            let Some(mask) = self.lookup(source, &label) else {
                continue;
            };
            if !mask.same_dims(w, h) {
                return Err(AgentError::InvalidResponseShape {
                    expected: (w, h),
                    actual: (mask.width(), mask.height()),
                });
            }
            out = RasterMask::from_fn(w, h, |x, y| out.get(x, y) || mask.get(x, y));
        }
        Ok(ScoreMap::from_mask(&out))
    }
}
