// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use super::{AgentError, ChatAgent, ChatRequest, ChatResponse};

/// Phrases that appear only in one prompt template each, handy as rule keys.
pub const REASONER_KEY: &str = "describe a given image with chain of thoughts";
pub const NO_COT_KEY: &str = "directly name the object(s) the query refers to";
pub const EVALUATOR_KEY: &str = "decide whether the segmentation result is good";
pub const COMPARE_KEY: &str = "Candidate A is the previous segmentation";
pub const KEYWORDS_KEY: &str = "prepares a knowledge lookup";

/// Replies with `responses` in turn whenever `keyword` occurs in the request;
/// the last response repeats once the list is used up.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ScriptRule {
    pub keyword: String,
    pub responses: Vec<String>,
}

impl ScriptRule {
    pub fn new<I, S>(keyword: impl Into<String>, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            keyword: keyword.into(),
            responses: responses.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Deserialize)]
struct ScriptFile {
    rules: Vec<ScriptRule>,
}

/// Keyword-table chat backend. The first rule whose keyword appears in the
/// request text answers.
pub struct ScriptedChat {
    rules: Vec<ScriptRule>,
    cursors: Mutex<Vec<usize>>,
}

impl ScriptedChat {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        let cursors = Mutex::new(vec![0; rules.len()]);
        Self { rules, cursors }
    }

    /// Loads `{"rules": [{"keyword": .., "responses": [..]}]}`.
    ///
    /// A response of the form `@relative/path.txt` is read from a file
    /// next to the script.
    pub fn from_file(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AgentError::Io(format!("{}: {e}", path.display())))?;
        let mut script: ScriptFile = serde_json::from_str(&text)
            .map_err(|e| AgentError::Decode(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for rule in &mut script.rules {
            for r in &mut rule.responses {
                if let Some(rel) = r.strip_prefix('@') {
                    let p = base.join(rel);
                    *r = std::fs::read_to_string(&p)
                        .map_err(|e| AgentError::Io(format!("{}: {e}", p.display())))?;
                }
            }
        }
        Ok(Self::new(script.rules))
    }
}

impl ChatAgent for ScriptedChat {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, AgentError> {
        req.validate()?;
        let text = req.full_text();
        let idx = self
            .rules
            .iter()
            .position(|r| text.contains(&r.keyword))
            .ok_or_else(|| {
                AgentError::Transport("no scripted response matches the request".into())
            })?;
        let rule = &self.rules[idx];
        if rule.responses.is_empty() {
            return Err(AgentError::Transport(format!(
                "rule `{}` has no responses",
                rule.keyword
            )));
        }
        let mut cursors = self.cursors.lock().expect("script lock poisoned");
        let i = cursors[idx].min(rule.responses.len() - 1);
        cursors[idx] += 1;
        Ok(ChatResponse::text(rule.responses[i].clone()))
    }
}
