// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Flat `key = value` experiment configs.
//!
//! Keys mirror [`PipelineConfig`] field names. Blank lines and lines starting
//! with `#` are ignored. Layering is explicit: defaults, then a file, then
//! command-line overrides.
//!
//! ```text
//! # ablation: no revert, one round
//! max_refine_rounds = 1
//! revert_enabled = false
//! cot_length_mode = fixed(4)
//! ```

use std::path::Path;

use thiserror::Error;

use crate::types::{CotLengthMode, InvariantError, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    Value {
        line: usize,
        key: String,
        message: String,
    },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("{0}")]
    Io(String),
    #[error("resulting configuration is invalid: {0}")]
    Invalid(#[from] InvariantError),
}

/// A partial [`PipelineConfig`]; `None` leaves the underlying value alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub max_cot_rounds: Option<u32>,
    pub cot_length_mode: Option<CotLengthMode>,
    pub max_refine_rounds: Option<u32>,
    pub binarize_threshold: Option<f64>,
    pub retrieval_enabled: Option<bool>,
    pub revert_enabled: Option<bool>,
}

impl ConfigOverrides {
    pub fn apply_to(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.max_cot_rounds {
            cfg.max_cot_rounds = v;
        }
        if let Some(v) = self.cot_length_mode {
            cfg.cot_length_mode = v;
        }
        if let Some(v) = self.max_refine_rounds {
            cfg.max_refine_rounds = v;
        }
        if let Some(v) = self.binarize_threshold {
            cfg.binarize_threshold = v;
        }
        if let Some(v) = self.retrieval_enabled {
            cfg.retrieval_enabled = v;
        }
        if let Some(v) = self.revert_enabled {
            cfg.revert_enabled = v;
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |message: String| ConfigError::Value {
                line,
                key: key.to_string(),
                message,
            };
            let dup = || ConfigError::Duplicate {
                line,
                key: key.to_string(),
            };
            fn set<T>(
                slot: &mut Option<T>,
                v: T,
                dup: impl FnOnce() -> ConfigError,
            ) -> Result<(), ConfigError> {
                if slot.is_some() {
                    return Err(dup());
                }
                *slot = Some(v);
                Ok(())
            }
            match key {
                "max_cot_rounds" => set(
                    &mut out.max_cot_rounds,
                    value.parse().map_err(|e| bad(format!("{e}")))?,
                    dup,
                )?,
                "cot_length_mode" => {
                    set(&mut out.cot_length_mode, value.parse().map_err(bad)?, dup)?
                }
                "max_refine_rounds" => set(
                    &mut out.max_refine_rounds,
                    value.parse().map_err(|e| bad(format!("{e}")))?,
                    dup,
                )?,
                "binarize_threshold" => set(
                    &mut out.binarize_threshold,
                    value.parse().map_err(|e| bad(format!("{e}")))?,
                    dup,
                )?,
                "retrieval_enabled" => set(
                    &mut out.retrieval_enabled,
                    parse_bool(value).ok_or_else(|| bad("expected true or false".into()))?,
                    dup,
                )?,
                "revert_enabled" => set(
                    &mut out.revert_enabled,
                    parse_bool(value).ok_or_else(|| bad("expected true or false".into()))?,
                    dup,
                )?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Serializes the set fields back into the file format.
    pub fn to_file_text(&self) -> String {
        let mut lines = Vec::new();
        if let Some(v) = self.max_cot_rounds {
            lines.push(format!("max_cot_rounds = {v}"));
        }
        if let Some(v) = self.cot_length_mode {
            lines.push(format!("cot_length_mode = {v}"));
        }
        if let Some(v) = self.max_refine_rounds {
            lines.push(format!("max_refine_rounds = {v}"));
        }
        if let Some(v) = self.binarize_threshold {
            lines.push(format!("binarize_threshold = {v}"));
        }
        if let Some(v) = self.retrieval_enabled {
            lines.push(format!("retrieval_enabled = {v}"));
        }
        if let Some(v) = self.revert_enabled {
            lines.push(format!("revert_enabled = {v}"));
        }
        lines.join("\n")
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

/// Defaults, then `file`, then `flags`; the result is validated.
pub fn resolve(
    file: Option<&ConfigOverrides>,
    flags: &ConfigOverrides,
) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = PipelineConfig::default();
    if let Some(f) = file {
        f.apply_to(&mut cfg);
    }
    flags.apply_to(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}
