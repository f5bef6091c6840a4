// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use super::{AgentError, RetrievalAgent, RetrievedContext};
use crate::codec::load_image;

/// Always returns an empty context.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoRetrieval;

impl RetrievalAgent for NoRetrieval {
    fn retrieve(&self, _keywords: &[String]) -> Result<RetrievedContext, AgentError> {
        Ok(RetrievedContext::default())
    }
}

/// Directory of keyword-named files: `<keyword>.txt` becomes a snippet,
/// `<keyword>.png|jpg|jpeg` a reference image.
///
/// Keywords are matched lowercase, with spaces also tried as `_` and `-`.
/// Results follow keyword order; a file is used at most once.
#[derive(Debug, Clone)]
pub struct LocalCorpus {
    root: PathBuf,
}

impl LocalCorpus {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn candidates(&self, keyword: &str, ext: &str) -> Vec<PathBuf> {
        let k = keyword.trim().to_lowercase();
        let mut names = vec![k.clone(), k.replace(' ', "_"), k.replace(' ', "-")];
        names.dedup();
        names
            .into_iter()
            .map(|n| self.root.join(format!("{n}.{ext}")))
            .collect()
    }

    fn first_existing(&self, keyword: &str, exts: &[&str]) -> Option<PathBuf> {
        exts.iter()
            .flat_map(|ext| self.candidates(keyword, ext))
            .find(|p| p.is_file())
    }
}

impl RetrievalAgent for LocalCorpus {
    fn retrieve(&self, keywords: &[String]) -> Result<RetrievedContext, AgentError> {
        let mut ctx = RetrievedContext::default();
        let mut used: Vec<PathBuf> = Vec::new();
        for kw in keywords.iter().filter(|k| !k.trim().is_empty()) {
            if let Some(p) = self.first_existing(kw, &["txt"]) {
                if !used.contains(&p) {
                    ctx.snippets
                        .push(std::fs::read_to_string(&p)?.trim().to_string());
                    used.push(p);
                }
            }
            if let Some(p) = self.first_existing(kw, &["png", "jpg", "jpeg"]) {
                if !used.contains(&p) {
                    ctx.images.push(load_image(&p)?);
                    used.push(p);
                }
            }
        }
        Ok(ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_files_in_order() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("hyloscirtus.txt"), "A genus of frogs.\n").unwrap();
        std::fs::write(
            dir.path().join("hyloscirtus_tolkieni.txt"),
            "Tolkien's stream frog.",
        )
        .unwrap();
        let corpus = LocalCorpus::new(dir.path());

        let one = corpus.retrieve(&["hyloscirtus".into()]).unwrap();
        assert_eq!(one.snippets, vec!["A genus of frogs."]);
        assert!(one.images.is_empty());

        assert!(corpus.retrieve(&["axolotl".into()]).unwrap().is_empty());

        let two = corpus
            .retrieve(&["Hyloscirtus Tolkieni".into(), "hyloscirtus".into()])
            .unwrap();
        assert_eq!(
            two.snippets,
            vec!["Tolkien's stream frog.", "A genus of frogs."]
        );
    }

    #[test]
    fn stub_is_empty() {
        assert!(NoRetrieval.retrieve(&["x".into()]).unwrap().is_empty());
    }
}
