// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use std::path::Path;

use common::*;

/// Rewrites the committed scenario fixtures. Run after changing a template
/// or the cassette format:
/// `cargo test -p cotseg-core --test fixtures -- --ignored`
#[test]
#[ignore]
fn regenerate_scenarios() {
    generate_dog(&dog_dir());
    generate_gain(&gain_dir());
}

fn assert_same_tree(expected: &Path, actual: &Path) {
    let mut names: Vec<_> = std::fs::read_dir(actual)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in names {
        let (a, e) = (actual.join(&name), expected.join(&name));
        if a.is_dir() {
            assert_same_tree(&e, &a);
            continue;
        }
        let want = std::fs::read(&e).unwrap_or_else(|_| panic!("{} is not committed", e.display()));
        assert!(
            std::fs::read(&a).unwrap() == want,
            "{} is stale; rerun the ignored `regenerate_scenarios` test",
            e.display()
        );
    }
}

#[test]
fn committed_scenarios_are_current() {
    let tmp = tempfile::tempdir().unwrap();
    let transcripts = tmp.path().join("transcripts");
    std::fs::create_dir_all(&transcripts).unwrap();
    for entry in std::fs::read_dir(fixtures_root().join("transcripts")).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, transcripts.join(p.file_name().unwrap())).unwrap();
    }
    generate_dog(&tmp.path().join("dog"));
    generate_gain(&tmp.path().join("gain"));
    assert_same_tree(&dog_dir(), &tmp.path().join("dog"));
    assert_same_tree(&gain_dir(), &tmp.path().join("gain"));
}
