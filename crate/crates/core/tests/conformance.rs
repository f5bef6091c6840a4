// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Wire examples shipped for segmenter implementations stay in sync with the
//! client's own validation and codecs.

mod common;

use cotseg::codec::{decode_scores_png, encode_scores_png, load_mask, save_mask_png, save_rgb_png};
use cotseg::types::{denormalize, validate_meta_query, RejectReason};
use cotseg::{ImageData, InputType, MetaQuery, RasterMask, ScoreMap, SegmentorCapabilities};
use serde::Deserialize;

#[derive(Deserialize)]
struct Cases {
    capabilities: SegmentorCapabilities,
    cases: Vec<Case>,
}

#[derive(Deserialize)]
struct Case {
    name: String,
    meta_query: MetaQuery,
    expect: String,
}

fn conformance(name: &str) -> std::path::PathBuf {
    common::fixtures_root().join("conformance").join(name)
}

fn ramp() -> ScoreMap {
    ScoreMap::new(7, 3, (0..21).map(|i| (i % 7) as f32 / 6.0).collect()).unwrap()
}

#[test]
fn capabilities_example_is_valid() {
    let text = std::fs::read_to_string(conformance("capabilities.json")).unwrap();
    let caps: SegmentorCapabilities = serde_json::from_str(&text).unwrap();
    caps.validate().unwrap();
}

#[test]
fn meta_query_outcomes_match_validation() {
    let text = std::fs::read_to_string(conformance("meta_queries.json")).unwrap();
    let cases: Cases = serde_json::from_str(&text).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for case in &cases.cases {
        let got = match validate_meta_query(&case.meta_query, &cases.capabilities) {
            Ok(()) => "ok",
            Err(r) => r.code(),
        };
        assert_eq!(got, case.expect, "{}", case.name);
        if let Some(r) = RejectReason::from_code(&case.expect) {
            seen.insert(r.code());
        }
    }
    assert_eq!(seen.len(), 5, "every reason code has an example");
}

#[test]
fn score_png_example_decodes() {
    let path = conformance("scores_ramp.png");
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(
        bytes,
        encode_scores_png(&ramp()).unwrap(),
        "{} is stale",
        path.display()
    );
    let decoded = decode_scores_png(&bytes).unwrap();
    for (a, b) in decoded.values().iter().zip(ramp().values()) {
        assert!((a - b).abs() <= 1.0 / 65535.0);
    }
}

/// Rewrites the binary example: `cargo test --test conformance -- --ignored`.
#[test]
#[ignore]
fn regenerate_score_png() {
    std::fs::write(
        conformance("scores_ramp.png"),
        encode_scores_png(&ramp()).unwrap(),
    )
    .unwrap();
}

#[derive(Deserialize)]
struct SegmentSet {
    capabilities: SegmentorCapabilities,
    image: String,
    label_dir: String,
    requests: Vec<SegmentCase>,
}

#[derive(Deserialize)]
struct SegmentCase {
    name: String,
    meta_query: MetaQuery,
    expected_scores: String,
    foreground: usize,
}

fn segment_dir() -> std::path::PathBuf {
    conformance("segment")
}

fn leash() -> RasterMask {
    RasterMask::from_fn(8, 8, |x, y| x + 1 == y || x == y && (2..6).contains(&x))
}

/// Reference stub behaviour for the golden requests.
fn stub_scores(mq: &MetaQuery, labels: &std::path::Path) -> ScoreMap {
    let (w, h) = (8, 8);
    let mask = match mq.input_type {
        InputType::Box => {
            let c = mq.coords.as_deref().unwrap();
            let px = denormalize(c, w, h).unwrap();
            let span = |lo: u32, hi: u32| lo..hi.max(lo + 1);
            let (xs, ys) = (span(px[0].x, px[1].x), span(px[0].y, px[1].y));
            RasterMask::from_fn(w, h, |x, y| xs.contains(&x) && ys.contains(&y))
        }
        _ => mq
            .labels
            .iter()
            .filter_map(|l| load_mask(&labels.join(format!("{l}.png"))).ok())
            .fold(RasterMask::empty(w, h), |acc, m| {
                RasterMask::from_fn(w, h, |x, y| acc.get(x, y) || m.get(x, y))
            }),
    };
    ScoreMap::from_mask(&mask)
}

fn write_segment_set() {
    let dir = segment_dir();
    std::fs::create_dir_all(dir.join("labels")).unwrap();
    save_rgb_png(
        &ImageData::filled(8, 8, [128, 128, 128], "image").unwrap(),
        &dir.join("image.png"),
    )
    .unwrap();
    save_mask_png(&leash(), &dir.join("labels/leash.png")).unwrap();
    let set: SegmentSet =
        serde_json::from_str(&std::fs::read_to_string(dir.join("requests.json")).unwrap()).unwrap();
    for case in &set.requests {
        let scores = stub_scores(&case.meta_query, &dir.join(&set.label_dir));
        std::fs::write(
            dir.join(&case.expected_scores),
            encode_scores_png(&scores).unwrap(),
        )
        .unwrap();
    }
}

#[test]
fn segment_golden_set_is_consistent() {
    let dir = segment_dir();
    let set: SegmentSet =
        serde_json::from_str(&std::fs::read_to_string(dir.join("requests.json")).unwrap()).unwrap();
    set.capabilities.validate().unwrap();
    let image = cotseg::codec::load_image(&dir.join(&set.image)).unwrap();
    assert_eq!((image.width(), image.height()), (8, 8));
    for case in &set.requests {
        validate_meta_query(&case.meta_query, &set.capabilities).unwrap();
        let want = stub_scores(&case.meta_query, &dir.join(&set.label_dir));
        let bytes = std::fs::read(dir.join(&case.expected_scores)).unwrap();
        assert_eq!(
            bytes,
            encode_scores_png(&want).unwrap(),
            "{} is stale",
            case.name
        );
        let mask = cotseg::maskops::binarize(&decode_scores_png(&bytes).unwrap(), 0.5);
        assert_eq!(mask.count(), case.foreground, "{}", case.name);
    }
}

/// Rewrites the binary files of the segment set:
/// `cargo test --test conformance -- --ignored`.
#[test]
#[ignore]
fn regenerate_segment_set() {
    write_segment_set();
}
