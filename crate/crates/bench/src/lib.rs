// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Seeded input generators for the benchmarks.

use cotseg::{NormPoint, RasterMask, ScoreMap};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub use cotseg;

/// Reference transcripts shipped with the core crate's fixtures.
pub const FIRST_TURN_TRANSCRIPT: &str =
    include_str!("../../core/fixtures/transcripts/dog_first_turn.txt");
pub const SELF_CORRECTION_TRANSCRIPT: &str =
    include_str!("../../core/fixtures/transcripts/dog_self_correction.txt");

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Each pixel set independently with probability `density`.
pub fn random_mask(rng: &mut impl Rng, width: u32, height: u32, density: f64) -> RasterMask {
    RasterMask::from_fn(width, height, |_, _| rng.random_bool(density))
}

pub fn random_scores(rng: &mut impl Rng, width: u32, height: u32) -> ScoreMap {
    let values = (0..width as usize * height as usize)
        .map(|_| rng.random::<f32>())
        .collect();
    ScoreMap::new(width, height, values).expect("length matches dimensions")
}

/// `n` (prediction, ground truth) pairs of the given size.
pub fn random_pairs(
    rng: &mut impl Rng,
    n: usize,
    width: u32,
    height: u32,
) -> Vec<(RasterMask, RasterMask)> {
    (0..n)
        .map(|_| {
            (
                random_mask(rng, width, height, 0.3),
                random_mask(rng, width, height, 0.3),
            )
        })
        .collect()
}

/// Star-shaped polygon around the image centre, so edges rarely cross.
pub fn random_polygon(rng: &mut impl Rng, vertices: usize) -> Vec<NormPoint> {
    (0..vertices)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / vertices as f64;
            let r = rng.random_range(0.1..0.5);
            NormPoint::new(0.5 + r * angle.cos(), 0.5 + r * angle.sin())
        })
        .collect()
}

/// First-turn reply with `steps` question/answer pairs.
pub fn synthetic_first_turn(steps: usize) -> String {
    let mut text = String::new();
    for k in 1..=steps {
        text.push_str(&format!(
            "- Question {k}: What does region {k} of the image contain?\n- Answer {k}: Region {k} contains part of the scene.\n"
        ));
    }
    text.push_str("Summary: The target is the object in region 1.\n");
    text.push_str("- Prompt: The image shows a scene. Please segment the object located at the center of the image.\n");
    text.push_str("object. background.\n");
    text
}
