// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Scenario fixtures shared by the integration tests.
//!
//! Each scenario directory holds an image, a dataset sidecar, per-label
//! oracle masks, a chat script and a cassette recorded from that script.
//! `generate_*` rebuilds a scenario from scratch; the `fixtures` test checks
//! that the committed files match.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use cotseg::agents::{
    AgentBundle, NoRetrieval, OracleSegmenter, ScriptedChat, COMPARE_KEY, EVALUATOR_KEY,
    REASONER_KEY,
};
use cotseg::codec::{load_image, save_mask_png, save_rgb_png};
use cotseg::maskops::rasterize_polygons;
use cotseg::{run, ImageData, NormPoint, PipelineConfig, RasterMask, RunRecord, SegQuery};

pub const DOG_QUERY: &str =
    "What is the object that the person in the picture is holding onto while walking his dog?";
pub const GAIN_QUERY: &str = "Where could I put down my coffee cup?";

pub fn fixtures_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn transcript(name: &str) -> String {
    std::fs::read_to_string(fixtures_root().join("transcripts").join(name)).unwrap()
}

/// Polygon given in integer pixel corners, normalized to `w x h`.
///
/// Integer corners keep every edge off the pixel centres, so pixel and
/// normalized encodings rasterize identically.
fn poly(points: &[(u32, u32)], w: u32, h: u32) -> Vec<NormPoint> {
    points
        .iter()
        .map(|&(x, y)| NormPoint::new(f64::from(x) / f64::from(w), f64::from(y) / f64::from(h)))
        .collect()
}

fn rect(x0: u32, y0: u32, x1: u32, y1: u32) -> Vec<(u32, u32)> {
    vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
}

fn fill(w: u32, h: u32, pts: &[(u32, u32)]) -> RasterMask {
    rasterize_polygons(&[poly(pts, w, h)], w, h).unwrap()
}

fn paint(img: &mut ImageData, mask: &RasterMask, rgb: [u8; 3]) {
    for y in 0..img.height() {
        for x in 0..img.width() {
            if mask.get(x, y) {
                img.put_pixel(x, y, rgb);
            }
        }
    }
}

fn sidecar(query: &str, label: &str, pts: &[(u32, u32)]) -> String {
    let points: Vec<[u32; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
    let v = serde_json::json!({
        "text": [query],
        "is_sentence": true,
        "shapes": [{ "label": label, "shape_type": "polygon", "points": points }],
    });
    serde_json::to_string_pretty(&v).unwrap() + "\n"
}

fn script(rules: &[(&str, Vec<&str>)]) -> String {
    let rules: Vec<_> = rules
        .iter()
        .map(|(k, r)| serde_json::json!({ "keyword": k, "responses": r }))
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({ "rules": rules })).unwrap() + "\n"
}

pub const DOG_W: u32 = 64;
pub const DOG_H: u32 = 48;

pub fn dog_leash_poly() -> Vec<(u32, u32)> {
    vec![(8, 9), (44, 11), (44, 14), (8, 12)]
}

pub fn dog_person_poly() -> Vec<(u32, u32)> {
    rect(40, 3, 52, 34)
}

pub fn dog_animal_poly() -> Vec<(u32, u32)> {
    rect(5, 30, 23, 43)
}

pub fn dog_leash() -> RasterMask {
    fill(DOG_W, DOG_H, &dog_leash_poly())
}

pub fn dog_person() -> RasterMask {
    fill(DOG_W, DOG_H, &dog_person_poly())
}

const DOG_CORRECT_REPLY: &str = "- Reasoning process:\n\
1. Original image: A person stands on grass with a dog and holds a leash.\n\
2. Segmentation image: The segmentation image shows the leash isolated on a white background.\n\
3. Summary: The segmentation matches the query.\n\
- Correctness: <correctness>True</correctness>\n";

/// Synthetic version of the leash example: the first-turn prompt names both
/// the person and the leash, the correction adds the leash and removes the
/// person's clothing.
pub fn generate_dog(dir: &Path) -> RunRecord {
    std::fs::create_dir_all(dir.join("agents/oracle")).unwrap();
    let (w, h) = (DOG_W, DOG_H);
    let mut img = ImageData::filled(w, h, [70, 140, 60], "dog").unwrap();
    paint(&mut img, &fill(w, h, &dog_animal_poly()), [150, 100, 50]);
    paint(&mut img, &dog_person(), [40, 60, 160]);
    paint(&mut img, &dog_leash(), [200, 30, 30]);
    save_rgb_png(&img, &dir.join("dog.png")).unwrap();
    save_mask_png(&dog_leash(), &dir.join("agents/oracle/leash.png")).unwrap();
    save_mask_png(&dog_person(), &dir.join("agents/oracle/person.png")).unwrap();
    save_mask_png(
        &dog_person(),
        &dir.join("agents/oracle/person's_clothing.png"),
    )
    .unwrap();
    std::fs::write(
        dir.join("dog.json"),
        sidecar(DOG_QUERY, "leash", &dog_leash_poly()),
    )
    .unwrap();
    std::fs::write(
        dir.join("agents/script.json"),
        script(&[
            (REASONER_KEY, vec!["@../../transcripts/dog_first_turn.txt"]),
            (
                EVALUATOR_KEY,
                vec![
                    "@../../transcripts/dog_self_correction.txt",
                    DOG_CORRECT_REPLY,
                ],
            ),
            (COMPARE_KEY, vec!["<choice>B</choice>"]),
        ]),
    )
    .unwrap();
    record(dir, "dog", DOG_QUERY)
}

pub const GAIN_W: u32 = 32;
pub const GAIN_H: u32 = 32;

pub fn gain_table_poly() -> Vec<(u32, u32)> {
    rect(8, 12, 24, 20)
}

pub fn gain_left() -> RasterMask {
    fill(GAIN_W, GAIN_H, &rect(8, 12, 16, 20))
}

pub fn gain_right() -> RasterMask {
    fill(GAIN_W, GAIN_H, &rect(16, 12, 24, 20))
}

pub fn gain_table() -> RasterMask {
    fill(GAIN_W, GAIN_H, &gain_table_poly())
}

const GAIN_FIRST_TURN: &str = "- Question 1: What is the overall setting of the image? - Answer 1: A plain room with a wooden table in the middle.\n\
- Question 2: Which object offers a flat surface for a cup? - Answer 2: The top of the table.\n\
- Question 3: Where is the table located? - Answer 3: In the center of the image.\n\
Summary: The user needs a flat surface for a cup, which is the table top in the center of the image.\n\
- Prompt: The image shows a room with a wooden table. Please segment the table located at the center of the image.\n\
table.\n";

const GAIN_REFINE: &str = "- Reasoning process:\n\
1. Original image: A wooden table stands in the center of the room.\n\
2. Segmentation image: Only the left side of the table top is visible on the white background.\n\
3. Summary: The right side of the table top is missing.\n\
- Correctness: <correctness>False</correctness>\n\
- Meta-queries (Output if the correctness is false):\n\
1. Positive: <positive>Please also segment the right side of the table, located at the center-right of the original image.</positive>\n\
2. Negative: <negative>None</negative>\n\
- Labels:\n\
1. Positive: <plabels>table right side.</plabels>\n\
2. Negative: <nlabels>None.</nlabels>\n";

const GAIN_CORRECT: &str = "- Reasoning process:\n\
1. Original image: A wooden table stands in the center of the room.\n\
2. Segmentation image: The whole table top is isolated on a white background.\n\
3. Summary: The segmentation matches the query.\n\
- Correctness: <correctness>True</correctness>\n";

/// The first-turn label only covers the left half of the target; one
/// positive directive supplies the right half.
pub fn generate_gain(dir: &Path) -> RunRecord {
    std::fs::create_dir_all(dir.join("agents/oracle")).unwrap();
    let (w, h) = (GAIN_W, GAIN_H);
    let mut img = ImageData::filled(w, h, [225, 220, 210], "table").unwrap();
    paint(&mut img, &gain_table(), [130, 80, 40]);
    save_rgb_png(&img, &dir.join("table.png")).unwrap();
    save_mask_png(&gain_left(), &dir.join("agents/oracle/table.png")).unwrap();
    save_mask_png(
        &gain_right(),
        &dir.join("agents/oracle/table_right_side.png"),
    )
    .unwrap();
    std::fs::write(
        dir.join("table.json"),
        sidecar(GAIN_QUERY, "table top", &gain_table_poly()),
    )
    .unwrap();
    std::fs::write(
        dir.join("agents/script.json"),
        script(&[
            (REASONER_KEY, vec![GAIN_FIRST_TURN]),
            (EVALUATOR_KEY, vec![GAIN_REFINE, GAIN_CORRECT]),
            (
                COMPARE_KEY,
                vec!["Candidate B covers the whole table top. <choice>B</choice>"],
            ),
        ]),
    )
    .unwrap();
    record(dir, "table", GAIN_QUERY)
}

/// Live agents of a scenario directory: scripted chat plus oracle segmenter.
pub fn live_agents(dir: &Path) -> AgentBundle {
    AgentBundle::new(
        Arc::new(ScriptedChat::from_file(&dir.join("agents/script.json")).unwrap()),
        Arc::new(OracleSegmenter::from_dir(&dir.join("agents/oracle")).unwrap()),
        Arc::new(NoRetrieval),
    )
}

fn cassette_name(stem: &str) -> String {
    match stem {
        "table" => "gain.jsonl".into(),
        s => format!("{s}.jsonl"),
    }
}

fn record(dir: &Path, stem: &str, query: &str) -> RunRecord {
    let image = load_image(&dir.join(format!("{stem}.png"))).unwrap();
    let agents = live_agents(dir)
        .recording(dir.join(cassette_name(stem)))
        .unwrap();
    run(
        &image,
        &SegQuery::text(query),
        &PipelineConfig::default(),
        &agents,
    )
    .unwrap()
}

pub fn dog_dir() -> PathBuf {
    fixtures_root().join("dog")
}

pub fn gain_dir() -> PathBuf {
    fixtures_root().join("gain")
}

pub fn replay(
    dir: &Path,
    cassette: &str,
    stem: &str,
    query: &str,
    cfg: &PipelineConfig,
) -> RunRecord {
    let image = load_image(&dir.join(format!("{stem}.png"))).unwrap();
    let agents = AgentBundle::replay(dir.join(cassette)).unwrap();
    run(&image, &SegQuery::text(query), cfg, &agents).unwrap()
}

pub fn replay_dog() -> RunRecord {
    replay(
        &dog_dir(),
        "dog.jsonl",
        "dog",
        DOG_QUERY,
        &PipelineConfig::default(),
    )
}

pub fn replay_gain() -> RunRecord {
    replay(
        &gain_dir(),
        "gain.jsonl",
        "table",
        GAIN_QUERY,
        &PipelineConfig::default(),
    )
}
