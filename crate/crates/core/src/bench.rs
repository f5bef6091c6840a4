// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Dataset loading, batch evaluation and report output.
//!
//! Dataset layout: `<name>.png|jpg|jpeg` next to `<name>.json`
//! (`{"text": [...], "shapes": [{"points": [[x, y], ...]}]}`) or next to a
//! 1-bit `<name>.mask.png`. Polygon coordinates may be normalized or in
//! pixels; any value above 1.5 marks the whole file as pixel units.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agents::{AgentBundle, AgentError};
use crate::codec::{load_image, load_mask};
use crate::maskops::{overlap, rasterize_polygons, Overlap};
use crate::pipeline::run;
use crate::record::TerminationReason;
use crate::types::{NormPoint, PipelineConfig, RasterMask, SegQuery};

const IMAGE_EXTS: [&str; 3] = ["png", "jpg", "jpeg"];
const PIXEL_SNIFF_LIMIT: f64 = 1.5;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("malformed dataset json {path}: {message}")]
    MalformedJson { path: PathBuf, message: String },
    #[error("no image found for {0}")]
    MissingImage(PathBuf),
    #[error("dataset at {0} contains no samples")]
    EmptyDataset(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("report decode failed: {0}")]
    Report(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    Polygons(Vec<Vec<NormPoint>>),
    MaskFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// `<image stem>#<query index>`.
    pub id: String,
    pub image_path: PathBuf,
    pub query: String,
    pub ground_truth: GroundTruth,
}

impl Sample {
    /// Ground truth at the given resolution.
    pub fn ground_truth_mask(&self, width: u32, height: u32) -> Result<RasterMask, String> {
        match &self.ground_truth {
            GroundTruth::Polygons(polys) => {
                rasterize_polygons(polys, width, height).map_err(|e| e.to_string())
            }
            GroundTruth::MaskFile(p) => {
                let m = load_mask(p).map_err(|e| e.to_string())?;
                if !m.same_dims(width, height) {
                    return Err(format!(
                        "mask {} is {}x{}, image is {width}x{height}",
                        p.display(),
                        m.width(),
                        m.height()
                    ));
                }
                Ok(m)
            }
        }
    }
}

#[derive(Deserialize)]
struct Sidecar {
    #[serde(default)]
    text: Option<Value>,
    #[serde(default)]
    shapes: Vec<Shape>,
}

#[derive(Deserialize)]
struct Shape {
    #[serde(default)]
    label: Option<String>,
    points: Vec<[f64; 2]>,
}

fn malformed(path: &Path, message: impl Into<String>) -> BenchError {
    BenchError::MalformedJson {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn queries(path: &Path, stem: &str, text: Option<Value>) -> Result<Vec<String>, BenchError> {
    let list = match text {
        Some(Value::String(s)) => vec![s],
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(malformed(
                    path,
                    format!("sample {stem}: query {other} is not a string"),
                )),
            })
            .collect::<Result<_, _>>()?,
        _ => return Err(malformed(path, format!("sample {stem}: missing \"text\""))),
    };
    if list.iter().all(|q| q.trim().is_empty()) {
        return Err(malformed(
            path,
            format!("sample {stem}: no non-empty query"),
        ));
    }
    Ok(list)
}

fn polygons(
    path: &Path,
    stem: &str,
    image: &Path,
    shapes: Vec<Shape>,
) -> Result<Vec<Vec<NormPoint>>, BenchError> {
    let shapes: Vec<Shape> = shapes
        .into_iter()
        .filter(|s| {
            !s.label
                .as_deref()
                .is_some_and(|l| l.eq_ignore_ascii_case("ignore"))
        })
        .collect();
    for (i, s) in shapes.iter().enumerate() {
        if s.points.len() < 3 {
            return Err(malformed(
                path,
                format!(
                    "sample {stem}: shape {i} has {} vertices, need at least 3",
                    s.points.len()
                ),
            ));
        }
        if s.points
            .iter()
            .flatten()
            .any(|v| !v.is_finite() || *v < -PIXEL_SNIFF_LIMIT)
        {
            return Err(malformed(
                path,
                format!("sample {stem}: shape {i} has an invalid coordinate"),
            ));
        }
    }
    let pixel_units = shapes
        .iter()
        .flat_map(|s| s.points.iter().flatten())
        .any(|&v| v > PIXEL_SNIFF_LIMIT);
    let (sx, sy) = if pixel_units {
        let (w, h) = image::image_dimensions(image)
            .map_err(|e| malformed(path, format!("sample {stem}: {e}")))?;
        (f64::from(w), f64::from(h))
    } else {
        (1.0, 1.0)
    };
    Ok(shapes
        .into_iter()
        .map(|s| {
            s.points
                .into_iter()
                .map(|[x, y]| NormPoint::new((x / sx).clamp(0.0, 1.0), (y / sy).clamp(0.0, 1.0)))
                .collect()
        })
        .collect())
}

/// Reads every `<name>.json` under `root` into samples ordered by file name
/// and query index.
pub fn load_dataset(root: &Path) -> Result<Vec<Sample>, BenchError> {
    let mut sidecars: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    sidecars.sort();

    let mut samples = Vec::new();
    for path in sidecars {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let image = IMAGE_EXTS
            .iter()
            .map(|ext| root.join(format!("{stem}.{ext}")))
            .find(|p| p.is_file())
            .ok_or_else(|| BenchError::MissingImage(root.join(&stem)))?;
        let raw = std::fs::read_to_string(&path)?;
        let sidecar: Sidecar = serde_json::from_str(&raw)
            .map_err(|e| malformed(&path, format!("sample {stem}: {e}")))?;
        let texts = queries(&path, &stem, sidecar.text)?;

        let mask_path = root.join(format!("{stem}.mask.png"));
        let has_shapes = !sidecar.shapes.is_empty();
        let ground_truth = match (has_shapes, mask_path.is_file()) {
            (true, false) => GroundTruth::Polygons(polygons(&path, &stem, &image, sidecar.shapes)?),
            (false, true) => GroundTruth::MaskFile(mask_path),
            (true, true) => {
                return Err(malformed(
                    &path,
                    format!("sample {stem}: both shapes and {stem}.mask.png given"),
                ));
            }
            (false, false) => {
                return Err(malformed(&path, format!("sample {stem}: no ground truth")))
            }
        };
        for (i, q) in texts.into_iter().enumerate() {
            if q.trim().is_empty() {
                continue;
            }
            samples.push(Sample {
                id: format!("{stem}#{i}"),
                image_path: image.clone(),
                query: q,
                ground_truth: ground_truth.clone(),
            });
        }
    }
    if samples.is_empty() {
        return Err(BenchError::EmptyDataset(root.to_path_buf()));
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: String,
    pub query: String,
    pub iou: f64,
    pub intersection: u64,
    pub union: u64,
    pub refinement_rounds: usize,
    pub seconds: f64,
    pub termination_reason: TerminationReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportAggregate {
    pub giou: f64,
    pub ciou: f64,
    pub mean_seconds: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: String,
    pub rows: Vec<SampleRow>,
    pub aggregate: ReportAggregate,
}

impl Report {
    pub fn from_rows(method: impl Into<String>, rows: Vec<SampleRow>) -> Result<Self, BenchError> {
        let aggregate =
            aggregate_rows(&rows).ok_or_else(|| BenchError::EmptyDataset(PathBuf::new()))?;
        Ok(Self {
            method: method.into(),
            rows,
            aggregate,
        })
    }

    /// Recomputes the aggregate from the stored rows.
    pub fn recompute(&self) -> Option<ReportAggregate> {
        aggregate_rows(&self.rows)
    }

    /// Copy with wall-clock fields zeroed.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.rows {
            r.seconds = 0.0;
        }
        out.aggregate.mean_seconds = 0.0;
        out
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// gIoU is the mean of the row IoUs, cIoU is total intersection over total
/// union (1.0 when nothing was in any union).
fn aggregate_rows(rows: &[SampleRow]) -> Option<ReportAggregate> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let total = rows.iter().fold(Overlap::default(), |acc, r| Overlap {
        intersection: acc.intersection + r.intersection,
        union: acc.union + r.union,
    });
    Some(ReportAggregate {
        giou: rows.iter().map(|r| r.iou).sum::<f64>() / n,
        ciou: total.iou(),
        mean_seconds: rows.iter().map(|r| r.seconds).sum::<f64>() / n,
        samples: rows.len(),
    })
}

/// Builds the agents for one sample, typically from its own cassette.
pub type AgentFactory<'a> = dyn Fn(&Sample) -> Result<AgentBundle, AgentError> + Sync + 'a;

fn failed_row(sample: &Sample, gt_union: u64, seconds: f64, error: String) -> SampleRow {
    SampleRow {
        id: sample.id.clone(),
        query: sample.query.clone(),
        iou: 0.0,
        intersection: 0,
        union: gt_union,
        refinement_rounds: 0,
        seconds,
        termination_reason: TerminationReason::AgentFailureFallback,
        error: Some(error),
    }
}

fn evaluate_one(sample: &Sample, cfg: &PipelineConfig, factory: &AgentFactory<'_>) -> SampleRow {
    let start = Instant::now();
    let image = match load_image(&sample.image_path) {
        Ok(i) => i,
        Err(e) => return failed_row(sample, 0, start.elapsed().as_secs_f64(), e.to_string()),
    };
    let gt = match sample.ground_truth_mask(image.width(), image.height()) {
        Ok(m) => m,
        Err(e) => return failed_row(sample, 0, start.elapsed().as_secs_f64(), e),
    };
    let gt_union = gt.count() as u64;
    let agents = match factory(sample) {
        Ok(a) => a,
        Err(e) => {
            return failed_row(
                sample,
                gt_union,
                start.elapsed().as_secs_f64(),
                e.to_string(),
            )
        }
    };
    let record = match run(&image, &SegQuery::text(sample.query.clone()), cfg, &agents) {
        Ok(r) => r,
        Err(e) => {
            return failed_row(
                sample,
                gt_union,
                start.elapsed().as_secs_f64(),
                e.to_string(),
            )
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let Some(pred) = &record.final_mask else {
        let mut row = failed_row(sample, gt_union, seconds, record.errors.join("; "));
        row.termination_reason = record.termination_reason;
        return row;
    };
    let ov = match overlap(pred, &gt) {
        Ok(o) => o,
        Err(e) => return failed_row(sample, gt_union, seconds, e.to_string()),
    };
    SampleRow {
        id: sample.id.clone(),
        query: sample.query.clone(),
        iou: ov.iou(),
        intersection: ov.intersection,
        union: ov.union,
        refinement_rounds: record.refinement_rounds(),
        seconds,
        termination_reason: record.termination_reason,
        error: (!record.errors.is_empty()).then(|| record.errors.join("; ")),
    }
}

/// Short label for a configuration, used as the report's method name.
pub fn method_label(cfg: &PipelineConfig) -> String {
    let cot = if cfg.cot_enabled() {
        format!("CoT {}", cfg.cot_length_mode)
    } else {
        "no CoT".to_string()
    };
    let revert = if cfg.revert_enabled {
        ""
    } else {
        ", no revert"
    };
    format!(
        "cotseg ({cot}, {} refine round(s){revert})",
        cfg.max_refine_rounds
    )
}

/// Runs the pipeline on every sample with up to `parallelism` runs at once.
///
/// Failing samples become rows with IoU 0; the batch never aborts. Rows keep
/// the input order, so the aggregate does not depend on `parallelism`.
pub fn evaluate(
    samples: &[Sample],
    cfg: &PipelineConfig,
    factory: &AgentFactory<'_>,
    parallelism: usize,
) -> Result<Report, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::EmptyDataset(PathBuf::new()));
    }
    cfg.validate()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let rows: Vec<SampleRow> = pool.install(|| {
        samples
            .par_iter()
            .map(|s| evaluate_one(s, cfg, factory))
            .collect()
    });
    Report::from_rows(method_label(cfg), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown { percent: bool },
}

/// `100.0` in percent mode, `1.000` otherwise.
pub fn format_metric(value: f64, percent: bool) -> String {
    if percent {
        format!("{:.1}", value * 100.0)
    } else {
        format!("{value:.3}")
    }
}

pub fn render_markdown(report: &Report, percent: bool) -> String {
    let a = &report.aggregate;
    let mut out = String::new();
    out.push_str("| Method | gIoU | cIoU | Time (s/pair) |\n|---|---:|---:|---:|\n");
    let _ = writeln!(
        out,
        "| {} | {} | {} | {:.2} |",
        report.method,
        format_metric(a.giou, percent),
        format_metric(a.ciou, percent),
        a.mean_seconds
    );
    out.push_str(
        "\n| Sample | IoU | I | U | Refinements | Termination |\n|---|---:|---:|---:|---:|---|\n",
    );
    for r in &report.rows {
        let term = serde_json::to_value(r.termination_reason)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            r.id,
            format_metric(r.iou, percent),
            r.intersection,
            r.union,
            r.refinement_rounds,
            term
        );
    }
    out
}

pub fn emit_report(report: &Report, path: &Path, format: ReportFormat) -> Result<(), BenchError> {
    let body = match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)?,
        ReportFormat::Markdown { percent } => render_markdown(report, percent),
    };
    std::fs::write(path, body)?;
    Ok(())
}
