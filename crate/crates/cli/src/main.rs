// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! `cotseg` command-line tool.
//!
//! Exit status: 0 on success, 1 when a run produces no mask or inputs cannot
//! be processed, 2 on invalid flags or configuration.

mod agents;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{ArgGroup, Args, Parser, Subcommand};
use cotseg::bench::{emit_report, evaluate, format_metric, load_dataset, BenchError, ReportFormat};
use cotseg::codec::{load_image, load_mask, save_rgb_png};
use cotseg::config::{resolve, ConfigOverrides};
use cotseg::maskops::{overlay, render_masked};
use cotseg::{
    run, run_no_cot, ControlAnnotation, CotLengthMode, PipelineConfig, PipelineError, SegQuery,
};

use agents::{AgentArgs, Backends};

const OVERLAY_COLOR: [u8; 3] = [255, 0, 0];
const OVERLAY_ALPHA: f64 = 0.5;

#[derive(Debug, Parser)]
#[command(
    name = "cotseg",
    version,
    about = "Training-free reasoning segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment one image for one query.
    Run(RunArgs),
    /// Evaluate a dataset directory and write gIoU/cIoU reports.
    Eval(EvalArgs),
    /// Draw a mask over an image.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Args)]
struct PipelineArgs {
    /// Flat `key = value` config file; flags take precedence over it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Ask for the target directly instead of reasoning step by step.
    #[arg(long)]
    no_cot: bool,

    /// Reasoning length: `variational` or a fixed number of question/answer steps.
    #[arg(long, value_name = "MODE")]
    cot_length: Option<CotLengthMode>,

    /// Upper bound on reasoning steps.
    #[arg(long, value_name = "N")]
    max_cot_rounds: Option<u32>,

    /// Self-correction round budget.
    #[arg(long, value_name = "N")]
    max_rounds: Option<u32>,

    /// Accept every refinement without asking the evaluator to compare.
    #[arg(long)]
    no_revert: bool,

    /// Extract keywords and consult the retrieval backend before reasoning.
    #[arg(long)]
    retrieval: bool,

    /// Score threshold for binarizing segmenter output.
    #[arg(long, value_name = "T")]
    threshold: Option<f64>,
}

impl PipelineArgs {
    fn overrides(&self) -> ConfigOverrides {
        let mut o = ConfigOverrides {
            max_cot_rounds: self.max_cot_rounds,
            cot_length_mode: self.cot_length,
            max_refine_rounds: self.max_rounds,
            binarize_threshold: self.threshold,
            retrieval_enabled: self.retrieval.then_some(true),
            revert_enabled: self.no_revert.then_some(false),
        };
        if self.no_cot {
            o.max_cot_rounds = Some(0);
            o.cot_length_mode = Some(CotLengthMode::Variational);
        }
        o
    }

    fn resolve(&self) -> Result<PipelineConfig, Failure> {
        let file = match &self.config {
            Some(p) => Some(
                ConfigOverrides::load(p)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
            ),
            None => None,
        };
        resolve(file.as_ref(), &self.overrides()).map_err(|e| Failure::Usage(e.to_string()))
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("request").required(true).multiple(true).args(["query", "control"])))]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    image: PathBuf,

    /// Natural-language query.
    #[arg(long)]
    query: Option<String>,

    /// Visual prompt as JSON: `{"kind": "box", "coords": [[x0, y0], [x1, y1]]}`.
    #[arg(long, value_name = "FILE")]
    control: Option<PathBuf>,

    /// Output directory for run.json, mask.png and overlay.png.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    #[command(flatten)]
    pipeline: PipelineArgs,

    #[command(flatten)]
    agents: AgentArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of images with JSON sidecars.
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,

    /// Output directory for report.json and report.md.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Samples evaluated concurrently.
    #[arg(long, value_name = "N", default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    parallel: u16,

    /// Write metrics in report.md as fractions (1.000) instead of percentages.
    #[arg(long)]
    fraction: bool,

    #[command(flatten)]
    pipeline: PipelineArgs,

    #[command(flatten)]
    agents: AgentArgs,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long, value_name = "PATH")]
    image: PathBuf,

    /// Binary mask PNG with the image's dimensions.
    #[arg(long, value_name = "PATH")]
    mask: PathBuf,

    /// Output directory for overlay.png and masked.png.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load_control(path: &Path) -> anyhow::Result<ControlAnnotation> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw: ControlAnnotation = serde_json::from_str(&text)
        .with_context(|| format!("parsing control annotation {}", path.display()))?;
    // re-validate and canonicalize (box corners are sorted)
    ControlAnnotation::new(raw.kind(), raw.coords().to_vec())
        .map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn write_overlay(
    image: &cotseg::ImageData,
    mask: &cotseg::RasterMask,
    out: &Path,
) -> anyhow::Result<()> {
    let tinted = overlay(image, mask, OVERLAY_COLOR, OVERLAY_ALPHA)?;
    save_rgb_png(&tinted, &out.join("overlay.png"))?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let cfg = args.pipeline.resolve()?;
    let control = match &args.control {
        Some(p) => Some(load_control(p).map_err(|e| Failure::Usage(format!("{e:#}")))?),
        None => None,
    };
    let query = SegQuery {
        text: args.query.clone().unwrap_or_default(),
        control,
    };
    let image =
        load_image(&args.image).with_context(|| format!("loading {}", args.image.display()))?;
    let agents = Backends::new(&args.agents)?
        .single()
        .context("setting up agents")?;
    let result = if args.pipeline.no_cot {
        run_no_cot(&image, &query, &cfg, &agents)
    } else {
        run(&image, &query, &cfg, &agents)
    };
    let record = result.map_err(|e| match e {
        PipelineError::Config(_) | PipelineError::Query(_) => Failure::Usage(e.to_string()),
    })?;
    record
        .write_run_dir(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    for e in &record.errors {
        eprintln!("warning: {e}");
    }
    let Some(mask) = &record.final_mask else {
        return Err(Failure::Runtime(anyhow!(
            "no mask produced ({}); run record written to {}",
            termination(&record),
            args.out.join("run.json").display()
        )));
    };
    write_overlay(&image, mask, &args.out)?;
    println!(
        "{}: {} pixels, {} refinement round(s), {}",
        args.out.join("mask.png").display(),
        mask.count(),
        record.refinement_rounds(),
        termination(&record)
    );
    Ok(())
}

fn termination(record: &cotseg::RunRecord) -> String {
    serde_json::to_value(record.termination_reason)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let cfg = args.pipeline.resolve()?;
    let samples = match load_dataset(&args.dataset) {
        Ok(s) => s,
        Err(e @ BenchError::EmptyDataset(_)) => return Err(Failure::Runtime(e.into())),
        Err(e) => {
            return Err(Failure::Runtime(
                anyhow::Error::new(e).context("loading dataset"),
            ))
        }
    };
    let backends = Backends::new(&args.agents)?;
    if let Some(dir) = backends.record_dir() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let factory = |s: &cotseg::bench::Sample| backends.for_sample(s);
    let report =
        evaluate(&samples, &cfg, &factory, usize::from(args.parallel)).context("evaluating")?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    emit_report(&report, &args.out.join("report.json"), ReportFormat::Json)
        .context("writing report.json")?;
    emit_report(
        &report,
        &args.out.join("report.md"),
        ReportFormat::Markdown {
            percent: !args.fraction,
        },
    )
    .context("writing report.md")?;
    for row in report.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: {}: {}",
            row.id,
            row.error.as_deref().unwrap_or_default()
        );
    }
    let a = &report.aggregate;
    println!(
        "gIoU {} cIoU {} ({} samples, {:.2} s/pair)",
        format_metric(a.giou, true),
        format_metric(a.ciou, true),
        a.samples,
        a.mean_seconds
    );
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<(), Failure> {
    let image =
        load_image(&args.image).with_context(|| format!("loading {}", args.image.display()))?;
    let mask = load_mask(&args.mask).with_context(|| format!("loading {}", args.mask.display()))?;
    let masked = render_masked(&image, &mask).context("mask does not fit the image")?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_overlay(&image, &mask, &args.out)?;
    save_rgb_png(&masked, &args.out.join("masked.png")).context("writing masked.png")?;
    println!("{}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Render(a) => cmd_render(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
