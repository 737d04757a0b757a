//! `figforge` command-line front end.
//!
//! Exit codes: 0 on success, 1 when inputs or configuration are invalid,
//! 2 when the environment fails (unreadable or unwritable files). Errors go
//! to stderr as one JSON object `{code, message, context}`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use figforge_core::Error;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(
    name = "figforge",
    version,
    about = "Synthetic compound figures, subfigure curation and embedding evaluation"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub(crate) enum Command {
    /// Generate a synthetic compound-figure corpus and its manifest.
    Generate(GenerateArgs),
    /// Convert a manifest into a COCO detection document.
    ExportCoco(ExportCocoArgs),
    /// Score detections against manifest ground truth (mAP, F1).
    EvalDetect(EvalDetectArgs),
    /// Crop compound figures into caption-inheriting subfigures.
    Decompose(DecomposeArgs),
    /// Keep subfigure pairs passing the metadata and classifier filters.
    Filter(FilterArgs),
    /// Caption length, modality and subfigure-count statistics.
    Stats(StatsArgs),
    /// Recall@K in both directions between paired embeddings.
    EvalRetrieval(EvalRetrievalArgs),
    /// Zero-shot macro-F1 from image and class embeddings.
    EvalZeroshot(EvalZeroshotArgs),
    /// Apply the configured perturbations to a directory of PNG images.
    Perturb(PerturbArgs),
    /// Perturbed-to-clean metric ratios.
    Robustness(RobustnessArgs),
    /// Wilcoxon signed-rank test on paired values.
    Wilcoxon(WilcoxonArgs),
    /// MMD permutation test between two embedding sets.
    Mmd(MmdArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Output directory (overrides `generation.out_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "FIGFORGE_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportCocoArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalDetectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated IoU thresholds for mAP.
    #[arg(long, value_delimiter = ',')]
    pub iou_thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub f1_iou: Option<f64>,
    #[arg(long)]
    pub score_threshold: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    /// Directory that record image paths are relative to.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub min_score: Option<f64>,
    #[arg(long)]
    pub nms_iou: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct FilterArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Compound records carrying modality labels and classifier scores.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub score_threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-subfigure scores `{subfigure_id, classifier_score}`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// `whitespace` or `external:<token-counts.jsonl>`.
    #[arg(long, default_value = "whitespace")]
    pub tokenizer: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Compound records used for per-modality shares.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalRetrievalArgs {
    #[arg(long)]
    pub image_emb: PathBuf,
    #[arg(long)]
    pub text_emb: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalZeroshotArgs {
    #[arg(long)]
    pub image_emb: PathBuf,
    #[arg(long)]
    pub class_emb: PathBuf,
    /// JSON array of true class indices, one per image row.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PerturbArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RobustnessArgs {
    #[arg(long)]
    pub clean: f64,
    /// JSON object mapping perturbation name to metric.
    #[arg(long)]
    pub perturbed: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct WilcoxonArgs {
    /// JSON array of numbers.
    #[arg(long)]
    pub a: PathBuf,
    /// JSON array of numbers, paired with `--a`.
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MmdArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn context(err: &Error) -> Value {
    match err {
        Error::Parse { path, line, .. } => json!({ "path": path, "line": line }),
        Error::Format { path, .. } | Error::Io { path, .. } | Error::Image { path, .. } => json!({ "path": path }),
        Error::Embf { path, source } => json!({ "path": path, "detail": source.to_string() }),
        Error::Panel { source_id, .. } => json!({ "source_id": source_id }),
        _ => json!({}),
    }
}

fn report(code: &str, message: String, context: Value) {
    eprintln!("{}", json!({ "code": code, "message": message, "context": context }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.to_string().trim_end().to_string(), json!({}));
            return ExitCode::from(1);
        }
    };
    match commands::run(cli.config.as_deref(), cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.code(), e.to_string(), context(&e));
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
