//! Subcommand implementations. Each one resolves its effective config,
//! validates every input, and only then writes outputs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use figforge_core::compositor::{generate_corpus, SourceIndex};
use figforge_core::curation::{
    corpus_stats, decompose, filter_metadata, filter_score, read_records, read_token_counts, CompoundRecord,
    SubfigurePair, Tokenizer,
};
use figforge_core::detection::evaluate_detections;
use figforge_core::embed::{
    mmd_permutation_test, recall_at_ks, robustness_ratio, wilcoxon_signed_rank, zero_shot_f1, Matrix,
};
use figforge_core::io::{self, jsonl, DetectionSet, ScoredBox};
use figforge_core::perturb::perturb;
use figforge_core::{Error, Result};
use image::ImageFormat;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::*;

pub(crate) fn run(config: Option<&Path>, command: Command) -> Result<()> {
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match command {
        Command::Generate(a) => generate(cfg, a),
        Command::ExportCoco(a) => export_coco(cfg, a),
        Command::EvalDetect(a) => eval_detect(cfg, a),
        Command::Decompose(a) => decompose_cmd(cfg, a),
        Command::Filter(a) => filter(cfg, a),
        Command::Stats(a) => stats(cfg, a),
        Command::EvalRetrieval(a) => eval_retrieval(cfg, a),
        Command::EvalZeroshot(a) => eval_zeroshot(cfg, a),
        Command::Perturb(a) => perturb_cmd(cfg, a),
        Command::Robustness(a) => robustness(cfg, a),
        Command::Wilcoxon(a) => wilcoxon(cfg, a),
        Command::Mmd(a) => mmd(cfg, a),
    }
}

/// Directory holding a single-file output.
fn parent_dir(out: &Path) -> PathBuf {
    match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_effective<A: Serialize>(dir: &Path, command: &str, cfg: &RunConfig, args: &A) -> Result<()> {
    let value = json!({ "command": command, "config": cfg, "args": args });
    io::write_json_sorted(&dir.join("effective_config.json"), &value)
}

/// Writes a single JSON report plus `effective_config.json` beside it.
fn write_report<R: Serialize, A: Serialize>(
    out: &Path,
    report: &R,
    command: &str,
    cfg: &RunConfig,
    args: &A,
) -> Result<()> {
    let dir = parent_dir(out);
    create_dir(&dir)?;
    io::write_json_sorted(out, report)?;
    write_effective(&dir, command, cfg, args)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: format!("column {}: {e}", e.column()),
    })
}

fn generate(mut cfg: RunConfig, args: GenerateArgs) -> Result<()> {
    let g = &mut cfg.generation;
    if let Some(c) = args.count {
        g.count = c;
    }
    if let Some(s) = args.seed {
        g.master_seed = s;
    }
    if args.workers.is_some() {
        g.workers = args.workers;
    }
    if args.out.is_some() {
        g.out_dir = args.out.clone();
    }
    cfg.validate()?;
    let out = cfg
        .generation
        .out_dir
        .clone()
        .ok_or_else(|| Error::config("no output directory: pass --out or set generation.out_dir"))?;
    let pool_path = cfg
        .pool_index
        .clone()
        .ok_or_else(|| Error::config("generation needs `pool_index` in the config"))?;
    let workers = cfg
        .generation
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let pool = io::read_pool(&pool_path)?;
    let gen = cfg.generation_config();
    SourceIndex::new(&pool, &gen)?;
    let images = pool.load_images(&parent_dir(&pool_path))?;
    let summary = generate_corpus(
        &pool,
        &images,
        &gen,
        cfg.generation.count,
        cfg.generation.master_seed,
        workers,
        &out,
    )?;

    // Worker count and output location never affect the corpus, so they
    // are left out to keep this file identical across such reruns.
    let mut effective = cfg.clone();
    effective.generation.workers = None;
    effective.generation.out_dir = None;
    let recorded = json!({ "count": cfg.generation.count, "seed": cfg.generation.master_seed });
    write_effective(&out, "generate", &effective, &recorded)?;
    io::write_json_sorted(
        &out.join("summary.json"),
        &json!({ "count": summary.count, "kind_counts": summary.kind_counts }),
    )
}

fn export_coco(cfg: RunConfig, args: ExportCocoArgs) -> Result<()> {
    let manifests = io::read_manifest(&args.manifest)?;
    let doc = io::export_coco(&manifests)?;
    let dir = parent_dir(&args.out);
    create_dir(&dir)?;
    io::write_coco(&args.out, &doc)?;
    write_effective(&dir, "export-coco", &cfg, &args)
}

fn eval_detect(mut cfg: RunConfig, args: EvalDetectArgs) -> Result<()> {
    if let Some(t) = &args.iou_thresholds {
        cfg.eval.iou_thresholds = t.clone();
    }
    if let Some(v) = args.f1_iou {
        cfg.eval.f1_iou = v;
    }
    if let Some(v) = args.score_threshold {
        cfg.eval.score_threshold = v;
    }
    cfg.validate()?;
    let manifests = io::read_manifest(&args.manifest)?;
    let dets = io::read_detections(&args.detections)?;
    let report = evaluate_detections(&dets, &manifests, &cfg.eval)?;
    write_report(&args.out, &report, "eval-detect", &cfg, &args)
}

#[derive(Debug, Serialize)]
struct RecordFailure {
    figure_id: String,
    message: String,
}

fn decompose_cmd(mut cfg: RunConfig, args: DecomposeArgs) -> Result<()> {
    if let Some(v) = args.min_score {
        cfg.filter.decompose.min_score = v;
    }
    if let Some(v) = args.nms_iou {
        cfg.filter.decompose.nms_iou = v;
    }
    cfg.validate()?;
    let params = cfg.filter.decompose;
    let records = read_records(&args.records)?;
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert(r.figure_id.as_str()) {
            return Err(Error::invalid(format!(
                "duplicate figure_id {:?} in records",
                r.figure_id
            )));
        }
    }
    let mut by_id: HashMap<String, Vec<ScoredBox>> = HashMap::new();
    let mut unknown = Vec::new();
    for set in io::read_detections(&args.detections)? {
        if seen.contains(set.image_id.as_str()) {
            by_id.entry(set.image_id).or_default().extend(set.boxes);
        } else {
            unknown.push(set.image_id);
        }
    }
    if !unknown.is_empty() {
        unknown.sort_unstable();
        unknown.dedup();
        return Err(Error::invalid(format!(
            "detections reference figures missing from the records: {}",
            unknown.join(", ")
        )));
    }

    let crops = args.out.join("crops");
    create_dir(&crops)?;
    let results: Vec<Result<std::result::Result<Vec<SubfigurePair>, RecordFailure>>> = records
        .par_iter()
        .map(|record| {
            let set = DetectionSet {
                image_id: record.figure_id.clone(),
                boxes: by_id.get(&record.figure_id).cloned().unwrap_or_default(),
            };
            let path = args.images.join(&record.image);
            let img = match image::open(&path) {
                Ok(img) => img.to_rgb8(),
                Err(e) => {
                    return Ok(Err(RecordFailure {
                        figure_id: record.figure_id.clone(),
                        message: format!("cannot read {}: {e}", path.display()),
                    }))
                }
            };
            let mut pairs = Vec::new();
            for (mut pair, crop) in decompose(record, &set, &img, &params)? {
                pair.file = format!("crops/{}", pair.file);
                let dest = args.out.join(&pair.file);
                crop.save_with_format(&dest, ImageFormat::Png)
                    .map_err(|e| Error::Image {
                        path: dest.clone(),
                        message: e.to_string(),
                    })?;
                pairs.push(pair);
            }
            Ok(Ok(pairs))
        })
        .collect();

    let mut pairs = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r? {
            Ok(p) => pairs.extend(p),
            Err(f) => failed.push(f),
        }
    }
    jsonl::write_all(&args.out.join("pairs.jsonl"), &pairs)?;
    io::write_json_sorted(
        &args.out.join("decompose_report.json"),
        &json!({ "records": records.len(), "pairs": pairs.len(), "failed": failed }),
    )?;
    write_effective(&args.out, "decompose", &cfg, &args)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairScore {
    subfigure_id: String,
    classifier_score: f64,
}

fn filter(mut cfg: RunConfig, args: FilterArgs) -> Result<()> {
    if let Some(v) = args.score_threshold {
        cfg.filter.score_threshold = v;
    }
    cfg.validate()?;
    let records = read_records(&args.labels)?;
    let pairs: Vec<SubfigurePair> = jsonl::read_all(&args.pairs)?;
    let overrides: HashMap<String, f64> = match &args.scores {
        Some(p) => jsonl::read_validated(p, |s: &PairScore| {
            if (0.0..=1.0).contains(&s.classifier_score) {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "classifier_score {} outside [0,1]",
                    s.classifier_score
                )))
            }
        })?
        .into_iter()
        .map(|s| (s.subfigure_id, s.classifier_score))
        .collect(),
        None => HashMap::new(),
    };

    let parents: HashMap<&str, &CompoundRecord> = records.iter().map(|r| (r.figure_id.as_str(), r)).collect();
    if let Some(p) = pairs.iter().find(|p| !parents.contains_key(p.parent_id.as_str())) {
        return Err(Error::invalid(format!(
            "pair {} references parent {} absent from the records",
            p.subfigure_id, p.parent_id
        )));
    }
    let accepted: HashSet<String> = filter_metadata(records.clone())
        .into_iter()
        .map(|r| r.figure_id)
        .collect();

    let input = pairs.len();
    let mut dropped_metadata = 0u64;
    let mut scored = Vec::new();
    for p in pairs {
        if !accepted.contains(&p.parent_id) {
            dropped_metadata += 1;
            continue;
        }
        let score = overrides
            .get(&p.subfigure_id)
            .copied()
            .or(parents[p.parent_id.as_str()].classifier_score);
        scored.push((p, score));
    }
    let outcome = filter_score(scored, cfg.filter.score_threshold);

    create_dir(&args.out)?;
    jsonl::write_all(&args.out.join("pairs.jsonl"), &outcome.kept)?;
    io::write_json_sorted(
        &args.out.join("filter_report.json"),
        &json!({
            "input": input,
            "kept": outcome.kept.len(),
            "dropped_metadata": dropped_metadata,
            "dropped_below_threshold": outcome.dropped_below,
            "dropped_missing_score": outcome.dropped_missing,
            "score_threshold": cfg.filter.score_threshold,
        }),
    )?;
    write_effective(&args.out, "filter", &cfg, &args)
}

fn stats(cfg: RunConfig, args: StatsArgs) -> Result<()> {
    let tokenizer = match args.tokenizer.as_str() {
        "whitespace" => Tokenizer::Whitespace,
        t => match t.strip_prefix("external:") {
            Some(p) if !p.is_empty() => read_token_counts(Path::new(p))?,
            _ => {
                return Err(Error::invalid(format!(
                    "unknown tokenizer {t:?}; expected `whitespace` or `external:<path>`"
                )))
            }
        },
    };
    let pairs: Vec<SubfigurePair> = jsonl::read_all(&args.pairs)?;
    let modality: HashMap<String, String> = match &args.records {
        Some(p) => read_records(p)?
            .into_iter()
            .map(|r| {
                let m = r.primary_modality();
                (r.figure_id, m)
            })
            .collect(),
        None => HashMap::new(),
    };
    let report = corpus_stats(&pairs, &tokenizer, &modality)?;
    write_report(&args.out, &report, "stats", &cfg, &args)
}

fn load_matrix(path: &Path) -> Result<Matrix> {
    Ok(Matrix::from(&io::read_embeddings(path)?))
}

fn eval_retrieval(mut cfg: RunConfig, args: EvalRetrievalArgs) -> Result<()> {
    if let Some(k) = &args.k {
        cfg.retrieval.ks = k.clone();
    }
    cfg.validate()?;
    let image = load_matrix(&args.image_emb)?;
    let text = load_matrix(&args.text_emb)?;
    let ks = &cfg.retrieval.ks;
    let image_to_text = recall_at_ks(&image, &text, ks)?;
    let text_to_image = recall_at_ks(&text, &image, ks)?;
    let report = json!({
        "n": image.rows(),
        "image_to_text": image_to_text,
        "text_to_image": text_to_image,
    });
    write_report(&args.out, &report, "eval-retrieval", &cfg, &args)
}

fn eval_zeroshot(cfg: RunConfig, args: EvalZeroshotArgs) -> Result<()> {
    let images = load_matrix(&args.image_emb)?;
    let classes = load_matrix(&args.class_emb)?;
    let labels: Vec<usize> = read_json(&args.labels)?;
    let report = zero_shot_f1(&images, &classes, &labels)?;
    write_report(&args.out, &report, "eval-zeroshot", &cfg, &args)
}

/// PNG files under `root`, as sorted paths relative to it.
fn list_pngs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let dir = root.join(&rel);
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let ty = entry.file_type().map_err(|e| Error::io(entry.path(), e))?;
            let child = rel.join(entry.file_name());
            if ty.is_dir() {
                stack.push(child);
            } else if child.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                out.push(child);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn perturb_cmd(cfg: RunConfig, args: PerturbArgs) -> Result<()> {
    cfg.validate()?;
    let specs = &cfg.perturbations;
    if specs.is_empty() {
        return Err(Error::config("no perturbations configured"));
    }
    let mut labels = HashSet::new();
    for s in specs {
        if !labels.insert(s.label()) {
            return Err(Error::config(format!("perturbation {} listed twice", s.label())));
        }
    }
    let files = list_pngs(&args.images)?;
    let images: Vec<image::RgbImage> = files
        .par_iter()
        .map(|f| {
            let path = args.images.join(f);
            image::open(&path)
                .map(|i| i.to_rgb8())
                .map_err(|e| Error::Invalid(format!("cannot decode {}: {e}", path.display())))
        })
        .collect::<Result<_>>()?;

    for s in specs {
        create_dir(&args.out.join(s.label()))?;
        for f in &files {
            if let Some(parent) = args.out.join(s.label()).join(f).parent() {
                create_dir(parent)?;
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|s| (0..files.len()).map(move |f| (s, f)))
        .collect();
    jobs.par_iter().try_for_each(|&(s, f)| {
        let out = perturb(&images[f], &specs[s])?;
        let dest = args.out.join(specs[s].label()).join(&files[f]);
        out.save_with_format(&dest, ImageFormat::Png).map_err(|e| Error::Image {
            path: dest.clone(),
            message: e.to_string(),
        })
    })?;

    let names: Vec<String> = specs.iter().map(|s| s.label()).collect();
    io::write_json_sorted(
        &args.out.join("perturb_report.json"),
        &json!({ "images": files.len(), "perturbations": names }),
    )?;
    write_effective(&args.out, "perturb", &cfg, &args)
}

fn robustness(cfg: RunConfig, args: RobustnessArgs) -> Result<()> {
    let perturbed: BTreeMap<String, f64> = read_json(&args.perturbed)?;
    let report = robustness_ratio(args.clean, &perturbed)?;
    write_report(&args.out, &report, "robustness", &cfg, &args)
}

fn wilcoxon(cfg: RunConfig, args: WilcoxonArgs) -> Result<()> {
    let a: Vec<f64> = read_json(&args.a)?;
    let b: Vec<f64> = read_json(&args.b)?;
    let report = wilcoxon_signed_rank(&a, &b)?;
    write_report(&args.out, &report, "wilcoxon", &cfg, &args)
}

fn mmd(mut cfg: RunConfig, args: MmdArgs) -> Result<()> {
    if let Some(p) = args.permutations {
        cfg.mmd.permutations = p;
    }
    if args.sigma.is_some() {
        cfg.mmd.sigma = args.sigma;
    }
    if let Some(s) = args.seed {
        cfg.mmd.seed = s;
    }
    cfg.validate()?;
    let x = load_matrix(&args.x)?;
    let y = load_matrix(&args.y)?;
    let outcome = mmd_permutation_test(&x, &y, &cfg.mmd)?;
    write_report(&args.out, &outcome, "mmd", &cfg, &args)
}
