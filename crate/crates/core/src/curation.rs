//! Decomposition of real compound figures into subfigure–caption pairs,
//! metadata and classifier-score filtering, and corpus statistics.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use image::{imageops, RgbImage};
use serde::{Deserialize, Serialize};

use crate::bbox::{iou, BBox};
use crate::error::{Error, Result};
use crate::io::{jsonl, DetectionSet, ScoredBox};

/// Labels that mark a compound figure as clinical imaging or microscopy.
pub const ACCEPTED_LABELS: [&str; 3] = ["clinical imaging", "clinical image", "microscopy"];

/// Captions longer than this many tokens are counted as long.
pub const LONG_CAPTION_TOKENS: u64 = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundRecord {
    pub figure_id: String,
    pub image: String,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub modality_labels: Vec<String>,
    #[serde(default)]
    pub classifier_score: Option<f64>,
}

impl CompoundRecord {
    /// Lowercases and trims modality labels.
    pub fn normalize(&mut self) {
        for l in &mut self.modality_labels {
            *l = normalize_label(l);
        }
    }

    /// First label, or `"unknown"`.
    pub fn primary_modality(&self) -> String {
        self.modality_labels
            .first()
            .map(|l| normalize_label(l))
            .unwrap_or_else(|| "unknown".to_string())
    }
}

pub fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

/// Reads compound records with labels normalized.
pub fn read_records(path: &Path) -> Result<Vec<CompoundRecord>> {
    let mut records: Vec<CompoundRecord> =
        jsonl::read_validated(path, |r: &CompoundRecord| match r.classifier_score {
            Some(s) if !(0.0..=1.0).contains(&s) => Err(Error::invalid(format!("classifier_score {s} outside [0,1]"))),
            _ => Ok(()),
        })?;
    records.iter_mut().for_each(CompoundRecord::normalize);
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubfigurePair {
    pub subfigure_id: String,
    pub parent_id: String,
    pub file: String,
    pub bbox: BBox,
    pub caption: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposeParams {
    pub min_score: f64,
    pub nms_iou: f64,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        DecomposeParams {
            min_score: 0.5,
            nms_iou: 0.45,
        }
    }
}

/// Greedy NMS: in score order (input order on ties), a box survives unless
/// its IoU with an already kept box exceeds `nms_iou`.
pub fn nms(boxes: &[ScoredBox], nms_iou: f64) -> Vec<ScoredBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score));
    let mut kept: Vec<ScoredBox> = Vec::new();
    for i in order {
        let candidate = boxes[i].bbox();
        if kept.iter().all(|k| iou(&k.bbox(), &candidate) <= nms_iou) {
            kept.push(boxes[i]);
        }
    }
    kept
}

/// Splits one compound figure into caption-inheriting subfigure crops.
///
/// Boxes under `min_score` are dropped, the rest go through NMS and are
/// clamped to the image. A figure with no surviving box yields one pair
/// covering the whole image with score 0.
pub fn decompose(
    record: &CompoundRecord,
    dets: &DetectionSet,
    image: &RgbImage,
    params: &DecomposeParams,
) -> Result<Vec<(SubfigurePair, RgbImage)>> {
    if dets.image_id != record.figure_id {
        return Err(Error::invalid(format!(
            "detections for {:?} applied to figure {:?}",
            dets.image_id, record.figure_id
        )));
    }
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::invalid(format!(
            "figure {} has an empty image",
            record.figure_id
        )));
    }
    let confident: Vec<ScoredBox> = dets
        .boxes
        .iter()
        .copied()
        .filter(|b| b.score >= params.min_score)
        .collect();
    let mut survivors: Vec<(BBox, f64)> = nms(&confident, params.nms_iou)
        .into_iter()
        .filter_map(|b| b.bbox().clamp_to(w, h).map(|c| (c, b.score)))
        .collect();
    if survivors.is_empty() {
        survivors.push((BBox { x: 0, y: 0, w, h }, 0.0));
    }
    Ok(survivors
        .into_iter()
        .enumerate()
        .map(|(k, (bbox, score))| {
            let subfigure_id = format!("{}_{k}", record.figure_id);
            let crop = imageops::crop_imm(image, bbox.x, bbox.y, bbox.w, bbox.h).to_image();
            let pair = SubfigurePair {
                file: format!("{subfigure_id}.png"),
                subfigure_id,
                parent_id: record.figure_id.clone(),
                bbox,
                caption: record.caption.clone(),
                score,
            };
            (pair, crop)
        })
        .collect())
}

/// Keeps records labelled clinical imaging or microscopy, in input order.
pub fn filter_metadata(records: Vec<CompoundRecord>) -> Vec<CompoundRecord> {
    records
        .into_iter()
        .filter(|r| {
            r.modality_labels
                .iter()
                .any(|l| ACCEPTED_LABELS.contains(&normalize_label(l).as_str()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreFilterOutcome {
    pub kept: Vec<SubfigurePair>,
    pub dropped_below: u64,
    pub dropped_missing: u64,
}

/// Keeps pairs whose classifier score is at least `threshold`; pairs
/// without a score are dropped and counted separately.
pub fn filter_score(pairs: Vec<(SubfigurePair, Option<f64>)>, threshold: f64) -> ScoreFilterOutcome {
    let mut out = ScoreFilterOutcome {
        kept: Vec::new(),
        dropped_below: 0,
        dropped_missing: 0,
    };
    for (pair, score) in pairs {
        match score {
            Some(s) if s >= threshold => out.kept.push(pair),
            Some(_) => out.dropped_below += 1,
            None => out.dropped_missing += 1,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tokenizer {
    Whitespace,
    /// Precomputed token counts keyed by subfigure id.
    External(HashMap<String, u64>),
}

impl Tokenizer {
    pub fn count(&self, pair: &SubfigurePair) -> Result<u64> {
        match self {
            Tokenizer::Whitespace => Ok(pair.caption.split_whitespace().count() as u64),
            Tokenizer::External(counts) => counts
                .get(&pair.subfigure_id)
                .copied()
                .ok_or_else(|| Error::invalid(format!("no token count for {}", pair.subfigure_id))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenCountRow {
    subfigure_id: String,
    tokens: u64,
}

/// Reads `{"subfigure_id": ..., "tokens": ...}` rows.
pub fn read_token_counts(path: &Path) -> Result<Tokenizer> {
    let rows: Vec<TokenCountRow> = jsonl::read_all(path)?;
    Ok(Tokenizer::External(
        rows.into_iter().map(|r| (r.subfigure_id, r.tokens)).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub pairs: u64,
    pub figures: u64,
    pub mean_tokens: Option<f64>,
    pub max_tokens: u64,
    pub long_captions: u64,
    pub frac_over_256: Option<f64>,
    pub modality_share: Option<BTreeMap<String, f64>>,
    /// Number of figures by how many subfigures they produced.
    pub subfigures_per_figure: BTreeMap<u64, u64>,
}

/// Caption-length, modality and subfigure-count statistics. `modality`
/// maps parent ids to a modality name; unmapped parents count as `unknown`.
pub fn corpus_stats(
    pairs: &[SubfigurePair],
    tokenizer: &Tokenizer,
    modality: &HashMap<String, String>,
) -> Result<CorpusStats> {
    let mut total: u128 = 0;
    let mut max_tokens = 0;
    let mut long_captions = 0;
    let mut per_parent: BTreeMap<&str, u64> = BTreeMap::new();
    let mut per_modality: BTreeMap<String, u64> = BTreeMap::new();
    for p in pairs {
        let t = tokenizer.count(p)?;
        total += t as u128;
        max_tokens = max_tokens.max(t);
        long_captions += (t > LONG_CAPTION_TOKENS) as u64;
        *per_parent.entry(&p.parent_id).or_insert(0) += 1;
        let m = modality
            .get(&p.parent_id)
            .cloned()
            .unwrap_or_else(|| "unknown".to_string());
        *per_modality.entry(m).or_insert(0) += 1;
    }
    let n = pairs.len() as u64;
    let mut subfigures_per_figure = BTreeMap::new();
    for &c in per_parent.values() {
        *subfigures_per_figure.entry(c).or_insert(0) += 1;
    }
    let frac = |k: u64| (n > 0).then(|| k as f64 / n as f64);
    Ok(CorpusStats {
        pairs: n,
        figures: per_parent.len() as u64,
        mean_tokens: (n > 0).then(|| total as f64 / n as f64),
        max_tokens,
        long_captions,
        frac_over_256: frac(long_captions),
        modality_share: (n > 0).then(|| {
            per_modality
                .into_iter()
                .map(|(k, c)| (k, c as f64 / n as f64))
                .collect()
        }),
        subfigures_per_figure,
    })
}
