//! Subfigure detection metrics: greedy matching, 101-point interpolated AP,
//! COCO-style mAP and dataset-micro F1.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::bbox::{iou, BBox};
use crate::compositor::FigureManifest;
use crate::error::{Error, Result};
use crate::io::{DetectionSet, ScoredBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub iou_thresholds: Vec<f64>,
    pub f1_iou: f64,
    pub score_threshold: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            iou_thresholds: coco_thresholds(),
            f1_iou: 0.5,
            score_threshold: 0.0,
        }
    }
}

/// 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::config("iou_thresholds must not be empty"));
        }
        for t in &self.iou_thresholds {
            if !(*t > 0.0 && *t <= 1.0) {
                return Err(Error::config(format!("IoU threshold {t} outside (0,1]")));
            }
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("iou_thresholds must be strictly increasing"));
        }
        if !(self.f1_iou > 0.0 && self.f1_iou <= 1.0) {
            return Err(Error::config(format!("f1_iou {} outside (0,1]", self.f1_iou)));
        }
        if !self.score_threshold.is_finite() {
            return Err(Error::config("score_threshold must be finite"));
        }
        Ok(())
    }
}

/// One-to-one assignment between detections and ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    /// Indexed by input detection order.
    pub det_to_gt: Vec<Option<usize>>,
    pub gt_to_det: Vec<Option<usize>>,
}

impl Matching {
    pub fn tp(&self) -> usize {
        self.det_to_gt.iter().filter(|m| m.is_some()).count()
    }

    pub fn fp(&self) -> usize {
        self.det_to_gt.len() - self.tp()
    }

    pub fn fn_(&self) -> usize {
        self.gt_to_det.iter().filter(|m| m.is_none()).count()
    }
}

/// Detection indices by descending score, ties in input order.
fn score_order(dets: &[ScoredBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// Greedy matching: in score order, each detection takes the still-unmatched
/// ground-truth box of highest IoU (lowest index on ties) if that IoU is at
/// least `iou_thr`.
pub fn match_greedy(dets: &[ScoredBox], gt: &[BBox], iou_thr: f64) -> Matching {
    let mut det_to_gt = vec![None; dets.len()];
    let mut gt_to_det = vec![None; gt.len()];
    for d in score_order(dets) {
        let bbox = dets[d].bbox();
        let mut best: Option<(usize, f64)> = None;
        for (g, gbox) in gt.iter().enumerate() {
            if gt_to_det[g].is_some() {
                continue;
            }
            let v = iou(&bbox, gbox);
            if v >= iou_thr && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            det_to_gt[d] = Some(g);
            gt_to_det[g] = Some(d);
        }
    }
    Matching { det_to_gt, gt_to_det }
}

/// One image's detections and ground truth.
#[derive(Debug, Clone, Copy)]
pub struct ImagePair<'a> {
    pub dets: &'a [ScoredBox],
    pub gt: &'a [BBox],
}

/// 101-point interpolated AP over the dataset-wide score-ranked list.
/// Ties in score keep image order, then detection order.
pub fn average_precision(images: &[ImagePair<'_>], iou_thr: f64) -> Result<f64> {
    let n_gt: usize = images.iter().map(|p| p.gt.len()).sum();
    if n_gt == 0 {
        return Err(Error::invalid(
            "average precision is undefined without ground-truth boxes",
        ));
    }
    let mut ranked: Vec<(f64, bool)> = Vec::new();
    for pair in images {
        let m = match_greedy(pair.dets, pair.gt, iou_thr);
        ranked.extend(pair.dets.iter().zip(&m.det_to_gt).map(|(d, g)| (d.score, g.is_some())));
    }
    // stable sort keeps (image, detection) order on ties
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(interpolated_ap(ranked.iter().map(|r| r.1), n_gt))
}

/// AP from true-positive flags in rank order. Recall levels are compared as
/// exact rationals (`tp * 100 >= k * n_gt`).
fn interpolated_ap(flags: impl Iterator<Item = bool>, n_gt: usize) -> f64 {
    let mut tp_cum = Vec::new();
    let mut precision = Vec::new();
    let mut tp = 0usize;
    for (i, is_tp) in flags.enumerate() {
        tp += is_tp as usize;
        tp_cum.push(tp);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut cursor = 0;
    for k in 0..=100usize {
        while cursor < tp_cum.len() && tp_cum[cursor] * 100 < k * n_gt {
            cursor += 1;
        }
        if cursor < tp_cum.len() {
            sum += precision[cursor];
        }
    }
    sum / 101.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub map: f64,
    /// AP at IoU 0.5, reported alongside the multi-threshold mean.
    pub ap50: f64,
    pub ap_per_threshold: BTreeMap<String, f64>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Precision, recall and F1 from counts; each is 0 when undefined.
pub fn prf(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

/// Evaluates detections against manifest ground truth. Images without
/// detections count as all-missed; detections for unknown images are an
/// error. `score_threshold` applies to the F1 counts only.
pub fn evaluate_detections(
    dets: &[DetectionSet],
    manifests: &[FigureManifest],
    settings: &EvalSettings,
) -> Result<DetectionReport> {
    settings.validate()?;
    let index: HashMap<&str, usize> = manifests
        .iter()
        .enumerate()
        .map(|(i, m)| (m.figure_id.as_str(), i))
        .collect();
    let mut per_image: Vec<Vec<ScoredBox>> = vec![Vec::new(); manifests.len()];
    let mut unknown: Vec<&str> = Vec::new();
    for set in dets {
        match index.get(set.image_id.as_str()) {
            Some(&i) => per_image[i].extend_from_slice(&set.boxes),
            None => unknown.push(&set.image_id),
        }
    }
    if !unknown.is_empty() {
        unknown.sort_unstable();
        unknown.dedup();
        return Err(Error::invalid(format!(
            "detections reference unknown image ids: {}",
            unknown.join(", ")
        )));
    }
    let gts: Vec<Vec<BBox>> = manifests
        .iter()
        .map(|m| m.panels.iter().map(|p| p.bbox).collect())
        .collect();
    let pairs: Vec<ImagePair<'_>> = per_image
        .iter()
        .zip(&gts)
        .map(|(d, g)| ImagePair { dets: d, gt: g })
        .collect();

    let mut ap_per_threshold = BTreeMap::new();
    let mut total = 0.0;
    for &t in &settings.iou_thresholds {
        let ap = average_precision(&pairs, t)?;
        total += ap;
        ap_per_threshold.insert(t.to_string(), ap);
    }
    let map = total / settings.iou_thresholds.len() as f64;
    let ap50 = average_precision(&pairs, 0.5)?;

    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (d, g) in per_image.iter().zip(&gts) {
        let kept: Vec<ScoredBox> = d
            .iter()
            .copied()
            .filter(|b| b.score >= settings.score_threshold)
            .collect();
        let m = match_greedy(&kept, g, settings.f1_iou);
        tp += m.tp() as u64;
        fp += m.fp() as u64;
        fn_ += m.fn_() as u64;
    }
    let (precision, recall, f1) = prf(tp, fp, fn_);
    Ok(DetectionReport {
        map,
        ap50,
        ap_per_threshold,
        f1,
        precision,
        recall,
        tp,
        fp,
        fn_,
    })
}
