//! Brute-force reference implementations used by the acceptance suite.
//! They favour obviousness over speed and share no code with the library.

use figforge_core::io::ScoredBox;
use figforge_core::BBox;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w).saturating_sub(a.x.max(b.x)) as f64;
    let iy = (a.y + a.h).min(b.y + b.h).saturating_sub(a.y.max(b.y)) as f64;
    let inter = ix * iy;
    let union = (a.w as f64 * a.h as f64) + (b.w as f64 * b.h as f64) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// True-positive count of greedy matching on one image, given detections
/// already in rank order.
fn true_positives(ranked: &[ScoredBox], gt: &[BBox], thr: f64) -> usize {
    let mut taken = vec![false; gt.len()];
    let mut tp = 0;
    for d in ranked {
        let db = BBox {
            x: d.x,
            y: d.y,
            w: d.w,
            h: d.h,
        };
        let mut best: Option<usize> = None;
        let mut best_iou = -1.0;
        for (g, gb) in gt.iter().enumerate() {
            let v = iou(&db, gb);
            if !taken[g] && v >= thr && v > best_iou {
                best = Some(g);
                best_iou = v;
            }
        }
        if let Some(g) = best {
            taken[g] = true;
            tp += 1;
        }
    }
    tp
}

/// Every detection as (score, image, position), ranked by score with
/// image-then-input order on ties.
fn ranking(dets: &[Vec<ScoredBox>]) -> Vec<(f64, usize, usize)> {
    let mut all = Vec::new();
    for (i, ds) in dets.iter().enumerate() {
        for (k, d) in ds.iter().enumerate() {
            all.push((d.score, i, k));
        }
    }
    // insertion sort: stable and obviously so
    for i in 1..all.len() {
        let mut j = i;
        while j > 0 && all[j - 1].0 < all[j].0 {
            all.swap(j - 1, j);
            j -= 1;
        }
    }
    all
}

/// 101-point interpolated AP: re-matches every prefix of the ranked list
/// from scratch and takes the best precision at each recall level.
pub fn average_precision(dets: &[Vec<ScoredBox>], gt: &[Vec<BBox>], thr: f64) -> f64 {
    let n_gt: usize = gt.iter().map(Vec::len).sum();
    let ranked = ranking(dets);
    let mut curve = Vec::new(); // (tp, precision) per cutoff
    for cut in 1..=ranked.len() {
        let mut tp = 0;
        for (img, g) in gt.iter().enumerate() {
            let prefix: Vec<ScoredBox> = ranked[..cut]
                .iter()
                .filter(|r| r.1 == img)
                .map(|r| dets[img][r.2])
                .collect();
            tp += true_positives(&prefix, g, thr);
        }
        curve.push((tp, tp as f64 / cut as f64));
    }
    let mut sum = 0.0;
    for k in 0..=100usize {
        let best = curve
            .iter()
            .filter(|(tp, _)| tp * 100 >= k * n_gt)
            .map(|c| c.1)
            .fold(0.0, f64::max);
        sum += best;
    }
    sum / 101.0
}

pub fn f1(dets: &[Vec<ScoredBox>], gt: &[Vec<BBox>], thr: f64, score_threshold: f64) -> f64 {
    let (mut tp, mut n_det, mut n_gt) = (0, 0, 0);
    for (ds, g) in dets.iter().zip(gt) {
        let kept: Vec<ScoredBox> = ranking(std::slice::from_ref(ds))
            .into_iter()
            .map(|r| ds[r.2])
            .filter(|d| d.score >= score_threshold)
            .collect();
        tp += true_positives(&kept, g, thr);
        n_det += kept.len();
        n_gt += g.len();
    }
    let p = if n_det > 0 { tp as f64 / n_det as f64 } else { 0.0 };
    let r = if n_gt > 0 { tp as f64 / n_gt as f64 } else { 0.0 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Entrywise relative error with a floor on the denominator, so entries
/// that are zero up to rounding are judged on absolute error instead.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Exact Wilcoxon signed-rank test by listing all 2^n sign patterns.
/// Returns `(min(W+, W-), two-sided p, n without zero differences)`.
pub fn wilcoxon_enumeration(a: &[f64], b: &[f64]) -> (f64, f64, usize) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    // doubled mid-ranks keep everything integral
    let mut doubled = vec![0u64; n];
    for i in 0..n {
        let below = d.iter().filter(|v| v.abs() < d[i].abs()).count() as u64;
        let equal = d.iter().filter(|v| v.abs() == d[i].abs()).count() as u64;
        doubled[i] = 2 * below + equal + 1;
    }
    let total: u64 = doubled.iter().sum();
    let plus: u64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| doubled[i]).sum();
    let observed = plus.min(total - plus);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let p: u64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| doubled[i]).sum();
        if p.min(total - p) <= observed {
            hits += 1;
        }
    }
    (observed as f64 / 2.0, hits as f64 / (1u64 << n) as f64, n)
}
