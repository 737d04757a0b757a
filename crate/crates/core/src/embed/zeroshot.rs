use serde::Serialize;

use super::{cosine_similarity, Matrix};
use crate::detection::prf;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroShotReport {
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub predictions: Vec<usize>,
}

/// Predicts the most cosine-similar class (lower index on ties) and
/// returns macro-F1 over every class, absent classes scoring 0.
pub fn zero_shot_f1(images: &Matrix, classes: &Matrix, labels: &[usize]) -> Result<ZeroShotReport> {
    if images.rows() == 0 {
        return Err(Error::invalid("no images to classify"));
    }
    if classes.rows() == 0 {
        return Err(Error::invalid("no class embeddings"));
    }
    if labels.len() != images.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} images",
            labels.len(),
            images.rows()
        )));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes.rows()) {
        return Err(Error::invalid(format!(
            "label {l} of image {i} is out of range for {} classes",
            classes.rows()
        )));
    }
    let sim = cosine_similarity(images, classes)?;
    let predictions: Vec<usize> = (0..images.rows())
        .map(|i| {
            let row = sim.row(i);
            let mut best = 0;
            for (c, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();

    let k = classes.rows();
    let mut tp = vec![0u64; k];
    let mut fp = vec![0u64; k];
    let mut fn_ = vec![0u64; k];
    for (&truth, &pred) in labels.iter().zip(&predictions) {
        if truth == pred {
            tp[truth] += 1;
        } else {
            fp[pred] += 1;
            fn_[truth] += 1;
        }
    }
    let per_class_f1: Vec<f64> = (0..k).map(|c| prf(tp[c], fp[c], fn_[c]).2).collect();
    let macro_f1 = per_class_f1.iter().sum::<f64>() / k as f64;
    Ok(ZeroShotReport {
        macro_f1,
        per_class_f1,
        predictions,
    })
}
