//! Embedding-space evaluation. All similarities are cosine; computation is
//! f64 even though embeddings are stored as f32.

mod infonce;
mod mmd;
mod retrieval;
mod robustness;
mod wilcoxon;
mod zeroshot;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::EmbeddingMatrix;

pub use infonce::{infonce_grad, infonce_loss, ContrastiveBatch, InfoNceGrad};
pub use mmd::{median_heuristic, mmd2_biased, mmd_permutation_test, MmdOptions, MmdOutcome};
pub use retrieval::{correct_ranks, recall_at_k, recall_at_k_from_similarity, recall_at_ks};
pub use robustness::{robustness_ratio, RobustnessReport};
pub use wilcoxon::{signed_ranks, wilcoxon_signed_rank, SignedRanks};
pub use zeroshot::{zero_shot_f1, ZeroShotReport};

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: String,
    pub n_effective: u64,
}

/// Dense row-major f64 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("rows have different lengths"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::invalid(format!(
                "{what}: non-finite value at row {}, column {}",
                i / self.cols.max(1),
                i % self.cols.max(1)
            ))),
            None => Ok(()),
        }
    }
}

impl From<&EmbeddingMatrix> for Matrix {
    fn from(m: &EmbeddingMatrix) -> Self {
        Matrix {
            rows: m.n(),
            cols: m.d(),
            data: m.to_f64(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit-normalized rows and the original norms. Zero rows are an error.
pub(crate) fn normalize_rows(m: &Matrix, what: &str) -> Result<(Matrix, Vec<f64>)> {
    m.check_finite(what)?;
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows);
    for i in 0..m.rows {
        let norm = dot(m.row(i), m.row(i)).sqrt();
        if norm == 0.0 {
            return Err(Error::invalid(format!(
                "{what}: row {i} has zero norm; cosine similarity is undefined"
            )));
        }
        for v in &mut out.data[i * m.cols..(i + 1) * m.cols] {
            *v /= norm;
        }
        norms.push(norm);
    }
    Ok((out, norms))
}

/// `a.rows x b.rows` matrix of cosine similarities.
pub fn cosine_similarity(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::invalid(format!("dimension mismatch: {} vs {}", a.cols, b.cols)));
    }
    let (an, _) = normalize_rows(a, "left matrix")?;
    let (bn, _) = normalize_rows(b, "right matrix")?;
    let mut data = Vec::with_capacity(a.rows * b.rows);
    for i in 0..a.rows {
        for j in 0..b.rows {
            data.push(dot(an.row(i), bn.row(j)));
        }
    }
    Matrix::new(a.rows, b.rows, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_is_scale_free() {
        let a = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![6.0, 8.0], vec![-4.0, 3.0]]).unwrap();
        let s = cosine_similarity(&a, &b).unwrap();
        assert!((s.get(0, 0) - 1.0).abs() < 1e-15);
        assert_eq!(s.get(0, 1), 0.0);
    }

    #[test]
    fn zero_row_rejected() {
        let a = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(cosine_similarity(&a, &a).is_err());
    }
}
