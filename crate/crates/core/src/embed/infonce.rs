//! Symmetric InfoNCE over a batch of paired image/text embeddings.
//!
//! With `L_ij = cos(x_i, t_j) / tau`, the per-pair loss is
//! `(lse_j L_ij - L_ii) + (lse_k L_ki - L_ii)` and the batch loss is its
//! mean over `i`. Log-sum-exps subtract the maximum first.

use super::{dot, normalize_rows, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    image: Matrix,
    text: Matrix,
    tau: f64,
}

impl ContrastiveBatch {
    pub fn new(image: Matrix, text: Matrix, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be positive and finite, got {tau}"
            )));
        }
        if image.rows() != text.rows() || image.cols() != text.cols() {
            return Err(Error::invalid(format!(
                "image embeddings are {}x{}, text embeddings {}x{}",
                image.rows(),
                image.cols(),
                text.rows(),
                text.cols()
            )));
        }
        if image.rows() == 0 {
            return Err(Error::invalid("contrastive batch is empty"));
        }
        Ok(ContrastiveBatch { image, text, tau })
    }

    pub fn image(&self) -> &Matrix {
        &self.image
    }

    pub fn text(&self) -> &Matrix {
        &self.text
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Forward pass shared by the loss and the gradient.
struct Forward {
    image_unit: Matrix,
    text_unit: Matrix,
    image_norms: Vec<f64>,
    text_norms: Vec<f64>,
    logits: Matrix,
    row_lse: Vec<f64>,
    col_lse: Vec<f64>,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn forward(batch: &ContrastiveBatch) -> Result<Forward> {
    let (image_unit, image_norms) = normalize_rows(&batch.image, "image embeddings")?;
    let (text_unit, text_norms) = normalize_rows(&batch.text, "text embeddings")?;
    let n = batch.image.rows();
    let mut logits = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            logits.data_mut()[i * n + j] = dot(image_unit.row(i), text_unit.row(j)) / batch.tau;
        }
    }
    let row_lse = (0..n).map(|i| log_sum_exp(logits.row(i).iter().copied())).collect();
    let col_lse = (0..n).map(|j| log_sum_exp((0..n).map(|i| logits.get(i, j)))).collect();
    Ok(Forward {
        image_unit,
        text_unit,
        image_norms,
        text_norms,
        logits,
        row_lse,
        col_lse,
    })
}

fn loss_from(f: &Forward) -> f64 {
    let n = f.logits.rows();
    let total: f64 = (0..n)
        .map(|i| (f.row_lse[i] - f.logits.get(i, i)) + (f.col_lse[i] - f.logits.get(i, i)))
        .sum();
    total / n as f64
}

pub fn infonce_loss(batch: &ContrastiveBatch) -> Result<f64> {
    Ok(loss_from(&forward(batch)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceGrad {
    pub loss: f64,
    /// d loss / d image embeddings, same shape as the input.
    pub image: Matrix,
    /// d loss / d text embeddings.
    pub text: Matrix,
}

/// Analytic gradient of [`infonce_loss`] with respect to the raw
/// (unnormalized) embeddings.
pub fn infonce_grad(batch: &ContrastiveBatch) -> Result<InfoNceGrad> {
    let f = forward(batch)?;
    let n = f.logits.rows();
    let d = batch.image.cols();

    // d loss / d cos_ij = (P_ij + Q_ij - 2[i==j]) / (n * tau), where P is the
    // row softmax and Q the column softmax of the logits.
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let l = f.logits.get(i, j);
            let p = (l - f.row_lse[i]).exp();
            let q = (l - f.col_lse[j]).exp();
            let delta = if i == j { 2.0 } else { 0.0 };
            g.data_mut()[i * n + j] = (p + q - delta) / (n as f64 * batch.tau);
        }
    }

    let mut image = Matrix::zeros(n, d);
    let mut text = Matrix::zeros(n, d);
    for i in 0..n {
        let mut gu = vec![0.0; d];
        let mut gv = vec![0.0; d];
        for j in 0..n {
            let (gij, gji) = (g.get(i, j), g.get(j, i));
            for k in 0..d {
                gu[k] += gij * f.text_unit.get(j, k);
                gv[k] += gji * f.image_unit.get(j, k);
            }
        }
        project_out(
            &mut image.data_mut()[i * d..(i + 1) * d],
            &gu,
            f.image_unit.row(i),
            f.image_norms[i],
        );
        project_out(
            &mut text.data_mut()[i * d..(i + 1) * d],
            &gv,
            f.text_unit.row(i),
            f.text_norms[i],
        );
    }
    Ok(InfoNceGrad {
        loss: loss_from(&f),
        image,
        text,
    })
}

/// Chain rule through `u = x / |x|`: `dx = (gu - (gu . u) u) / |x|`.
fn project_out(out: &mut [f64], gu: &[f64], unit: &[f64], norm: f64) {
    let radial = dot(gu, unit);
    for k in 0..out.len() {
        out[k] = (gu[k] - radial * unit[k]) / norm;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch(x: &[Vec<f64>], t: &[Vec<f64>], tau: f64) -> ContrastiveBatch {
        ContrastiveBatch::new(Matrix::from_rows(x).unwrap(), Matrix::from_rows(t).unwrap(), tau).unwrap()
    }

    #[test]
    fn orthonormal_pairs() {
        let e = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let loss = infonce_loss(&batch(&e, &e, 1.0)).unwrap();
        // each direction: -ln(e / (e + 1)) = ln(1 + e^-1)
        let expected = 2.0 * (1.0 + (-1.0f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
        assert!((loss - 0.626_523_3).abs() < 1e-6);
    }

    #[test]
    fn uniform_similarity() {
        let e = vec![vec![1.0, 2.0]; 2];
        let loss = infonce_loss(&batch(&e, &e, 0.3)).unwrap();
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_pair_zero_loss_and_grad() {
        let g = infonce_grad(&batch(&[vec![0.3, -1.0]], &[vec![2.0, 5.0]], 0.07)).unwrap();
        assert_eq!(g.loss, 0.0);
        assert!(g.image.data().iter().chain(g.text.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_batch_symmetric_grad() {
        let x = vec![vec![1.0, 0.2, -0.3], vec![0.1, 0.9, 0.4], vec![-0.5, 0.5, 1.0]];
        let g = infonce_grad(&batch(&x, &x, 0.5)).unwrap();
        for (a, b) in g.image.data().iter().zip(g.text.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_inputs() {
        let m = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(ContrastiveBatch::new(m.clone(), m.clone(), 0.0).is_err());
        assert!(ContrastiveBatch::new(m.clone(), m.clone(), f64::NAN).is_err());
        let nan = Matrix::from_rows(&[vec![f64::NAN]]).unwrap();
        let b = ContrastiveBatch::new(nan, m, 1.0).unwrap();
        assert!(infonce_loss(&b).is_err());
    }

    #[test]
    fn large_logits_stay_finite() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let t = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let loss = infonce_loss(&batch(&x, &t, 1e-4)).unwrap();
        assert!(loss.is_finite());
        assert!((loss - 2.0 * 1e4).abs() / 2e4 < 1e-9);
    }

    fn rows(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(0.1f64..2.0, d), n)
    }

    proptest! {
        #[test]
        fn nonnegative_and_scale_invariant(
            x in rows(4, 3), t in rows(4, 3), tau in 0.05f64..2.0, row in 0usize..4, s in 0.1f64..10.0,
        ) {
            let base = infonce_loss(&batch(&x, &t, tau)).unwrap();
            prop_assert!(base >= 0.0);
            let mut scaled = x.clone();
            scaled[row].iter_mut().for_each(|v| *v *= s);
            let after = infonce_loss(&batch(&scaled, &t, tau)).unwrap();
            prop_assert!((after - base).abs() < 1e-12 * base.max(1.0));
        }
    }
}
