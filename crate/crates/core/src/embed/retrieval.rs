use std::collections::BTreeMap;

use super::{cosine_similarity, Matrix};
use crate::error::{Error, Result};

/// 1-based rank of the correct target (the diagonal) in each row of a
/// square similarity matrix. Equal scores rank the lower index first.
pub fn correct_ranks(sim: &Matrix) -> Result<Vec<usize>> {
    if sim.rows() != sim.cols() {
        return Err(Error::invalid(format!(
            "similarity matrix is {}x{}; queries and targets must pair up",
            sim.rows(),
            sim.cols()
        )));
    }
    Ok((0..sim.rows())
        .map(|i| {
            let own = sim.get(i, i);
            let ahead = sim
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, &s)| s > own || (s == own && j < i))
                .count();
            ahead + 1
        })
        .collect())
}

fn recall_from_ranks(ranks: &[usize], k: usize) -> Result<f64> {
    let n = ranks.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must be in 1..={n}")));
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / n as f64)
}

pub fn recall_at_k_from_similarity(sim: &Matrix, k: usize) -> Result<f64> {
    recall_from_ranks(&correct_ranks(sim)?, k)
}

/// Fraction of queries whose paired target (same row index) is among the
/// `k` most cosine-similar targets.
pub fn recall_at_k(query: &Matrix, target: &Matrix, k: usize) -> Result<f64> {
    check_paired(query, target)?;
    recall_at_k_from_similarity(&cosine_similarity(query, target)?, k)
}

/// Recall at several cutoffs from one similarity computation.
pub fn recall_at_ks(query: &Matrix, target: &Matrix, ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    check_paired(query, target)?;
    let ranks = correct_ranks(&cosine_similarity(query, target)?)?;
    ks.iter().map(|&k| Ok((k, recall_from_ranks(&ranks, k)?))).collect()
}

fn check_paired(query: &Matrix, target: &Matrix) -> Result<()> {
    if query.rows() != target.rows() {
        return Err(Error::invalid(format!(
            "{} queries but {} targets",
            query.rows(),
            target.rows()
        )));
    }
    if query.rows() == 0 {
        return Err(Error::invalid("no queries"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_recall_one() {
        let e = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(recall_at_k(&e, &e, 1).unwrap(), 1.0);
    }

    #[test]
    fn worked_three_by_three() {
        let s = Matrix::from_rows(&[vec![0.1, 0.9, 0.2], vec![0.8, 0.3, 0.1], vec![0.2, 0.1, 0.7]]).unwrap();
        assert_eq!(correct_ranks(&s).unwrap(), vec![3, 2, 1]);
        assert_eq!(recall_at_k_from_similarity(&s, 1).unwrap(), 1.0 / 3.0);
        assert_eq!(recall_at_k_from_similarity(&s, 2).unwrap(), 2.0 / 3.0);
        assert_eq!(recall_at_k_from_similarity(&s, 3).unwrap(), 1.0);
    }

    #[test]
    fn ties_favour_lower_index() {
        let s = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(correct_ranks(&s).unwrap(), vec![1, 2]);
    }

    #[test]
    fn k_out_of_range() {
        let e = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(recall_at_k(&e, &e, 3).is_err());
        assert!(recall_at_k(&e, &e, 0).is_err());
    }
}
