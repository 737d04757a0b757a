//! Wilcoxon signed-rank test for paired samples.
//!
//! Zero differences are dropped; tied magnitudes share their mid-rank.
//! Ranks are handled doubled so mid-ranks stay integral. For up to
//! [`EXACT_MAX_N`] nonzero differences the two-sided p-value is the exact
//! share of the `2^n` sign assignments whose `min(W+, W-)` is at most the
//! observed one; above that a normal approximation with tie and
//! continuity corrections is used.

use statrs::function::erf::erfc;

use super::StatTestResult;
use crate::error::{Error, Result};

pub const EXACT_MAX_N: usize = 25;

/// Nonzero differences with their doubled mid-ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedRanks {
    /// Doubled rank of each nonzero difference, in input order.
    pub doubled_ranks: Vec<u64>,
    pub positive: Vec<bool>,
    /// Sizes of groups of tied magnitudes (groups of one included).
    pub tie_groups: Vec<u64>,
}

impl SignedRanks {
    pub fn n(&self) -> usize {
        self.doubled_ranks.len()
    }

    /// Doubled `(W+, W-)`.
    pub fn doubled_sums(&self) -> (u64, u64) {
        let mut plus = 0;
        let mut minus = 0;
        for (&r, &pos) in self.doubled_ranks.iter().zip(&self.positive) {
            if pos {
                plus += r;
            } else {
                minus += r;
            }
        }
        (plus, minus)
    }
}

pub fn signed_ranks(a: &[f64], b: &[f64]) -> Result<SignedRanks> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "paired lists differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut diffs = Vec::with_capacity(a.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let d = x - y;
        if !d.is_finite() {
            return Err(Error::invalid(format!("pair {i} has a non-finite difference")));
        }
        if d != 0.0 {
            diffs.push(d);
        }
    }
    let n = diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut doubled_ranks = vec![0u64; n];
    let mut tie_groups = Vec::new();
    let mut start = 0;
    while start < n {
        let mag = diffs[order[start]].abs();
        let mut end = start;
        while end + 1 < n && diffs[order[end + 1]].abs() == mag {
            end += 1;
        }
        // positions start..=end hold ranks start+1..=end+1; doubled mean:
        let doubled = (start + end + 2) as u64;
        for &idx in &order[start..=end] {
            doubled_ranks[idx] = doubled;
        }
        tie_groups.push((end - start + 1) as u64);
        start = end + 1;
    }
    Ok(SignedRanks {
        doubled_ranks,
        positive: diffs.iter().map(|&d| d > 0.0).collect(),
        tie_groups,
    })
}

/// Number of sign assignments per doubled `W+` value.
fn exact_null_counts(doubled_ranks: &[u64]) -> Vec<u64> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<StatTestResult> {
    let ranks = signed_ranks(a, b)?;
    let n = ranks.n();
    if n == 0 {
        return Err(Error::invalid("all paired differences are zero"));
    }
    let (plus, minus) = ranks.doubled_sums();
    let w2 = plus.min(minus);
    let statistic = w2 as f64 / 2.0;

    if n <= EXACT_MAX_N {
        let counts = exact_null_counts(&ranks.doubled_ranks);
        let total = plus + minus;
        let extreme: u64 = counts
            .iter()
            .enumerate()
            .filter(|&(s, _)| (s as u64).min(total - s as u64) <= w2)
            .map(|(_, &c)| c)
            .sum();
        let p_value = (extreme as f64 / 2f64.powi(n as i32)).min(1.0);
        return Ok(StatTestResult {
            statistic,
            p_value,
            method: "wilcoxon_signed_rank_exact".to_string(),
            n_effective: n as u64,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ranks.tie_groups.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = ((statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let p_value = erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(StatTestResult {
        statistic,
        p_value,
        method: "wilcoxon_signed_rank_normal".to_string(),
        n_effective: n as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_positive_differences() {
        let r = wilcoxon_signed_rank(&[2.0, 3.0, 4.0, 5.0, 6.0], &[1.0; 5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 0.0625);
        assert_eq!(r.n_effective, 5);
    }

    #[test]
    fn identical_lists_error() {
        assert!(wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zeros_dropped_and_ties_midranked() {
        let r = signed_ranks(&[1.0, 2.0, 3.0, 5.0], &[1.0, 1.0, 4.0, 3.0]).unwrap();
        // diffs 1, -1, 2 -> |1| tied at ranks 1,2 -> 1.5 each
        assert_eq!(r.doubled_ranks, vec![3, 3, 6]);
        assert_eq!(r.positive, vec![true, false, true]);
        assert_eq!(r.tie_groups, vec![2, 1]);
    }

    #[test]
    fn null_counts_sum_to_power_of_two() {
        let counts = exact_null_counts(&[2, 4, 6, 8]);
        assert_eq!(counts.iter().sum::<u64>(), 16);
        // symmetric about the midpoint
        let total = counts.len() - 1;
        for s in 0..=total {
            assert_eq!(counts[s], counts[total - s]);
        }
    }

    #[test]
    fn large_sample_uses_normal_approximation() {
        let a: Vec<f64> = (0..40)
            .map(|i| i as f64 * 0.1 + if i % 3 == 0 { -5.0 } else { 1.0 })
            .collect();
        let b: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.method, "wilcoxon_signed_rank_normal");
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn normal_matches_reference_value() {
        // 30 positive differences 1..=30: W = 0, mean 232.5,
        // var = 30*31*61/24 = 2363.75, z = 232/sqrt(2363.75)
        let a: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let r = wilcoxon_signed_rank(&a, &vec![0.0; 30]).unwrap();
        let z = 232.0 / 2363.75f64.sqrt();
        let expected = erfc(z / std::f64::consts::SQRT_2);
        assert!((r.p_value - expected).abs() < 1e-15);
        assert!(r.p_value < 1e-5);
    }
}
