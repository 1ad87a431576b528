//! Small descriptive statistics shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::data::OutcomeVector;
use crate::error::{Error, Result};

/// Kish effective sample size `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::ZeroWeights);
    }
    // Scale by the largest weight so the squares cannot overflow.
    let max = weights.iter().copied().fold(0.0, f64::max);
    let (s1, s2) = weights
        .iter()
        .map(|w| w / max)
        .fold((0.0, 0.0), |(a, b), w| (a + w, b + w * w));
    Ok(s1 * s1 / s2)
}

/// Weighted mean of the outcomes, `sum r_i w_i / sum w_i`.
pub fn weighted_outcome_mean(outcome: &OutcomeVector, weights: &[f64]) -> Result<f64> {
    if outcome.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: outcome.len(),
            found: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeights);
    }
    Ok(outcome
        .values()
        .iter()
        .zip(weights)
        .map(|(r, w)| r * w)
        .sum::<f64>()
        / total)
}

/// Ranks starting at 1, ties receiving their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// Spearman rank correlation; `None` when either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Mean of each row of a `p x n` matrix, i.e. the mean patient.
pub fn row_means(values: &DMatrix<f64>) -> DVector<f64> {
    let n = values.ncols() as f64;
    DVector::from_iterator(values.nrows(), values.row_iter().map(|r| r.sum() / n))
}

/// Sample covariance of the columns of a `p x n` matrix (denominator `n - 1`).
pub fn sample_covariance(values: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, n) = values.shape();
    let mean = row_means(values);
    let mut centered = values.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = &centered * centered.transpose() / (n as f64 - 1.0);
    // Symmetrize exactly.
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}
