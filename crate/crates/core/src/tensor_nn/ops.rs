use crate::error::{Error, Result};

/// Squared Euclidean distance.
pub fn sq_euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Log-probabilities of `softmax(neg_dists)` using max subtraction.
pub fn log_softmax_from_neg_dists(neg_dists: &[f64]) -> Vec<f64> {
    let max = neg_dists.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![f64::NAN; neg_dists.len()];
    }
    let lse = max + neg_dists.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    neg_dists.iter().map(|v| v - lse).collect()
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
