//! Decoding of categorical distributions: greedy and nucleus (top-p).

use rand::Rng;

use crate::{Error, Result};

/// Numerically stable softmax of one row of logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// The smallest probability-sorted prefix whose mass reaches `p`,
/// renormalized. Sorting is by descending probability, ties by index.
pub fn nucleus(probs: &[f64], p: f64) -> Result<Vec<(usize, f64)>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Contract(format!("top-p mass {p} not in (0, 1]")));
    }
    if probs.is_empty() {
        return Err(Error::Contract("empty distribution".into()));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for i in order {
        kept.push(i);
        mass += probs[i];
        if mass >= p {
            break;
        }
    }
    Ok(kept.into_iter().map(|i| (i, probs[i] / mass)).collect())
}

/// Draws one index from a (normalized) weighted list.
pub fn sample_from<R: Rng + ?Sized>(weighted: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(i, w) in weighted {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weighted.last().expect("non-empty").0
}

/// Nucleus sampling from a row of logits.
pub fn sample_top_p<R: Rng + ?Sized>(logits: &[f64], p: f64, rng: &mut R) -> Result<usize> {
    Ok(sample_from(&nucleus(&softmax(logits), p)?, rng))
}
