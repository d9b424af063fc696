//! Greedy max-min selection of mutually distant stylings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::page::ColorStyle;
use crate::{Error, Result};

fn rgba(c: crate::page::RgbaColor) -> [f64; 4] {
    c.channels().map(f64::from)
}

/// Mean over elements of the Euclidean distance between their RGBA vectors
/// (text color when both stylings have one, plus background).
pub fn styling_distance(a: &[ColorStyle], b: &[ColorStyle]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Contract(format!(
            "stylings of {} and {} elements cannot be compared",
            a.len(),
            b.len()
        )));
    }
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let mut sq: f64 = rgba(x.background)
                .iter()
                .zip(rgba(y.background))
                .map(|(p, q)| (p - q).powi(2))
                .sum();
            if let (Some(tx), Some(ty)) = (x.text, y.text) {
                sq += rgba(tx).iter().zip(rgba(ty)).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
            }
            sq.sqrt()
        })
        .sum();
    Ok(total / a.len() as f64)
}

/// Greedy selection over a symmetric distance matrix starting from `start`:
/// each next pick maximizes its minimum distance to the picks so far (ties
/// go to the smallest index).
pub fn select_from_distances(dist: &[Vec<f64>], m: usize, start: usize) -> Result<Vec<usize>> {
    let k = dist.len();
    if m == 0 || m > k {
        return Err(Error::Contract(format!("cannot select {m} of {k} candidates")));
    }
    if start >= k {
        return Err(Error::Contract(format!("start {start} out of {k} candidates")));
    }
    let mut picked = vec![start];
    let mut nearest: Vec<f64> = dist[start].clone();
    while picked.len() < m {
        let mut best: Option<usize> = None;
        for i in 0..k {
            if picked.contains(&i) {
                continue;
            }
            if best.is_none_or(|b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("m ≤ k");
        picked.push(b);
        for i in 0..k {
            nearest[i] = nearest[i].min(dist[b][i]);
        }
    }
    Ok(picked)
}

/// Picks `m` of the candidate stylings, starting from a seeded random one.
/// Returns candidate indices in selection order.
pub fn diverse_select(variations: &[Vec<ColorStyle>], m: usize, seed: u64) -> Result<Vec<usize>> {
    let k = variations.len();
    if m == 0 || m > k {
        return Err(Error::Contract(format!("cannot select {m} of {k} variations")));
    }
    let mut dist = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let d = styling_distance(&variations[i], &variations[j])?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..k);
    select_from_distances(&dist, m, start)
}
