//! Vector distances between document embeddings.
//!
//! Each function assumes equal lengths; [`distance_features`] checks that.

use crate::error::{Error, Result};

pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub fn cityblock(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

pub fn minkowski(x: &[f64], y: &[f64], p: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// Coordinates where both values are zero contribute nothing.
pub fn canberra(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .filter_map(|(a, b)| {
            let den = a.abs() + b.abs();
            (den > 0.0).then(|| (a - b).abs() / den)
        })
        .sum()
}

/// Share of the coordinates that are nonzero in either vector where the two
/// vectors disagree. Zero when both vectors are all zeros.
pub fn jaccard(x: &[f64], y: &[f64]) -> f64 {
    let (mut nonzero, mut differ) = (0usize, 0usize);
    for (a, b) in x.iter().zip(y) {
        if *a != 0.0 || *b != 0.0 {
            nonzero += 1;
            if a != b {
                differ += 1;
            }
        }
    }
    if nonzero == 0 {
        0.0
    } else {
        differ as f64 / nonzero as f64
    }
}

/// `1 - cos(x, y)`, clipped to `[0, 2]`. Zero for identical vectors, one when
/// exactly one side is the zero vector.
pub fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|b| b * b).sum::<f64>().sqrt();
    match (nx == 0.0, ny == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ if x == y => 0.0,
        _ => {
            let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            (1.0 - dot / (nx * ny)).clamp(0.0, 2.0)
        }
    }
}

/// `sum|x - y| / sum|x + y|`, zero when the denominator vanishes.
pub fn braycurtis(x: &[f64], y: &[f64]) -> f64 {
    let den: f64 = x.iter().zip(y).map(|(a, b)| (a + b).abs()).sum();
    if den == 0.0 {
        0.0
    } else {
        cityblock(x, y) / den
    }
}

/// Euclidean, Canberra, Jaccard, city-block, cosine, Minkowski (p = 3) and
/// Bray-Curtis, in that order. Two zero vectors give all zeros.
pub fn distance_features(x: &[f64], y: &[f64]) -> Result<[f64; 7]> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let zero = |v: &[f64]| v.iter().all(|a| *a == 0.0);
    if zero(x) && zero(y) {
        return Ok([0.0; 7]);
    }
    Ok([
        euclidean(x, y),
        canberra(x, y),
        jaccard(x, y),
        cityblock(x, y),
        cosine(x, y),
        minkowski(x, y, 3.0),
        braycurtis(x, y),
    ])
}
