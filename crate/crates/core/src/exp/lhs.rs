//! Latin-hypercube design of experiments.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Draws `n` points in the unit hypercube `[0, 1)^dims` so that every axis
/// is stratified: each of the `n` equal-width bins of every dimension
/// contains exactly one sample. Strata are paired across dimensions by
/// independent random permutations.
pub fn latin_hypercube<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    dims: usize,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 || dims == 0 {
        return Err(Error::Parameter(format!(
            "latin hypercube needs positive sample count and dimension, got {n} x {dims}"
        )));
    }
    let mut points = vec![vec![0.0; dims]; n];
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, &s) in strata.iter().enumerate() {
            let jitter: f64 = rng.random();
            points[i][d] = (s as f64 + jitter) / n as f64;
        }
    }
    Ok(points)
}

/// Affine map from the unit interval onto `[lo, hi]`.
pub fn scale_to_range(x: f64, [lo, hi]: [f64; 2]) -> f64 {
    lo + x * (hi - lo)
}
