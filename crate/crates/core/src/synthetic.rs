//! Self-contained synthetic benchmark: one broad inlier cloud against a
//! handful of scattered outlier clusters.
//!
//! Inliers are a unit-covariance Gaussian cluster around a random center of
//! norm `sqrt(dim)`. Outliers split round-robin across `OUTLIER_CLUSTERS`
//! centers at the same radius whose directions are pulled partway toward
//! the inlier direction, so after row normalization the outlier clusters
//! sit on the inlier cloud's shoulder with overlapping tails: separable,
//! but not free. Rows are shuffled deterministically. The constants below
//! are frozen; the acceptance suite's expectations were measured against
//! them. The benchmark gives every suite (tests, CLI, demo) labeled data
//! with no files involved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{derive_stream, Matrix, Rng};

pub const OUTLIER_CLUSTERS: usize = 5;
const CENTER_SCALE: f64 = 1.0;
const OUTLIER_SPREAD: f64 = 1.0;
/// Outlier cluster directions are `normalize(u0 + PULL * w_j)`: smaller
/// values park them closer to the inlier direction.
const OUTLIER_CENTER_PULL: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_inliers: usize,
    pub anomaly_ratio: f64,
    pub dim: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_inliers: 500,
            anomaly_ratio: 0.1,
            dim: 64,
        }
    }
}

/// Generates the benchmark for one seed: features (not yet normalized) and
/// ground-truth outlier flags.
pub fn clustered_benchmark(spec: &SyntheticSpec, seed: u64) -> Result<(Matrix, Vec<bool>)> {
    if spec.n_inliers < 2 || spec.dim < 2 {
        return Err(Error::Config(
            "synthetic benchmark needs n_inliers >= 2 and dim >= 2".into(),
        ));
    }
    if !(spec.anomaly_ratio > 0.0 && spec.anomaly_ratio <= 1.0) {
        return Err(Error::Config(format!(
            "anomaly ratio must be in (0, 1], got {}",
            spec.anomaly_ratio
        )));
    }
    let n_outliers = (spec.anomaly_ratio * spec.n_inliers as f64).round() as usize;
    let total = spec.n_inliers + n_outliers;

    let mut center_rng = Rng::new(derive_stream(seed, 0));
    let radius = CENTER_SCALE * (spec.dim as f64).sqrt();
    let unit = |rng: &mut Rng, dim: usize| {
        let mut v = vec![0.0; dim];
        rng.fill_normal(&mut v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        v
    };
    let inlier_dir = unit(&mut center_rng, spec.dim);
    let mut centers = Vec::with_capacity(1 + OUTLIER_CLUSTERS);
    centers.push(inlier_dir.iter().map(|v| v * radius).collect::<Vec<f64>>());
    for _ in 0..OUTLIER_CLUSTERS {
        let w = unit(&mut center_rng, spec.dim);
        let mut c: Vec<f64> = inlier_dir
            .iter()
            .zip(&w)
            .map(|(u, w)| u + OUTLIER_CENTER_PULL * w)
            .collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in c.iter_mut() {
            *v *= radius / norm;
        }
        centers.push(c);
    }

    let mut point_rng = Rng::new(derive_stream(seed, 1));
    let mut features = Matrix::zeros(total, spec.dim);
    let mut flags = vec![false; total];
    for i in 0..spec.n_inliers {
        let row = features.row_mut(i);
        for (v, c) in row.iter_mut().zip(&centers[0]) {
            *v = c + point_rng.next_normal();
        }
    }
    for i in 0..n_outliers {
        let cluster = 1 + (i % OUTLIER_CLUSTERS);
        let row = features.row_mut(spec.n_inliers + i);
        for (v, c) in row.iter_mut().zip(&centers[cluster]) {
            *v = c + OUTLIER_SPREAD * point_rng.next_normal();
        }
        flags[spec.n_inliers + i] = true;
    }

    let mut order: Vec<usize> = (0..total).collect();
    let mut shuffle_rng = Rng::new(derive_stream(seed, 2));
    shuffle_rng.shuffle(&mut order);
    let shuffled = features.gather_rows(&order);
    let shuffled_flags: Vec<bool> = order.iter().map(|&i| flags[i]).collect();
    Ok((shuffled, shuffled_flags))
}
