//! Row normalization, random projection sets and the pseudo-labeled dataset.
//!
//! Each of the `M` projection matrices defines one pseudo-class: applying
//! matrix `m` to every normalized feature row yields the rows labeled `m`.
//! Labels are 0-based. The transformed set is materialized once in a frozen
//! order (all rows for matrix 0, then matrix 1, ...), so mini-batch
//! shuffling during training is the only source of order randomness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{derive_stream, sample_standard_normal, Matrix, Rng};

/// A reproducible set of `m_count` Gaussian projection matrices, each
/// `proj_dim x input_dim`.
///
/// Matrix `m` is drawn from the child seed `derive_stream(seed, m)`, so
/// rebuilding with a larger `m_count` leaves earlier matrices untouched.
#[derive(Debug, Clone)]
pub struct ProjectionSet {
    pub seed: u64,
    pub m_count: usize,
    pub proj_dim: usize,
    pub input_dim: usize,
    pub matrices: Vec<Matrix>,
}

/// The self-labeled training set: every (sample, projection) pair becomes
/// one row.
///
/// Row `m * n_samples + i` holds projection `m` applied to sample `i`;
/// `labels` stores `m` and `source_index` stores `i` for that row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabeledSet {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub source_index: Vec<usize>,
    pub m_count: usize,
    pub n_samples: usize,
}

/// Scales every row to unit L2 norm.
///
/// A row of zeros has no direction to keep, so it is rejected as a data
/// error naming the offending row.
pub fn normalize_rows(features: &Matrix) -> Result<Matrix> {
    let mut out = features.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::Data(format!("row {r} contains non-finite values")));
        }
        if norm == 0.0 {
            return Err(Error::Data(format!(
                "row {r} has zero norm and cannot be normalized onto the unit sphere"
            )));
        }
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    Ok(out)
}

/// Draws `m_count` standard-normal matrices of shape `proj_dim x input_dim`.
pub fn build_projection_set(
    seed: u64,
    m_count: usize,
    proj_dim: usize,
    input_dim: usize,
) -> Result<ProjectionSet> {
    if m_count == 0 || proj_dim == 0 || input_dim == 0 {
        return Err(Error::Config(
            "projection set needs m_count, proj_dim and input_dim all >= 1".into(),
        ));
    }
    let matrices = (0..m_count)
        .map(|m| {
            let mut rng = Rng::new(derive_stream(seed, m as u64));
            sample_standard_normal(&mut rng, proj_dim, input_dim)
        })
        .collect();
    Ok(ProjectionSet {
        seed,
        m_count,
        proj_dim,
        input_dim,
        matrices,
    })
}

/// Applies every projection matrix to every normalized row, producing the
/// balanced pseudo-labeled set.
pub fn transform_all(normalized: &Matrix, pset: &ProjectionSet) -> Result<PseudoLabeledSet> {
    if normalized.cols() != pset.input_dim {
        return Err(Error::Config(format!(
            "features have {} columns but the projection set expects {}",
            normalized.cols(),
            pset.input_dim
        )));
    }
    let n = normalized.rows();
    let mut features = Matrix::zeros(pset.m_count * n, pset.proj_dim);
    let mut labels = Vec::with_capacity(pset.m_count * n);
    let mut source_index = Vec::with_capacity(pset.m_count * n);
    for (m, proj) in pset.matrices.iter().enumerate() {
        // v^(m) = A^(m) v, i.e. one matmul of the whole batch against A^T.
        let block = normalized.matmul(&proj.transpose())?;
        let dst = m * n;
        for i in 0..n {
            features.row_mut(dst + i).copy_from_slice(block.row(i));
            labels.push(m);
            source_index.push(i);
        }
    }
    Ok(PseudoLabeledSet {
        features,
        labels,
        source_index,
        m_count: pset.m_count,
        n_samples: n,
    })
}
