//! Adversarial perturbation of transformed features and negative-Brier
//! anomaly scores.
//!
//! Perturbation is a single step against the trained classifier: each row
//! moves by `eta` along the negative input-gradient of the log-softmax of
//! its own predicted class. The predicted class comes from the unperturbed
//! row, argmax ties resolve to the lowest index, and the model always runs
//! in eval mode, so scoring one sample never depends on what shares its
//! batch.
//!
//! A sample's score is the mean over all projections `m` of
//! `-||softmax(perturbed row) - onehot(m)||^2`: 0 for a perfect classifier,
//! never below -2. Higher means more normal; rank by the negated score to
//! put outliers first.

use crate::classifier::{argmax, softmax_rows, Classifier};
use crate::error::{Error, Result};
use crate::projection::{transform_all, ProjectionSet, PseudoLabeledSet};
use crate::tensor::Matrix;

/// Scoring batch size; purely a memory/bandwidth knob, results are
/// identical for any value because the model runs in eval mode.
const SCORE_BATCH_ROWS: usize = 512;

/// Per-sample anomaly scores, each in `[-2, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    /// Optional per-(projection, sample) terms in the same m-major order as
    /// the pseudo-labeled set; populated by [`brier_scores`], omitted by the
    /// streaming [`score_pipeline`].
    pub per_transform: Option<Vec<f64>>,
}

/// Moves each row one step against its predicted-class log-softmax.
///
/// `eta == 0` returns the input unchanged, bit for bit. Rows with zero
/// gradient pass through unchanged.
pub fn perturb(model: &Classifier, batch: &Matrix, eta: f64) -> Result<Matrix> {
    if eta < 0.0 || !eta.is_finite() {
        return Err(Error::Config(format!(
            "perturbation magnitude must be finite and >= 0, got {eta}"
        )));
    }
    if eta == 0.0 {
        return Ok(batch.clone());
    }
    let (logits, cache) = model.forward_eval(batch)?;
    let probs = softmax_rows(&logits);

    // d(log softmax_yhat)/d(logit_j) = onehot(yhat)_j - softmax_j.
    let mut dlogits = probs;
    for r in 0..dlogits.rows() {
        let row = dlogits.row_mut(r);
        let predicted = argmax(row);
        for v in row.iter_mut() {
            *v = -*v;
        }
        row[predicted] += 1.0;
    }
    let gradient = model.input_gradient(&cache, &dlogits)?;

    let mut out = batch.clone();
    for (o, g) in out.data_mut().iter_mut().zip(gradient.data()) {
        *o -= eta * g;
    }
    Ok(out)
}

/// Norms of the per-row input gradients of the predicted-class log-softmax.
///
/// The median of these is the basis of the automatic perturbation
/// magnitude (`eta = 1 / median`).
pub fn input_gradient_norms(model: &Classifier, features: &Matrix) -> Result<Vec<f64>> {
    let mut norms = Vec::with_capacity(features.rows());
    let mut start = 0;
    while start < features.rows() {
        let end = (start + SCORE_BATCH_ROWS).min(features.rows());
        let idx: Vec<usize> = (start..end).collect();
        let batch = features.gather_rows(&idx);
        let (logits, cache) = model.forward_eval(&batch)?;
        let probs = softmax_rows(&logits);
        let mut dlogits = probs;
        for r in 0..dlogits.rows() {
            let row = dlogits.row_mut(r);
            let predicted = argmax(row);
            for v in row.iter_mut() {
                *v = -*v;
            }
            row[predicted] += 1.0;
        }
        let gradient = model.input_gradient(&cache, &dlogits)?;
        for r in 0..gradient.rows() {
            norms.push(gradient.row(r).iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        start = end;
    }
    Ok(norms)
}

/// Negative Brier score per original sample over an already-transformed
/// (and typically perturbed) set.
pub fn brier_scores(model: &Classifier, set: &PseudoLabeledSet) -> Result<ScoreVector> {
    let mut sums = vec![0.0; set.n_samples];
    let mut per_transform = vec![0.0; set.features.rows()];
    accumulate_brier(
        model,
        &set.features,
        &set.labels,
        &set.source_index,
        &mut sums,
        |row, term| {
            per_transform[row] = term;
        },
    )?;
    let scores = finalize_scores(sums, set.m_count);
    Ok(ScoreVector {
        scores,
        per_transform: Some(per_transform),
    })
}

/// Full scoring pass: transform, perturb, score, streamed in batches.
///
/// With `eta == 0` this is exactly the unperturbed scoring path.
pub fn score_pipeline(
    model: &Classifier,
    pset: &ProjectionSet,
    normalized: &Matrix,
    eta: f64,
) -> Result<ScoreVector> {
    let set = transform_all(normalized, pset)?;
    score_transformed(model, &set, eta)
}

/// Scoring over a pre-materialized transformed set (the training set is
/// usually still in memory, so the pipeline reuses it).
pub fn score_transformed(
    model: &Classifier,
    set: &PseudoLabeledSet,
    eta: f64,
) -> Result<ScoreVector> {
    let mut sums = vec![0.0; set.n_samples];
    let rows = set.features.rows();
    let mut start = 0;
    while start < rows {
        let end = (start + SCORE_BATCH_ROWS).min(rows);
        let idx: Vec<usize> = (start..end).collect();
        let batch = set.features.gather_rows(&idx);
        let perturbed = perturb(model, &batch, eta)?;
        accumulate_brier(
            model,
            &perturbed,
            &set.labels[start..end],
            &set.source_index[start..end],
            &mut sums,
            |_, _| {},
        )?;
        start = end;
    }
    Ok(ScoreVector {
        scores: finalize_scores(sums, set.m_count),
        per_transform: None,
    })
}

fn accumulate_brier<F: FnMut(usize, f64)>(
    model: &Classifier,
    features: &Matrix,
    labels: &[usize],
    source_index: &[usize],
    sums: &mut [f64],
    mut record: F,
) -> Result<()> {
    let rows = features.rows();
    if labels.len() != rows || source_index.len() != rows {
        return Err(Error::Config(
            "labels/source_index length does not match the feature rows".into(),
        ));
    }
    let mut start = 0;
    while start < rows {
        let end = (start + SCORE_BATCH_ROWS).min(rows);
        let idx: Vec<usize> = (start..end).collect();
        let batch = features.gather_rows(&idx);
        let (logits, _) = model.forward_eval(&batch)?;
        let probs = softmax_rows(&logits);
        for r in 0..probs.rows() {
            let label = labels[start + r];
            let mut sq = 0.0;
            for (j, p) in probs.row(r).iter().enumerate() {
                let target = if j == label { 1.0 } else { 0.0 };
                let d = p - target;
                sq += d * d;
            }
            let source = source_index[start + r];
            if source >= sums.len() {
                return Err(Error::Config(format!(
                    "source index {source} out of range for {} samples",
                    sums.len()
                )));
            }
            sums[source] -= sq;
            record(start + r, -sq);
        }
        start = end;
    }
    Ok(())
}

fn finalize_scores(sums: Vec<f64>, m_count: usize) -> Vec<f64> {
    sums.into_iter().map(|s| s / m_count as f64).collect()
}
