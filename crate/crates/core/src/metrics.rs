//! Ranking metrics with outliers as the positive class.
//!
//! AUROC is the tie-corrected Mann-Whitney statistic: the probability that
//! a random outlier outscores a random inlier, counting ties as one half.
//! AUPR is the area under the precision-recall curve by a descending-score
//! sweep with step (average-precision) interpolation; equal scores are
//! processed as one atomic group. Linear PR interpolation is deliberately
//! not used.

use crate::error::{Error, Result};

/// Anomaly scores (higher = more anomalous) with ground-truth outlier flags.
#[derive(Debug, Clone)]
pub struct LabeledScores {
    pub anomaly_score: Vec<f64>,
    pub is_outlier: Vec<bool>,
}

impl LabeledScores {
    pub fn new(anomaly_score: Vec<f64>, is_outlier: Vec<bool>) -> Result<LabeledScores> {
        if anomaly_score.len() != is_outlier.len() {
            return Err(Error::Config(format!(
                "{} scores for {} labels",
                anomaly_score.len(),
                is_outlier.len()
            )));
        }
        if anomaly_score.iter().any(|s| !s.is_finite()) {
            return Err(Error::Data("scores must be finite".into()));
        }
        Ok(LabeledScores {
            anomaly_score,
            is_outlier,
        })
    }

    fn class_counts(&self) -> Result<(usize, usize)> {
        let positives = self.is_outlier.iter().filter(|o| **o).count();
        let negatives = self.is_outlier.len() - positives;
        if positives == 0 || negatives == 0 {
            return Err(Error::UndefinedMetric(format!(
                "ranking metrics need both classes; got {positives} outliers and {negatives} inliers"
            )));
        }
        Ok((positives, negatives))
    }
}

/// Area under the ROC curve via tie-corrected average ranks.
pub fn auroc(ls: &LabeledScores) -> Result<f64> {
    let (positives, negatives) = ls.class_counts()?;
    let n = ls.anomaly_score.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        ls.anomaly_score[a]
            .partial_cmp(&ls.anomaly_score[b])
            .expect("scores validated finite")
    });

    // Average 1-based ranks over tie groups, summed over positives.
    let mut rank_sum_positives = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && ls.anomaly_score[order[j]] == ls.anomaly_score[order[i]] {
            j += 1;
        }
        let average_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if ls.is_outlier[idx] {
                rank_sum_positives += average_rank;
            }
        }
        i = j;
    }

    let p = positives as f64;
    let u = rank_sum_positives - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// Area under the precision-recall curve (average precision).
pub fn aupr(ls: &LabeledScores) -> Result<f64> {
    let (positives, _) = ls.class_counts()?;
    let n = ls.anomaly_score.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        ls.anomaly_score[b]
            .partial_cmp(&ls.anomaly_score[a])
            .expect("scores validated finite")
    });

    let total_positives = positives as f64;
    let mut true_positives = 0.0;
    let mut false_positives = 0.0;
    let mut previous_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && ls.anomaly_score[order[j]] == ls.anomaly_score[order[i]] {
            j += 1;
        }
        for &idx in &order[i..j] {
            if ls.is_outlier[idx] {
                true_positives += 1.0;
            } else {
                false_positives += 1.0;
            }
        }
        let recall = true_positives / total_positives;
        let precision = true_positives / (true_positives + false_positives);
        area += (recall - previous_recall) * precision;
        previous_recall = recall;
        i = j;
    }
    Ok(area)
}
