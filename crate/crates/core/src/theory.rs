//! Monte-Carlo verification of the similarity-preserving concentration
//! bounds for Gaussian random projections.
//!
//! For unit vectors `v_i`, `v_j` and a `k x d` matrix `A` of i.i.d. standard
//! normals, with probability at least `1 - delta`:
//!
//! - distance variant, for `k > 4 ln(2/delta) / (eps^2 - eps^3)`:
//!   `(1-eps) ||v_i - v_j||^2 <= ||A v_i - A v_j||^2 / k <= (1+eps) ||v_i - v_j||^2`
//! - inner-product variant, for `k > 4 ln(4/delta) / (eps^2 - eps^3)`:
//!   `v_i . v_j - eps <= (A v_i).(A v_j) / k <= v_i . v_j + eps`
//!
//! Nothing here proves the bounds; the module samples fresh projection
//! matrices through the same generator the pipeline uses and measures how
//! often the bounds fail. A correct sampler must stay at or below `delta`
//! (plus Monte-Carlo slack).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Distance,
    InnerProduct,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Distance => write!(f, "distance"),
            Variant::InnerProduct => write!(f, "inner_product"),
        }
    }
}

/// A requested confidence level: distortion `epsilon` held with probability
/// `1 - delta`, both in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSpec {
    pub epsilon: f64,
    pub delta: f64,
    pub variant: Variant,
}

impl BoundSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!(
                "epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!(
                "delta must be in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Outcome of a Monte-Carlo run for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub variant: Variant,
    pub k_used: usize,
    pub trials: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub epsilon: f64,
    /// Empirical mean of the scaled statistic (`||A delta||^2 / k` or
    /// `(A v_i).(A v_j) / k`).
    pub mean_statistic: f64,
    /// The exact value the statistic concentrates around
    /// (`||v_i - v_j||^2` or `v_i . v_j`).
    pub reference_value: f64,
}

/// Smallest integer `k` strictly above the variant's threshold
/// (natural logarithm, as in the exponential-moment derivation).
pub fn min_k(spec: &BoundSpec) -> Result<usize> {
    spec.validate()?;
    let numerator_arg = match spec.variant {
        Variant::Distance => 2.0 / spec.delta,
        Variant::InnerProduct => 4.0 / spec.delta,
    };
    let denominator = spec.epsilon * spec.epsilon - spec.epsilon.powi(3);
    let bound = 4.0 * numerator_arg.ln() / denominator;
    Ok(bound.floor() as usize + 1)
}

fn check_unit(name: &str, v: &[f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "{name} must be unit-norm within 1e-9 (got norm {norm})"
        )));
    }
    Ok(())
}

/// Samples `trials` fresh projection matrices and counts violations of the
/// two-sided squared-distance bound.
pub fn run_distance_trials(
    v_i: &[f64],
    v_j: &[f64],
    k: usize,
    epsilon: f64,
    trials: usize,
    rng: &mut Rng,
) -> Result<TrialReport> {
    validate_trial_args(v_i, v_j, k, epsilon, trials)?;
    let delta_vec: Vec<f64> = v_i.iter().zip(v_j).map(|(a, b)| a - b).collect();
    let gap_sq: f64 = delta_vec.iter().map(|x| x * x).sum();
    if gap_sq == 0.0 {
        return Err(Error::Config(
            "v_i and v_j coincide; the distance bound is vacuous at 0".into(),
        ));
    }
    let lower = (1.0 - epsilon) * gap_sq;
    let upper = (1.0 + epsilon) * gap_sq;

    let d = v_i.len();
    let mut projection = Matrix::zeros(k, d);
    let mut violations = 0usize;
    let mut statistic_sum = 0.0;
    for _ in 0..trials {
        rng.fill_normal(projection.data_mut());
        let mut total = 0.0;
        for r in 0..k {
            let dot: f64 = projection
                .row(r)
                .iter()
                .zip(&delta_vec)
                .map(|(a, b)| a * b)
                .sum();
            total += dot * dot;
        }
        let w = total / k as f64;
        statistic_sum += w;
        if w < lower || w > upper {
            violations += 1;
        }
    }
    Ok(TrialReport {
        variant: Variant::Distance,
        k_used: k,
        trials,
        violations,
        violation_rate: violations as f64 / trials as f64,
        epsilon,
        mean_statistic: statistic_sum / trials as f64,
        reference_value: gap_sq,
    })
}

/// Samples `trials` fresh projection matrices and counts violations of the
/// additive inner-product bound.
pub fn run_inner_product_trials(
    v_i: &[f64],
    v_j: &[f64],
    k: usize,
    epsilon: f64,
    trials: usize,
    rng: &mut Rng,
) -> Result<TrialReport> {
    validate_trial_args(v_i, v_j, k, epsilon, trials)?;
    let reference: f64 = v_i.iter().zip(v_j).map(|(a, b)| a * b).sum();

    let d = v_i.len();
    let mut projection = Matrix::zeros(k, d);
    let mut violations = 0usize;
    let mut statistic_sum = 0.0;
    for _ in 0..trials {
        rng.fill_normal(projection.data_mut());
        let mut total = 0.0;
        for r in 0..k {
            let row = projection.row(r);
            let pi: f64 = row.iter().zip(v_i).map(|(a, b)| a * b).sum();
            let pj: f64 = row.iter().zip(v_j).map(|(a, b)| a * b).sum();
            total += pi * pj;
        }
        let w = total / k as f64;
        statistic_sum += w;
        if (w - reference).abs() > epsilon {
            violations += 1;
        }
    }
    Ok(TrialReport {
        variant: Variant::InnerProduct,
        k_used: k,
        trials,
        violations,
        violation_rate: violations as f64 / trials as f64,
        epsilon,
        mean_statistic: statistic_sum / trials as f64,
        reference_value: reference,
    })
}

fn validate_trial_args(
    v_i: &[f64],
    v_j: &[f64],
    k: usize,
    epsilon: f64,
    trials: usize,
) -> Result<()> {
    if v_i.len() != v_j.len() || v_i.is_empty() {
        return Err(Error::Config(
            "v_i and v_j must be non-empty vectors of equal dimension".into(),
        ));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!(
            "epsilon must be in (0, 1), got {epsilon}"
        )));
    }
    check_unit("v_i", v_i)?;
    check_unit("v_j", v_j)?;
    Ok(())
}

/// A random pair of unit vectors of dimension `d`.
pub fn random_unit_pair(d: usize, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    if d == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    let draw = |rng: &mut Rng| {
        let mut v = vec![0.0; d];
        rng.fill_normal(&mut v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        v
    };
    Ok((draw(rng), draw(rng)))
}
