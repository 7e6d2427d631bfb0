//! End-to-end experiment orchestration.
//!
//! A run takes a data source and a configuration, executes the full
//! pipeline once per seed (assemble, normalize, project, train, perturb,
//! score, evaluate) and aggregates the metrics across seeds. Every stage
//! failure is tagged with the stage name. All randomness in a run derives
//! from its seed through fixed stream numbers, so a (source, config, seed)
//! triple fully determines the report.

use std::time::Instant;

use crate::classifier::{train, TrainConfig};
use crate::data::LabeledDataset;
use crate::error::{Error, Result, StageExt};
use crate::metrics::{aupr, auroc, LabeledScores};
use crate::projection::{build_projection_set, normalize_rows, transform_all};
use crate::report::{
    AggregateReport, MetricsBlock, ProtocolRecord, ResolvedConfig, ScoreReport, SeedSummary,
    REPORT_SCHEMA_VERSION,
};
use crate::scoring::{input_gradient_norms, score_transformed};
use crate::synthetic::{clustered_benchmark, SyntheticSpec};
use crate::tensor::{derive_stream, Matrix, Rng};

// Stream numbers for deriving per-stage seeds from the run seed.
const STREAM_TASK: u64 = 0;
const STREAM_PROJECTION: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

/// How the perturbation magnitude is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaMode {
    Fixed(f64),
    /// `eta = 1 / median(input-gradient norm)` over the unperturbed
    /// transformed features, resolved per seed after training.
    Auto,
}

impl EtaMode {
    pub fn parse(raw: &str) -> Result<EtaMode> {
        if raw.eq_ignore_ascii_case("auto") {
            return Ok(EtaMode::Auto);
        }
        let value: f64 = raw
            .parse()
            .map_err(|_| Error::Config(format!("eta must be a number or 'auto', got '{raw}'")))?;
        if value < 0.0 || !value.is_finite() {
            return Err(Error::Config(format!(
                "eta must be finite and >= 0, got {value}"
            )));
        }
        Ok(EtaMode::Fixed(value))
    }

    fn label(&self) -> String {
        match self {
            EtaMode::Fixed(_) => "fixed".into(),
            EtaMode::Auto => "auto".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m_count: usize,
    pub proj_dim: usize,
    pub accuracy_threshold: f64,
    pub eta: EtaMode,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            m_count: 256,
            proj_dim: 256,
            accuracy_threshold: 0.6,
            eta: EtaMode::Fixed(1e3),
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            batch_size: 128,
            max_epochs: 50,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.m_count == 0 || self.proj_dim == 0 {
            return Err(Error::Config("m_count and proj_dim must be >= 1".into()));
        }
        self.train_config(0).validate()
    }

    fn train_config(&self, shuffle_seed: u64) -> TrainConfig {
        TrainConfig {
            accuracy_threshold: self.accuracy_threshold,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            shuffle_seed,
        }
    }
}

/// Where the rows come from. One-class and synthetic sources resample per
/// seed; a fixed source reuses the same rows for every seed.
#[derive(Debug, Clone)]
pub enum DataSource {
    Fixed {
        features: Matrix,
        outlier_flags: Option<Vec<bool>>,
        protocol: ProtocolRecord,
    },
    OneClass {
        dataset: LabeledDataset,
        inlier_class: i64,
        anomaly_ratio: f64,
    },
    Synthetic(SyntheticSpec),
}

/// File-level provenance recorded in every report.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub input_path: Option<String>,
    pub label_column: Option<String>,
    pub impute_missing: bool,
}

impl DataSource {
    fn materialize(&self, task_seed: u64) -> Result<(Matrix, Option<Vec<bool>>, ProtocolRecord)> {
        match self {
            DataSource::Fixed {
                features,
                outlier_flags,
                protocol,
            } => Ok((features.clone(), outlier_flags.clone(), protocol.clone())),
            DataSource::OneClass {
                dataset,
                inlier_class,
                anomaly_ratio,
            } => {
                let (_, features, flags) =
                    crate::data::assemble_task(dataset, *inlier_class, *anomaly_ratio, task_seed)?;
                Ok((
                    features,
                    Some(flags),
                    ProtocolRecord::OneClass {
                        inlier_class: *inlier_class,
                        anomaly_ratio: *anomaly_ratio,
                    },
                ))
            }
            DataSource::Synthetic(spec) => {
                let (features, flags) = clustered_benchmark(spec, task_seed)?;
                Ok((
                    features,
                    Some(flags),
                    ProtocolRecord::Synthetic {
                        n_inliers: spec.n_inliers,
                        anomaly_ratio: spec.anomaly_ratio,
                        dim: spec.dim,
                    },
                ))
            }
        }
    }
}

/// Runs the pipeline once for one seed.
pub fn run_seed(
    source: &DataSource,
    config: &ExperimentConfig,
    seed: u64,
    provenance: &Provenance,
) -> Result<ScoreReport> {
    config.validate()?;
    let started = Instant::now();

    let (features, flags, protocol) = source
        .materialize(derive_stream(seed, STREAM_TASK))
        .stage("assemble")?;
    let normalized = normalize_rows(&features).stage("normalize")?;
    let pset = build_projection_set(
        derive_stream(seed, STREAM_PROJECTION),
        config.m_count,
        config.proj_dim,
        normalized.cols(),
    )
    .stage("project")?;
    let transformed = transform_all(&normalized, &pset).stage("transform")?;

    let train_config = config.train_config(derive_stream(seed, STREAM_SHUFFLE));
    let mut init_rng = Rng::new(derive_stream(seed, STREAM_INIT));
    let outcome = train(&transformed, &train_config, &mut init_rng).stage("train")?;

    let eta = match config.eta {
        EtaMode::Fixed(value) => value,
        EtaMode::Auto => {
            let mut norms =
                input_gradient_norms(&outcome.model, &transformed.features).stage("eta")?;
            norms.sort_by(|a, b| a.partial_cmp(b).expect("gradient norms are finite"));
            let median = norms[norms.len() / 2];
            if median <= 0.0 {
                return Err(Error::Config(
                    "auto eta failed: median input-gradient norm is zero".into(),
                )
                .in_stage("eta"));
            }
            1.0 / median
        }
    };

    let score_vector = score_transformed(&outcome.model, &transformed, eta).stage("score")?;

    let metrics = match &flags {
        Some(flags) => {
            // Rank by negated score so larger means more anomalous.
            let anomaly: Vec<f64> = score_vector.scores.iter().map(|s| -s).collect();
            let ls = LabeledScores::new(anomaly, flags.clone()).stage("metrics")?;
            Some(MetricsBlock {
                auroc: auroc(&ls).stage("metrics")?,
                aupr: aupr(&ls).stage("metrics")?,
            })
        }
        None => None,
    };

    Ok(ScoreReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: ResolvedConfig {
            m_count: config.m_count,
            proj_dim: config.proj_dim,
            accuracy_threshold: config.accuracy_threshold,
            eta_mode: config.eta.label(),
            eta,
            learning_rate: config.learning_rate,
            weight_decay: config.weight_decay,
            batch_size: config.batch_size,
            max_epochs: config.max_epochs,
            seed,
            protocol,
            input_path: provenance.input_path.clone(),
            label_column: provenance.label_column.clone(),
            impute_missing: provenance.impute_missing,
        },
        n_samples: normalized.rows(),
        n_features: features.cols(),
        converged: outcome.converged,
        epochs_completed: outcome.epochs_completed,
        steps: outcome.steps,
        final_batch_accuracy: outcome.final_batch_accuracy,
        scores: score_vector.scores,
        outlier_flags: flags,
        metrics,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs every seed and aggregates metrics (mean and sample standard
/// deviation) across them.
pub fn run_experiment(
    source: &DataSource,
    config: &ExperimentConfig,
    provenance: &Provenance,
) -> Result<(Vec<ScoreReport>, AggregateReport)> {
    config.validate()?;
    let mut reports = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        reports.push(run_seed(source, config, seed, provenance)?);
    }
    let aggregate = aggregate_reports(&reports);
    Ok((reports, aggregate))
}

pub fn aggregate_reports(reports: &[ScoreReport]) -> AggregateReport {
    let per_seed: Vec<SeedSummary> = reports
        .iter()
        .map(|r| SeedSummary {
            seed: r.config.seed,
            converged: r.converged,
            auroc: r.metrics.map(|m| m.auroc),
            aupr: r.metrics.map(|m| m.aupr),
        })
        .collect();
    let aurocs: Vec<f64> = per_seed.iter().filter_map(|s| s.auroc).collect();
    let auprs: Vec<f64> = per_seed.iter().filter_map(|s| s.aupr).collect();
    let (auroc_mean, auroc_std) = mean_std(&aurocs);
    let (aupr_mean, aupr_std) = mean_std(&auprs);
    AggregateReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seeds: reports.iter().map(|r| r.config.seed).collect(),
        auroc_mean,
        auroc_std,
        aupr_mean,
        aupr_std,
        per_seed,
    }
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() as f64 - 1.0);
    (Some(mean), Some(var.sqrt()))
}
