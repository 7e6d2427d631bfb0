//! Persistent experiment records.
//!
//! Reports are versioned JSON with a stable field order (struct declaration
//! order) and shortest-round-trip float formatting, so two runs with the
//! same configuration and seed produce byte-identical files except for the
//! wall-time field. Files are written atomically (temp file, then rename).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// The complete effective configuration of one run, defaults included, so
/// the run is reproducible from the report alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub m_count: usize,
    pub proj_dim: usize,
    pub accuracy_threshold: f64,
    pub eta_mode: String,
    /// The magnitude actually applied (resolved from `auto` if requested).
    pub eta: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub protocol: ProtocolRecord,
    pub input_path: Option<String>,
    pub label_column: Option<String>,
    pub impute_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolRecord {
    /// Raw matrix scored as-is (flags may still accompany it).
    None,
    OneClass {
        inlier_class: i64,
        anomaly_ratio: f64,
    },
    AnomalyClasses {
        classes: Vec<i64>,
    },
    Synthetic {
        n_inliers: usize,
        anomaly_ratio: f64,
        dim: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub auroc: f64,
    pub aupr: f64,
}

/// Per-seed output: scores, metrics and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub schema_version: u32,
    pub config: ResolvedConfig,
    pub n_samples: usize,
    pub n_features: usize,
    pub converged: bool,
    pub epochs_completed: usize,
    pub steps: u64,
    pub final_batch_accuracy: f64,
    /// Per-sample anomaly scores, higher = more normal, each in [-2, 0].
    pub scores: Vec<f64>,
    pub outlier_flags: Option<Vec<bool>>,
    pub metrics: Option<MetricsBlock>,
    pub wall_time_seconds: f64,
}

impl ScoreReport {
    /// Serialization with the wall time zeroed: the byte-determinism
    /// contract covers everything else.
    pub fn deterministic_payload(&self) -> Result<String> {
        let mut clone = self.clone();
        clone.wall_time_seconds = 0.0;
        Ok(serde_json::to_string_pretty(&clone)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub converged: bool,
    pub auroc: Option<f64>,
    pub aupr: Option<f64>,
}

/// Mean and sample standard deviation across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    pub auroc_mean: Option<f64>,
    pub auroc_std: Option<f64>,
    pub aupr_mean: Option<f64>,
    pub aupr_std: Option<f64>,
    pub per_seed: Vec<SeedSummary>,
}

/// FNV-1a digest of a configuration's canonical JSON, for tagging
/// checkpoints with the settings that produced them.
pub fn config_hash(config: &ResolvedConfig) -> Result<u64> {
    let canonical = serde_json::to_string(config)?;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in canonical.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(hash)
}

pub fn write_report(report: &ScoreReport, path: &Path) -> Result<()> {
    let body = serde_json::to_string_pretty(report)?;
    write_atomic(path, body.as_bytes())
}

pub fn read_report(path: &Path) -> Result<ScoreReport> {
    let text = std::fs::read_to_string(path)?;
    // Check the version before strict parsing so old files fail with a
    // version error rather than a shape error.
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Data("report has no schema_version field".into()))?;
    if found != REPORT_SCHEMA_VERSION as u64 {
        return Err(Error::SchemaVersion {
            found: found as u32,
            supported: REPORT_SCHEMA_VERSION,
        });
    }
    Ok(serde_json::from_str(&text)?)
}

pub fn write_aggregate(aggregate: &AggregateReport, path: &Path) -> Result<()> {
    let body = serde_json::to_string_pretty(aggregate)?;
    write_atomic(path, body.as_bytes())
}

/// Write-temp-then-rename so a crash never leaves a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = parent {
        std::fs::create_dir_all(dir)?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(
        ".{}.tmp-{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
