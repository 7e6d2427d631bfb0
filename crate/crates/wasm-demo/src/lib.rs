//! wasm-bindgen bindings for the browser demo.
//!
//! Three operations back the static page in `www/`:
//! - [`run_benchmark`]: synthetic benchmark for one seed, scored with and
//!   without perturbation so the page can draw both score distributions;
//! - [`sweep_projection_dim`]: AUROC/AUPR as the projected dimension
//!   varies;
//! - [`verify_bounds`]: Monte-Carlo check of the similarity-preservation
//!   bounds at a chosen (epsilon, delta).
//!
//! Every function returns a JSON string; the page parses it and renders
//! with plain canvas calls. The crate also builds natively so the bindings
//! stay under `cargo test --workspace`.

use wasm_bindgen::prelude::*;

use outrider::classifier::{train, TrainConfig};
use outrider::metrics::{aupr, auroc, LabeledScores};
use outrider::pipeline::{run_seed, DataSource, EtaMode, ExperimentConfig, Provenance};
use outrider::projection::{build_projection_set, normalize_rows, transform_all};
use outrider::scoring::{input_gradient_norms, score_transformed};
use outrider::synthetic::{clustered_benchmark, SyntheticSpec};
use outrider::tensor::{derive_stream, Rng};
use outrider::theory::{
    min_k, random_unit_pair, run_distance_trials, run_inner_product_trials, BoundSpec, Variant,
};

fn to_js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&format!("{e}"))
}

struct TrainedBenchmark {
    model: outrider::classifier::Classifier,
    transformed: outrider::projection::PseudoLabeledSet,
    flags: Vec<bool>,
    steps: u64,
    converged: bool,
}

// Stream numbers match the pipeline, so demo runs line up with CLI runs.
fn train_benchmark(
    seed: u64,
    m_count: usize,
    proj_dim: usize,
    mu: f64,
) -> Result<TrainedBenchmark, outrider::Error> {
    let spec = SyntheticSpec::default();
    let (features, flags) = clustered_benchmark(&spec, derive_stream(seed, 0))?;
    let normalized = normalize_rows(&features)?;
    let pset = build_projection_set(derive_stream(seed, 1), m_count, proj_dim, normalized.cols())?;
    let transformed = transform_all(&normalized, &pset)?;
    let config = TrainConfig {
        accuracy_threshold: mu,
        learning_rate: 1e-3,
        weight_decay: 5e-4,
        batch_size: 128,
        max_epochs: 50,
        shuffle_seed: derive_stream(seed, 3),
    };
    let outcome = train(&transformed, &config, &mut Rng::new(derive_stream(seed, 2)))?;
    Ok(TrainedBenchmark {
        model: outcome.model,
        transformed,
        flags,
        steps: outcome.steps,
        converged: outcome.converged,
    })
}

fn resolve_eta(bench: &TrainedBenchmark, eta: f64, eta_auto: bool) -> Result<f64, outrider::Error> {
    if !eta_auto {
        return Ok(eta);
    }
    let mut norms = input_gradient_norms(&bench.model, &bench.transformed.features)?;
    norms.sort_by(|a, b| a.partial_cmp(b).expect("finite norms"));
    Ok(1.0 / norms[norms.len() / 2].max(1e-12))
}

fn metrics_json(scores: &[f64], flags: &[bool]) -> Result<serde_json::Value, outrider::Error> {
    let anomaly: Vec<f64> = scores.iter().map(|s| -s).collect();
    let ls = LabeledScores::new(anomaly, flags.to_vec())?;
    Ok(serde_json::json!({
        "auroc": auroc(&ls)?,
        "aupr": aupr(&ls)?,
    }))
}

/// Synthetic benchmark for one seed: scores with and without the
/// adversarial step, plus metrics for both paths.
#[wasm_bindgen]
pub fn run_benchmark(
    seed: u32,
    m_count: u32,
    proj_dim: u32,
    mu: f64,
    eta: f64,
    eta_auto: bool,
) -> Result<String, JsValue> {
    let bench =
        train_benchmark(seed as u64, m_count as usize, proj_dim as usize, mu).map_err(to_js_err)?;
    let eta = resolve_eta(&bench, eta, eta_auto).map_err(to_js_err)?;
    let unperturbed =
        score_transformed(&bench.model, &bench.transformed, 0.0).map_err(to_js_err)?;
    let perturbed = score_transformed(&bench.model, &bench.transformed, eta).map_err(to_js_err)?;
    let record = serde_json::json!({
        "seed": seed,
        "m": m_count,
        "k": proj_dim,
        "mu": mu,
        "eta": eta,
        "steps": bench.steps,
        "converged": bench.converged,
        "flags": bench.flags,
        "scores_unperturbed": unperturbed.scores,
        "scores_perturbed": perturbed.scores,
        "metrics_unperturbed": metrics_json(&unperturbed.scores, &bench.flags).map_err(to_js_err)?,
        "metrics_perturbed": metrics_json(&perturbed.scores, &bench.flags).map_err(to_js_err)?,
    });
    Ok(record.to_string())
}

/// AUROC/AUPR of the full pipeline as the projected dimension `k` varies.
#[wasm_bindgen]
pub fn sweep_projection_dim(
    seed: u32,
    m_count: u32,
    mu: f64,
    eta: f64,
    eta_auto: bool,
    ks: &str,
) -> Result<String, JsValue> {
    let mut rows = Vec::new();
    for raw in ks.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let k: usize = raw
            .parse()
            .map_err(|_| to_js_err(format!("bad k value '{raw}'")))?;
        let config = ExperimentConfig {
            m_count: m_count as usize,
            proj_dim: k,
            accuracy_threshold: mu,
            eta: if eta_auto {
                EtaMode::Auto
            } else {
                EtaMode::Fixed(eta)
            },
            seeds: vec![seed as u64],
            ..Default::default()
        };
        let source = DataSource::Synthetic(SyntheticSpec::default());
        let report =
            run_seed(&source, &config, seed as u64, &Provenance::default()).map_err(to_js_err)?;
        let metrics = report
            .metrics
            .expect("synthetic benchmark always has flags");
        rows.push(serde_json::json!({
            "k": k,
            "auroc": metrics.auroc,
            "aupr": metrics.aupr,
            "eta": report.config.eta,
            "steps": report.steps,
        }));
    }
    Ok(serde_json::Value::Array(rows).to_string())
}

/// Monte-Carlo check of both similarity-preservation bounds at the minimal
/// admissible `k` for the requested (epsilon, delta).
#[wasm_bindgen]
pub fn verify_bounds(
    epsilon: f64,
    delta: f64,
    trials: u32,
    dim: u32,
    seed: u32,
) -> Result<String, JsValue> {
    let distance_spec = BoundSpec {
        epsilon,
        delta,
        variant: Variant::Distance,
    };
    let inner_spec = BoundSpec {
        variant: Variant::InnerProduct,
        ..distance_spec
    };
    let k_distance = min_k(&distance_spec).map_err(to_js_err)?;
    let k_inner = min_k(&inner_spec).map_err(to_js_err)?;
    let mut pair_rng = Rng::new(seed as u64);
    let (v_i, v_j) = random_unit_pair(dim as usize, &mut pair_rng).map_err(to_js_err)?;
    let mut trial_rng = Rng::new(seed as u64 + 1);
    let distance = run_distance_trials(
        &v_i,
        &v_j,
        k_distance,
        epsilon,
        trials as usize,
        &mut trial_rng,
    )
    .map_err(to_js_err)?;
    let inner = run_inner_product_trials(
        &v_i,
        &v_j,
        k_inner,
        epsilon,
        trials as usize,
        &mut trial_rng,
    )
    .map_err(to_js_err)?;
    let record = serde_json::json!({
        "epsilon": epsilon,
        "delta": delta,
        "trials": trials,
        "dim": dim,
        "distance": distance,
        "inner_product": inner,
    });
    Ok(record.to_string())
}
