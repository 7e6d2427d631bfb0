//! Command-line front end for the anomaly-detection pipeline.
//!
//! Three subcommands:
//! - `run`: full pipeline on a CSV file (or the built-in synthetic
//!   benchmark), one report per seed plus a cross-seed aggregate;
//! - `sweep`: repeat `run` along one hyperparameter axis and tabulate;
//! - `verify-theory`: Monte-Carlo check of the similarity-preservation
//!   bounds of the Gaussian projection sampler.
//!
//! Exit code 0 means the requested command completed; training that hits
//! the epoch cap without reaching the accuracy threshold is reported as a
//! warning, not a failure. Errors exit nonzero with the failing pipeline
//! stage named.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use outrider::data::{flag_anomaly_classes, load_csv, LabelColumn, LoadOptions};
use outrider::pipeline::{run_experiment, DataSource, EtaMode, ExperimentConfig, Provenance};
use outrider::report::{
    write_aggregate, write_atomic, write_report, AggregateReport, ProtocolRecord, ScoreReport,
};
use outrider::synthetic::SyntheticSpec;
use outrider::tensor::Rng;
use outrider::theory::{
    min_k, random_unit_pair, run_distance_trials, run_inner_product_trials, BoundSpec, Variant,
};

#[derive(Parser)]
#[command(
    name = "outrider",
    about = "Self-supervised anomaly scoring via random-projection pseudo-labels and adversarial perturbation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a dataset and (when ground truth is available) evaluate it.
    Run(RunArgs),
    /// Run the pipeline repeatedly along one hyperparameter axis.
    Sweep(SweepArgs),
    /// Monte-Carlo check of the projection similarity-preservation bounds.
    VerifyTheory(VerifyArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV input (UTF-8, comma separated, optional single header row).
    #[arg(long)]
    input: Option<PathBuf>,

    /// Use the built-in synthetic benchmark instead of a file.
    #[arg(long, conflicts_with = "input")]
    synthetic: bool,

    /// Inlier count for the synthetic benchmark.
    #[arg(long, default_value_t = 500)]
    synthetic_inliers: usize,

    /// Feature dimension for the synthetic benchmark.
    #[arg(long, default_value_t = 64)]
    synthetic_dim: usize,

    /// Label column, by header name or 0-based index.
    #[arg(long)]
    label_col: Option<String>,

    /// One-class protocol: the class treated as inliers.
    #[arg(long)]
    inlier_class: Option<i64>,

    /// Anomaly ratio: outliers sampled per inlier (one-class protocol) or
    /// generated per inlier (synthetic benchmark).
    #[arg(long, default_value_t = 0.1)]
    p: f64,

    /// Anomaly-classes protocol: flag these classes as outliers, keep all
    /// rows (comma separated).
    #[arg(long, value_delimiter = ',', conflicts_with = "inlier_class")]
    anomaly_classes: Option<Vec<i64>>,

    /// Replace missing cells ("?" or empty) with 0 instead of failing.
    #[arg(long)]
    impute_missing: bool,
}

#[derive(Args)]
struct ConfigArgs {
    /// Number of random projections (pseudo-classes).
    #[arg(long = "m", default_value_t = 256)]
    m_count: usize,

    /// Projected dimension.
    #[arg(long = "k", default_value_t = 256)]
    proj_dim: usize,

    /// Early-stop batch accuracy threshold in (0, 1).
    #[arg(long = "mu", default_value_t = 0.6)]
    accuracy_threshold: f64,

    /// Perturbation magnitude, or `auto` for 1 / median input-gradient norm.
    #[arg(long, default_value = "1e3")]
    eta: String,

    /// Adam learning rate.
    #[arg(long = "lr", default_value_t = 1e-3)]
    learning_rate: f64,

    /// Coupled L2 weight decay on weight matrices.
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,

    #[arg(long, default_value_t = 128)]
    batch_size: usize,

    /// Epoch cap; hitting it flags non-convergence but still reports.
    #[arg(long, default_value_t = 50)]
    max_epochs: usize,

    /// Comma-separated seeds; each runs the full pipeline independently.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 1, 2, 3, 4])]
    seeds: Vec<u64>,
}

impl ConfigArgs {
    fn to_config(&self) -> anyhow::Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            m_count: self.m_count,
            proj_dim: self.proj_dim,
            accuracy_threshold: self.accuracy_threshold,
            eta: EtaMode::parse(&self.eta)?,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            seeds: self.seeds.clone(),
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    config: ConfigArgs,

    /// Directory for per-seed reports and the aggregate.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    config: ConfigArgs,

    /// Hyperparameter to sweep: `k`, `mu` or `eta`.
    #[arg(long)]
    axis: String,

    /// Comma-separated values for the axis (`eta` also accepts `auto`).
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,

    /// Directory for the sweep table and per-value aggregates.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,

    #[arg(long, default_value_t = 0.1)]
    delta: f64,

    #[arg(long, default_value_t = 10_000)]
    trials: usize,

    /// Ambient dimension of the random unit-vector pair.
    #[arg(long = "dim", default_value_t = 512)]
    dim: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Optional path for the JSON record (also printed to stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::VerifyTheory(args) => cmd_verify_theory(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn build_source(data: &DataArgs) -> anyhow::Result<(DataSource, Provenance)> {
    if data.synthetic {
        let source = DataSource::Synthetic(SyntheticSpec {
            n_inliers: data.synthetic_inliers,
            anomaly_ratio: data.p,
            dim: data.synthetic_dim,
        });
        return Ok((source, Provenance::default()));
    }
    let path = data
        .input
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("either --input or --synthetic is required"))?;
    let label_column = data.label_col.as_deref().map(LabelColumn::parse);
    let options = LoadOptions {
        impute_missing: data.impute_missing,
    };
    let dataset = load_csv(path, label_column.as_ref(), options)
        .with_context(|| format!("loading {}", path.display()))?;
    if data.impute_missing {
        let imputed: usize = dataset.imputed_per_column.iter().sum();
        if imputed > 0 {
            let per_column: Vec<String> = dataset
                .imputed_per_column
                .iter()
                .enumerate()
                .filter(|(_, n)| **n > 0)
                .map(|(col, n)| format!("col {col}: {n}"))
                .collect();
            eprintln!(
                "note: imputed {imputed} missing cells as 0 ({})",
                per_column.join(", ")
            );
        }
    }

    let provenance = Provenance {
        input_path: Some(path.display().to_string()),
        label_column: data.label_col.clone(),
        impute_missing: data.impute_missing,
    };

    let source = match (&data.inlier_class, &data.anomaly_classes) {
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
        (Some(inlier_class), None) => {
            if dataset.class_label.is_none() {
                bail!("--inlier-class needs --label-col");
            }
            DataSource::OneClass {
                dataset,
                inlier_class: *inlier_class,
                anomaly_ratio: data.p,
            }
        }
        (None, Some(classes)) => {
            let (features, flags) = flag_anomaly_classes(&dataset, classes)?;
            DataSource::Fixed {
                features,
                outlier_flags: Some(flags),
                protocol: ProtocolRecord::AnomalyClasses {
                    classes: classes.clone(),
                },
            }
        }
        (None, None) => DataSource::Fixed {
            features: dataset.features,
            outlier_flags: None,
            protocol: ProtocolRecord::None,
        },
    };
    Ok((source, provenance))
}

fn print_aggregate(aggregate: &AggregateReport) {
    match (aggregate.auroc_mean, aggregate.aupr_mean) {
        (Some(auroc), Some(aupr)) => {
            let std_of =
                |v: Option<f64>| v.map(|s| format!("{:.4}", s)).unwrap_or_else(|| "-".into());
            println!(
                "aggregate over {} seeds: AUROC {:.4} +/- {}  AUPR {:.4} +/- {}",
                aggregate.seeds.len(),
                auroc,
                std_of(aggregate.auroc_std),
                aupr,
                std_of(aggregate.aupr_std),
            );
        }
        _ => println!(
            "aggregate over {} seeds: scores written (no ground truth, so no metrics)",
            aggregate.seeds.len()
        ),
    }
}

fn warn_non_convergence(reports: &[ScoreReport]) {
    for report in reports {
        if !report.converged {
            eprintln!(
                "warning: seed {} hit the epoch cap ({}) at batch accuracy {:.3} without reaching mu={}",
                report.config.seed,
                report.config.max_epochs,
                report.final_batch_accuracy,
                report.config.accuracy_threshold
            );
        }
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let (source, provenance) = build_source(&args.data)?;
    let config = args.config.to_config()?;
    let (reports, aggregate) = run_experiment(&source, &config, &provenance)?;

    std::fs::create_dir_all(&args.output)?;
    for report in &reports {
        let path = args
            .output
            .join(format!("seed_{}.json", report.config.seed));
        write_report(report, &path)?;
        let metrics = report
            .metrics
            .map(|m| format!("AUROC {:.4} AUPR {:.4}", m.auroc, m.aupr))
            .unwrap_or_else(|| "no ground truth".into());
        println!(
            "seed {}: {} (eta {:.6}, {} steps, {})",
            report.config.seed,
            metrics,
            report.config.eta,
            report.steps,
            if report.converged {
                "converged"
            } else {
                "epoch cap"
            },
        );
    }
    write_aggregate(&aggregate, &args.output.join("aggregate.json"))?;
    warn_non_convergence(&reports);
    print_aggregate(&aggregate);
    println!("reports written to {}", args.output.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    if args.values.is_empty() {
        bail!("--values must not be empty");
    }
    let (source, provenance) = build_source(&args.data)?;
    let base = args.config.to_config()?;

    let mut rows = Vec::new();
    for raw in &args.values {
        let mut config = base.clone();
        match args.axis.as_str() {
            "k" => config.proj_dim = raw.parse().with_context(|| format!("k value '{raw}'"))?,
            "mu" => {
                config.accuracy_threshold =
                    raw.parse().with_context(|| format!("mu value '{raw}'"))?
            }
            "eta" => config.eta = EtaMode::parse(raw)?,
            other => bail!("unknown sweep axis '{other}' (expected k, mu or eta)"),
        }
        let (reports, aggregate) = run_experiment(&source, &config, &provenance)?;
        warn_non_convergence(&reports);
        rows.push(serde_json::json!({
            "axis": args.axis,
            "value": raw,
            "auroc_mean": aggregate.auroc_mean,
            "auroc_std": aggregate.auroc_std,
            "aupr_mean": aggregate.aupr_mean,
            "aupr_std": aggregate.aupr_std,
            "per_seed": aggregate.per_seed,
        }));
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{} = {:>8}: AUROC {} +/- {}  AUPR {} +/- {}",
            args.axis,
            raw,
            fmt(aggregate.auroc_mean),
            fmt(aggregate.auroc_std),
            fmt(aggregate.aupr_mean),
            fmt(aggregate.aupr_std),
        );
    }

    std::fs::create_dir_all(&args.output)?;
    let table = serde_json::to_string_pretty(&rows)?;
    write_atomic(&args.output.join("sweep.json"), table.as_bytes())?;
    println!(
        "sweep table written to {}",
        args.output.join("sweep.json").display()
    );
    Ok(())
}

fn cmd_verify_theory(args: VerifyArgs) -> anyhow::Result<()> {
    if args.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let distance_spec = BoundSpec {
        epsilon: args.epsilon,
        delta: args.delta,
        variant: Variant::Distance,
    };
    let inner_spec = BoundSpec {
        variant: Variant::InnerProduct,
        ..distance_spec
    };
    let k_distance = min_k(&distance_spec)?;
    let k_inner = min_k(&inner_spec)?;

    let mut pair_rng = Rng::new(args.seed);
    let (v_i, v_j) = random_unit_pair(args.dim, &mut pair_rng)?;
    let mut trial_rng = Rng::new(args.seed.wrapping_add(1));
    let distance = run_distance_trials(
        &v_i,
        &v_j,
        k_distance,
        args.epsilon,
        args.trials,
        &mut trial_rng,
    )?;
    let inner = run_inner_product_trials(
        &v_i,
        &v_j,
        k_inner,
        args.epsilon,
        args.trials,
        &mut trial_rng,
    )?;

    let record = serde_json::json!({
        "epsilon": args.epsilon,
        "delta": args.delta,
        "trials": args.trials,
        "dim": args.dim,
        "seed": args.seed,
        "distance": distance,
        "inner_product": inner,
    });
    let body = serde_json::to_string_pretty(&record)?;
    println!("{body}");
    for report in [&distance, &inner] {
        let verdict = if report.violation_rate <= args.delta {
            "within delta"
        } else {
            "ABOVE delta"
        };
        eprintln!(
            "{}: k = {}, violation rate {:.4} vs delta {} ({verdict})",
            report.variant, report.k_used, report.violation_rate, args.delta
        );
    }
    if let Some(path) = &args.output {
        write_atomic(path, body.as_bytes())?;
        eprintln!("record written to {}", path.display());
    }
    Ok(())
}
