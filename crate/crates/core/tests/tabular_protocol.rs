//! End-to-end run over a fixture shaped like the real tabular benchmark
//! file: 452 rows, 279 numeric attributes plus a trailing 1-based class
//! column (16 classes with the published cardinalities), missing cells as
//! `?`. The thresholds of the real reproduction live in the acceptance
//! suite; this exercises the exact ingestion-to-report path so swapping in
//! the real file is a data change only.

use outrider::data::{class_histogram, flag_anomaly_classes, load_csv, LabelColumn, LoadOptions};
use outrider::pipeline::{run_seed, DataSource, EtaMode, ExperimentConfig, Provenance};
use outrider::report::ProtocolRecord;
use outrider::tensor::Rng;

const CLASS_COUNTS: [(i64, usize); 13] = [
    (1, 245),
    (2, 44),
    (3, 15),
    (4, 15),
    (5, 13),
    (6, 25),
    (7, 3),
    (8, 2),
    (9, 9),
    (10, 50),
    (14, 4),
    (15, 5),
    (16, 22),
];
const ANOMALY_CLASSES: [i64; 8] = [3, 4, 5, 7, 8, 9, 14, 15];

fn write_fixture(path: &std::path::Path) {
    let mut rng = Rng::new(2024);
    let mut lines = Vec::new();
    for &(class, count) in &CLASS_COUNTS {
        for _ in 0..count {
            let mut cells: Vec<String> = (0..279)
                .map(|col| {
                    // A sprinkling of missing cells, like the real file.
                    if rng.next_f64() < 0.003 {
                        "?".to_string()
                    } else {
                        format!(
                            "{:.3}",
                            rng.next_normal() + class as f64 * 0.25 + col as f64 * 1e-3
                        )
                    }
                })
                .collect();
            cells.push(class.to_string());
            lines.push(cells.join(","));
        }
    }
    // Deterministic row shuffle so classes are interleaved as on disk.
    let mut order: Vec<usize> = (0..lines.len()).collect();
    rng.shuffle(&mut order);
    let shuffled: Vec<String> = order.into_iter().map(|i| lines[i].clone()).collect();
    std::fs::write(path, shuffled.join("\n")).unwrap();
}

#[test]
fn tabular_fixture_runs_the_full_protocol() {
    let dir = std::env::temp_dir().join(format!("outrider-tabular-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("fixture.data");
    write_fixture(&path);

    let dataset = load_csv(
        &path,
        Some(&LabelColumn::Index(279)),
        LoadOptions {
            impute_missing: true,
        },
    )
    .unwrap();
    assert_eq!(dataset.features.rows(), 452);
    assert_eq!(dataset.features.cols(), 279);
    assert!(dataset.imputed_per_column.iter().sum::<usize>() > 0);

    let labels = dataset.class_label.as_ref().unwrap();
    let histogram = class_histogram(labels);
    assert_eq!(histogram[&1], 245);
    assert_eq!(histogram.len(), 13);

    let (features, flags) = flag_anomaly_classes(&dataset, &ANOMALY_CLASSES).unwrap();
    assert_eq!(flags.iter().filter(|f| **f).count(), 66);

    // Tiny configuration: this checks the path, not the published numbers.
    let source = DataSource::Fixed {
        features,
        outlier_flags: Some(flags),
        protocol: ProtocolRecord::AnomalyClasses {
            classes: ANOMALY_CLASSES.to_vec(),
        },
    };
    let config = ExperimentConfig {
        m_count: 8,
        proj_dim: 16,
        accuracy_threshold: 0.6,
        eta: EtaMode::Fixed(0.2),
        batch_size: 64,
        max_epochs: 10,
        seeds: vec![0],
        ..Default::default()
    };
    let provenance = Provenance {
        input_path: Some(path.display().to_string()),
        label_column: Some("279".into()),
        impute_missing: true,
    };
    let report = run_seed(&source, &config, 0, &provenance).unwrap();
    assert_eq!(report.scores.len(), 452);
    assert!(report.scores.iter().all(|s| (-2.0..=0.0).contains(s)));
    assert!(report.metrics.is_some());
    assert!(report.config.impute_missing);
    assert_eq!(
        report.config.protocol,
        ProtocolRecord::AnomalyClasses {
            classes: ANOMALY_CLASSES.to_vec()
        }
    );
    std::fs::remove_dir_all(&dir).ok();
}
