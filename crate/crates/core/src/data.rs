//! Dataset ingestion and benchmark-task assembly.
//!
//! Input is plain UTF-8 comma-separated text with an optional single header
//! row and an optional integer label column (selected by name or 0-based
//! index). Parsing always uses the decimal point, never a locale, and
//! accepts `\n` or `\r\n` endings. Ground-truth labels never enter the
//! scoring pipeline; they exist solely so the evaluation can mark outliers.
//!
//! Two task protocols are supported on top of a labeled dataset:
//! - one-class: one class is the inlier population and
//!   `round(p * n_inliers)` rows are drawn without replacement from the
//!   remaining classes as outliers;
//! - anomaly-classes: a fixed list of classes is flagged anomalous and
//!   every row is kept.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{derive_stream, Matrix, Rng};

/// A feature matrix with optional multiclass ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub class_label: Option<Vec<i64>>,
    /// Count of imputed (missing) cells per column, recorded when the
    /// loader runs with imputation enabled.
    pub imputed_per_column: Vec<usize>,
}

/// Which column holds the class label.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl LabelColumn {
    /// Parses a CLI-style selector: a bare integer is an index, anything
    /// else is a header name.
    pub fn parse(raw: &str) -> LabelColumn {
        match raw.parse::<usize>() {
            Ok(idx) => LabelColumn::Index(idx),
            Err(_) => LabelColumn::Name(raw.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadOptions {
    /// Replace missing cells (`?` or empty) with 0.0 instead of failing,
    /// recording per-column counts.
    pub impute_missing: bool,
}

/// An assembled task: inlier rows of one class plus sampled outliers.
#[derive(Debug, Clone, PartialEq)]
pub struct UadTask {
    pub inlier_class: i64,
    pub anomaly_ratio: f64,
    /// Row indices into the source dataset, in final (shuffled) order.
    pub row_indices: Vec<usize>,
    /// Parallel to `row_indices`.
    pub outlier_flags: Vec<bool>,
    pub assembly_seed: u64,
}

pub fn load_csv(
    path: &Path,
    label: Option<&LabelColumn>,
    options: LoadOptions,
) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, label, options)
}

/// The loader behind [`load_csv`], split out so tests and callers can feed
/// in-memory text.
pub fn parse_csv(
    text: &str,
    label: Option<&LabelColumn>,
    options: LoadOptions,
) -> Result<LabeledDataset> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = Vec::new();
    for (idx, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        lines.push((idx + 1, line));
    }
    if lines.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "file is empty".into(),
        });
    }

    let first_cells: Vec<&str> = lines[0].1.split(',').collect();
    let width = first_cells.len();
    let has_header = first_cells
        .iter()
        .any(|c| c.trim().parse::<f64>().is_err() && !is_missing(c));

    let header: Option<Vec<String>> = if has_header {
        Some(first_cells.iter().map(|c| c.trim().to_string()).collect())
    } else {
        None
    };

    let label_index = match label {
        None => None,
        Some(LabelColumn::Index(i)) => {
            if *i >= width {
                return Err(Error::Config(format!(
                    "label column index {i} out of range for {width} columns"
                )));
            }
            Some(*i)
        }
        Some(LabelColumn::Name(name)) => match &header {
            None => {
                return Err(Error::Config(format!(
                    "label column '{name}' requested by name but the file has no header row"
                )));
            }
            Some(cols) => match cols.iter().position(|c| c == name) {
                Some(i) => Some(i),
                None => {
                    return Err(Error::Config(format!(
                        "label column '{name}' not found in header {cols:?}"
                    )));
                }
            },
        },
    };

    let data_lines = if has_header { &lines[1..] } else { &lines[..] };
    if data_lines.is_empty() {
        return Err(Error::Parse {
            line: lines[0].0,
            message: "no data rows after the header".into(),
        });
    }

    let feature_width = width - label_index.map(|_| 1).unwrap_or(0);
    let mut features = Vec::with_capacity(data_lines.len() * feature_width);
    let mut labels: Vec<i64> = Vec::new();
    let mut imputed_per_column = vec![0usize; width];

    for &(line_no, line) in data_lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {width} columns, found {}", cells.len()),
            });
        }
        for (col, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            if Some(col) == label_index {
                let value = cell.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("column {col}: label '{cell}' is not numeric"),
                })?;
                if !value.is_finite() || value.fract() != 0.0 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("column {col}: label '{cell}' is not an integer"),
                    });
                }
                labels.push(value as i64);
                continue;
            }
            let value = if is_missing(cell) {
                if options.impute_missing {
                    imputed_per_column[col] += 1;
                    0.0
                } else {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!(
                            "column {col}: missing value '{cell}' (enable imputation to replace with 0)"
                        ),
                    });
                }
            } else {
                let parsed = cell.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("column {col}: '{cell}' is not numeric"),
                })?;
                if !parsed.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("column {col}: non-finite value '{cell}'"),
                    });
                }
                parsed
            };
            features.push(value);
        }
    }

    let rows = data_lines.len();
    Ok(LabeledDataset {
        features: Matrix::from_vec(rows, feature_width, features)?,
        class_label: label_index.map(|_| labels),
        imputed_per_column,
    })
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "?"
}

/// One-class task assembly: all rows of `inlier_class` plus
/// `round(p * n_inliers)` rows sampled uniformly without replacement from
/// the other classes. The combined rows are shuffled deterministically from
/// a child of `seed`.
pub fn assemble_task(
    dataset: &LabeledDataset,
    inlier_class: i64,
    anomaly_ratio: f64,
    seed: u64,
) -> Result<(UadTask, Matrix, Vec<bool>)> {
    let labels = dataset
        .class_label
        .as_ref()
        .ok_or_else(|| Error::Config("task assembly needs a labeled dataset".into()))?;
    if !(anomaly_ratio > 0.0 && anomaly_ratio <= 1.0) {
        return Err(Error::Config(format!(
            "anomaly ratio must be in (0, 1], got {anomaly_ratio}"
        )));
    }
    let inliers: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == inlier_class)
        .map(|(i, _)| i)
        .collect();
    if inliers.is_empty() {
        return Err(Error::Config(format!(
            "no rows with inlier class {inlier_class}"
        )));
    }
    let pool: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l != inlier_class)
        .map(|(i, _)| i)
        .collect();
    let outlier_count = (anomaly_ratio * inliers.len() as f64).round() as usize;
    if outlier_count > pool.len() {
        return Err(Error::Config(format!(
            "need {outlier_count} outliers but only {} non-inlier rows exist",
            pool.len()
        )));
    }

    let mut sample_rng = Rng::new(derive_stream(seed, 0));
    let chosen = sample_rng.sample_without_replacement(pool.len(), outlier_count)?;

    let mut row_indices: Vec<usize> = inliers.clone();
    row_indices.extend(chosen.iter().map(|&i| pool[i]));
    let mut flags: Vec<bool> = vec![false; inliers.len()];
    flags.extend(std::iter::repeat_n(true, outlier_count));

    // One permutation applied to rows and flags together.
    let mut order: Vec<usize> = (0..row_indices.len()).collect();
    let mut shuffle_rng = Rng::new(derive_stream(seed, 1));
    shuffle_rng.shuffle(&mut order);
    let row_indices: Vec<usize> = order.iter().map(|&i| row_indices[i]).collect();
    let flags: Vec<bool> = order.iter().map(|&i| flags[i]).collect();

    let features = dataset.features.gather_rows(&row_indices);
    let task = UadTask {
        inlier_class,
        anomaly_ratio,
        row_indices,
        outlier_flags: flags.clone(),
        assembly_seed: seed,
    };
    Ok((task, features, flags))
}

/// Flags every row whose class is in `anomaly_classes` as an outlier,
/// keeping all rows (the protocol for inherently tabular datasets).
pub fn flag_anomaly_classes(
    dataset: &LabeledDataset,
    anomaly_classes: &[i64],
) -> Result<(Matrix, Vec<bool>)> {
    let labels = dataset
        .class_label
        .as_ref()
        .ok_or_else(|| Error::Config("anomaly-class flagging needs a labeled dataset".into()))?;
    let flags: Vec<bool> = labels.iter().map(|l| anomaly_classes.contains(l)).collect();
    Ok((dataset.features.clone(), flags))
}

/// Per-class row counts, mostly for log output.
pub fn class_histogram(labels: &[i64]) -> BTreeMap<i64, usize> {
    let mut hist = BTreeMap::new();
    for l in labels {
        *hist.entry(*l).or_insert(0) += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_hand_fixture_with_named_label() {
        let ds = parse_csv(
            "a,b,y\n1,2,0\n3,4,1",
            Some(&LabelColumn::Name("y".into())),
            LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(ds.features.rows(), 2);
        assert_eq!(ds.features.cols(), 2);
        assert_eq!(ds.features.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ds.class_label, Some(vec![0, 1]));
    }

    #[test]
    fn parses_headerless_with_index_label_and_crlf() {
        let ds = parse_csv(
            "1,2,5\r\n3,4,6\r\n",
            Some(&LabelColumn::Index(2)),
            LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(ds.features.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ds.class_label, Some(vec![5, 6]));
    }

    #[test]
    fn nan_cell_is_a_parse_error_with_position() {
        let err = parse_csv("1,2\n3,NaN\n", None, LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("column 1"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_a_parse_error() {
        let err = parse_csv("1,2\n3\n", None, LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(parse_csv("", None, LoadOptions::default()).is_err());
        assert!(parse_csv("\n\n", None, LoadOptions::default()).is_err());
    }

    #[test]
    fn missing_cells_require_imputation() {
        let strict = parse_csv("1,?\n2,3\n", None, LoadOptions::default());
        assert!(strict.is_err());
        let ds = parse_csv(
            "1,?\n2,3\n",
            None,
            LoadOptions {
                impute_missing: true,
            },
        )
        .unwrap();
        assert_eq!(ds.features.data(), &[1.0, 0.0, 2.0, 3.0]);
        assert_eq!(ds.imputed_per_column, vec![0, 1]);
    }

    #[test]
    fn label_by_name_requires_header() {
        let err = parse_csv(
            "1,2\n3,4\n",
            Some(&LabelColumn::Name("y".into())),
            LoadOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    fn toy_labeled(n_per_class: &[(i64, usize)]) -> LabeledDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for &(class, count) in n_per_class {
            for i in 0..count {
                rows.push(vec![class as f64, i as f64]);
                labels.push(class);
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        LabeledDataset {
            features: Matrix::from_vec(labels.len(), 2, flat).unwrap(),
            class_label: Some(labels),
            imputed_per_column: vec![0, 0],
        }
    }

    #[test]
    fn assemble_task_counts_and_disjointness() {
        let ds = toy_labeled(&[(0, 10), (1, 8), (2, 9)]);
        let (task, features, flags) = assemble_task(&ds, 0, 0.5, 42).unwrap();
        assert_eq!(features.rows(), 15);
        assert_eq!(flags.iter().filter(|f| **f).count(), 5);
        // Flags line up: inlier rows carry class 0 in column 0.
        for (i, &flag) in flags.iter().enumerate() {
            if flag {
                assert_ne!(features.get(i, 0), 0.0);
            } else {
                assert_eq!(features.get(i, 0), 0.0);
            }
        }
        // The index list is a permutation without duplicates.
        let mut seen = task.row_indices.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), task.row_indices.len());
    }

    #[test]
    fn assemble_task_is_deterministic_per_seed() {
        let ds = toy_labeled(&[(0, 12), (1, 20)]);
        let (a, _, _) = assemble_task(&ds, 0, 0.25, 7).unwrap();
        let (b, _, _) = assemble_task(&ds, 0, 0.25, 7).unwrap();
        let (c, _, _) = assemble_task(&ds, 0, 0.25, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.row_indices, c.row_indices);
    }

    #[test]
    fn assemble_task_rejects_small_pools() {
        let ds = toy_labeled(&[(0, 10), (1, 3)]);
        assert!(assemble_task(&ds, 0, 0.5, 1).is_err());
    }

    #[test]
    fn anomaly_class_flags() {
        let ds = toy_labeled(&[(1, 4), (3, 2), (5, 3)]);
        let (features, flags) = flag_anomaly_classes(&ds, &[3, 5]).unwrap();
        assert_eq!(features.rows(), 9);
        assert_eq!(flags.iter().filter(|f| **f).count(), 5);
        assert_eq!(&flags[0..4], &[false; 4]);
    }
}
