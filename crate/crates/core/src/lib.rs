//! Unsupervised anomaly detection for numeric feature matrices.
//!
//! The pipeline scores every row of an unlabeled dataset by how "normal" it
//! looks, without ever seeing ground-truth labels:
//!
//! 1. rows are L2-normalized onto the unit sphere ([`projection::normalize_rows`]),
//! 2. a set of `M` random Gaussian matrices projects each row into `M`
//!    pseudo-classes ([`projection::build_projection_set`]),
//! 3. a small MLP is trained to recognize which projection produced each
//!    transformed row, stopping early once a mini-batch reaches a target
//!    accuracy ([`classifier::train`]),
//! 4. each transformed row is adversarially perturbed against the trained
//!    classifier and scored with a negative Brier score
//!    ([`scoring::score_pipeline`]).
//!
//! Inliers concentrate the classifier's capacity, so their perturbed
//! projections stay easy to classify; outliers do not. Higher scores mean
//! more normal.
//!
//! The crate also ships ranking metrics with brute-force-verified tie
//! handling ([`metrics`]), a Monte-Carlo checker for the similarity
//! preservation bounds of Gaussian projections ([`theory`]), CSV ingestion
//! and benchmark-task assembly ([`data`]), and a reproducible end-to-end
//! experiment runner ([`pipeline`]).

#![forbid(unsafe_code)]

pub mod classifier;
pub mod data;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod report;
pub mod scoring;
pub mod synthetic;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use tensor::{Matrix, Rng};
