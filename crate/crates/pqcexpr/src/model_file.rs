//! Trained-model files: the run header followed by a JSON document.
//!
//! ```text
//! # pqcexpr 0.1.0
//! # config {...}
//! {
//!   "features": ["rx", "ry", "rz", "h", "cnot", "cz"],
//!   "scaling": {"min": [...], "max": [...], "constant": [...]},
//!   "test_rows": [...],
//!   "metrics": {"n_train": 599, "n_test": 66, "train_r2": ..., "test_r2": ..., "test_mse": ...},
//!   "model": {"kind": "gbt", "base_score": ..., "trees": [{"nodes": [...]}], ...}
//! }
//! ```
//!
//! GBT tree nodes are either `{"Internal": {feature, threshold, left, right,
//! cover}}` or `{"Leaf": {value, cover}}`, with node 0 the root. Floats are
//! written in shortest round-trip form, so a reloaded model predicts
//! bit-identically.

use std::fs;
use std::path::{Path, PathBuf};

use pqcexpr_core::dataset::MinMaxScaling;
use pqcexpr_core::learn::{GbtModel, LassoModel, LearnError, Matrix};
use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::run_config::RunConfig;

pub const FEATURE_NAMES: [&str; 6] = ["rx", "ry", "rz", "h", "cnot", "cz"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Gbt(GbtModel),
    Lasso(LassoModel),
}

impl TrainedModel {
    pub fn name(&self) -> &'static str {
        match self {
            TrainedModel::Gbt(_) => "gbt",
            TrainedModel::Lasso(_) => "lasso",
        }
    }

    /// Predictions for already-scaled features.
    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>, LearnError> {
        match self {
            TrainedModel::Gbt(m) => m.predict_batch(x),
            TrainedModel::Lasso(m) => m.predict_batch(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_train: usize,
    pub n_test: usize,
    pub train_r2: f64,
    pub test_r2: f64,
    pub test_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub features: Vec<String>,
    /// Min-max scaling fitted on the whole dataset before splitting.
    pub scaling: MinMaxScaling,
    /// Dataset rows held out for testing.
    pub test_rows: Vec<usize>,
    pub metrics: Metrics,
    pub model: TrainedModel,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
}

pub fn format_model(config: &RunConfig, doc: &ModelDocument) -> String {
    let mut out = config.header();
    out.push_str(&serde_json::to_string_pretty(doc).expect("model serializes"));
    out.push('\n');
    out
}

pub fn write_model(path: &Path, config: &RunConfig, doc: &ModelDocument) -> Result<(), ModelFileError> {
    write_atomic(path, &format_model(config, doc)).map_err(|source| ModelFileError::Io { path: path.into(), source })
}

pub fn parse_model(text: &str, path: &Path) -> Result<(Option<RunConfig>, ModelDocument), ModelFileError> {
    let header_lines = text.lines().take_while(|l| l.starts_with('#')).count();
    let body_start: usize = text.lines().take(header_lines).map(|l| l.len() + 1).sum();
    let config = RunConfig::from_header(text).and_then(Result::ok);
    let doc = serde_json::from_str(&text[body_start.min(text.len())..]).map_err(|e| ModelFileError::Parse {
        path: path.into(),
        line: e.line() + header_lines,
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok((config, doc))
}

pub fn read_model(path: &Path) -> Result<(Option<RunConfig>, ModelDocument), ModelFileError> {
    let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io { path: path.into(), source })?;
    parse_model(&text, path)
}
