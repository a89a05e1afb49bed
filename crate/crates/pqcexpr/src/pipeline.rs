//! Training and explanation steps shared by the CLI and the tests.

use pqcexpr_core::dataset::{feature_matrix, DatasetError, ExpressibilityRecord, MinMaxScaling};
use pqcexpr_core::learn::{
    fit_gbt, fit_lasso, lambda_grid, mse, r2, train_test_split, GbtModel, LearnError, Matrix, Penalty,
};
use pqcexpr_core::shap::{explain_rows, shap_summary, ShapError, ShapExplanation, ShapSummary};

use crate::model_file::{Metrics, ModelDocument, TrainedModel, FEATURE_NAMES};
use crate::run_config::RunConfig;

/// Smallest λ of the LASSO grid relative to the largest.
pub const LASSO_GRID_RATIO: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Gbt,
    Lasso,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Shap(#[from] ShapError),
    #[error("SHAP attributions need a GBT model, got {0}")]
    NotGbt(&'static str),
    #[error("model expects {expected} features, dataset provides {got}")]
    Schema { expected: usize, got: usize },
    #[error("dataset has {rows} rows but the model's test split refers to row {row}")]
    SplitMismatch { rows: usize, row: usize },
}

impl From<DatasetError> for PipelineError {
    fn from(e: DatasetError) -> Self {
        PipelineError::Insufficient(e.to_string())
    }
}

fn insufficient(e: LearnError) -> PipelineError {
    match e {
        LearnError::DegenerateSplit { .. } | LearnError::Insufficient(_) | LearnError::Empty => {
            PipelineError::Insufficient(e.to_string())
        }
        other => PipelineError::Learn(other),
    }
}

/// Fits the requested models on a seeded hold-out split of `records`.
pub fn train_models(
    records: &[ExpressibilityRecord],
    run: &RunConfig,
    kinds: &[ModelKind],
) -> Result<Vec<ModelDocument>, PipelineError> {
    let data = feature_matrix(records)?;
    let split = train_test_split(&data.x, &data.y, run.test_fraction, run.seed).map_err(insufficient)?;
    let mut out = Vec::new();
    for kind in kinds {
        let model = match kind {
            ModelKind::Gbt => {
                let mut m = fit_gbt(&split.train_x, &split.train_y, &run.gbt).map_err(insufficient)?;
                m.scaling = Some(data.scaling.clone());
                TrainedModel::Gbt(m)
            }
            ModelKind::Lasso => {
                let grid = lambda_grid(&split.train_x, &split.train_y, run.lasso_grid, LASSO_GRID_RATIO)
                    .map_err(insufficient)?;
                let penalty = Penalty::CrossValidated { grid, folds: run.lasso_folds, seed: run.seed };
                TrainedModel::Lasso(fit_lasso(&split.train_x, &split.train_y, &penalty).map_err(insufficient)?)
            }
        };
        let train_pred = model.predict_batch(&split.train_x)?;
        let test_pred = model.predict_batch(&split.test_x)?;
        let metrics = Metrics {
            n_train: split.train_y.len(),
            n_test: split.test_y.len(),
            train_r2: r2(&train_pred, &split.train_y).map_err(insufficient)?,
            test_r2: r2(&test_pred, &split.test_y).map_err(insufficient)?,
            test_mse: mse(&test_pred, &split.test_y),
        };
        out.push(ModelDocument {
            features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            scaling: data.scaling.clone(),
            test_rows: split.test_idx.clone(),
            metrics,
            model,
        });
    }
    Ok(out)
}

/// `key=value` lines describing a trained model.
pub fn metrics_block(doc: &ModelDocument) -> String {
    let m = &doc.metrics;
    let mut out = format!(
        "model={}\nn_train={}\nn_test={}\ntrain_r2={}\ntest_r2={}\ntest_mse={}\n",
        doc.model.name(),
        m.n_train,
        m.n_test,
        m.train_r2,
        m.test_r2,
        m.test_mse
    );
    match &doc.model {
        TrainedModel::Gbt(g) => out.push_str(&format!("trees={}\nbase_score={}\n", g.trees.len(), g.base_score)),
        TrainedModel::Lasso(l) => {
            out.push_str(&format!("lambda={}\nintercept={}\n", l.lambda, l.intercept));
            for (name, w) in doc.features.iter().zip(l.raw_coefficients()) {
                out.push_str(&format!("coef_{name}={w}\n"));
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Subset {
    #[default]
    All,
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Explained {
    /// Dataset row of each explanation.
    pub rows: Vec<usize>,
    pub explanations: Vec<ShapExplanation>,
    /// Scaled features of the explained rows.
    pub features: Matrix,
    pub summary: ShapSummary,
    /// Largest `|base_value + Σφ − prediction|` over the explained rows.
    pub max_residual: f64,
}

/// Scaled model features of `records` under a stored scaling.
pub fn scaled_features(records: &[ExpressibilityRecord], scaling: &MinMaxScaling) -> Matrix {
    let data: Vec<f64> = records.iter().flat_map(|r| scaling.transform(&r.features())).collect();
    Matrix::from_vec(data, FEATURE_NAMES.len())
}

pub fn gbt_of(doc: &ModelDocument) -> Result<&GbtModel, PipelineError> {
    match &doc.model {
        TrainedModel::Gbt(m) => Ok(m),
        other => Err(PipelineError::NotGbt(other.name())),
    }
}

/// TreeSHAP attributions for the chosen subset of `records`.
pub fn explain(records: &[ExpressibilityRecord], doc: &ModelDocument, subset: Subset) -> Result<Explained, PipelineError> {
    let model = gbt_of(doc)?;
    if model.n_features != FEATURE_NAMES.len() {
        return Err(PipelineError::Schema { expected: model.n_features, got: FEATURE_NAMES.len() });
    }
    if let Some(&row) = doc.test_rows.iter().find(|&&r| r >= records.len()) {
        return Err(PipelineError::SplitMismatch { rows: records.len(), row });
    }
    let rows: Vec<usize> = match subset {
        Subset::All => (0..records.len()).collect(),
        Subset::Test => doc.test_rows.clone(),
        Subset::Train => (0..records.len()).filter(|r| doc.test_rows.binary_search(r).is_err()).collect(),
    };
    if rows.is_empty() {
        return Err(PipelineError::Insufficient("no rows to explain".into()));
    }
    let chosen: Vec<ExpressibilityRecord> = rows.iter().map(|&i| records[i].clone()).collect();
    let features = scaled_features(&chosen, &doc.scaling);
    let mut explanations = explain_rows(model, &features)?;
    for (e, &row) in explanations.iter_mut().zip(&rows) {
        e.instance = Some(row);
    }
    let predictions = model.predict_batch(&features)?;
    let max_residual = explanations.iter().zip(&predictions).map(|(e, p)| (e.total() - p).abs()).fold(0.0, f64::max);
    let summary = shap_summary(&explanations, &features)?;
    Ok(Explained { rows, explanations, features, summary, max_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pqcexpr_core::SamplingConfig;

    fn records(n: usize) -> Vec<ExpressibilityRecord> {
        (0..n)
            .map(|i| ExpressibilityRecord {
                template_id: 1 + (i % 19) as u32,
                n_qubits: 2 + i % 7,
                n_layers: 1 + i % 5,
                counts: [i % 9, (i * 7) % 13, i % 4, 0, i % 2, (i * 3) % 17, i % 5],
                n_params: i,
                kl_mean: ((i * 7) % 13) as f64 * 0.1 + (i % 9) as f64 * 0.05,
                kl_std: 0.01,
                config: SamplingConfig::default(),
            })
            .collect()
    }

    #[test]
    fn one_row_is_insufficient() {
        let err = train_models(&records(1), &RunConfig::default(), &[ModelKind::Gbt]).unwrap_err();
        assert!(err.to_string().starts_with("insufficient data"), "{err}");
        let err = train_models(&records(5), &RunConfig::default(), &[ModelKind::Gbt]).unwrap_err();
        assert!(err.to_string().starts_with("insufficient data"), "{err}");
    }

    #[test]
    fn train_then_explain() {
        let run = RunConfig { test_fraction: 0.2, ..Default::default() };
        let data = records(80);
        let docs = train_models(&data, &run, &[ModelKind::Gbt, ModelKind::Lasso]).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].metrics.n_test, 16);
        assert!(docs[0].metrics.train_r2 > 0.9);
        let text = metrics_block(&docs[1]);
        assert!(text.contains("model=lasso\n") && text.contains("coef_cnot="));

        let all = explain(&data, &docs[0], Subset::All).unwrap();
        assert_eq!(all.rows.len(), 80);
        assert!(all.max_residual <= 1e-9);
        let test = explain(&data, &docs[0], Subset::Test).unwrap();
        assert_eq!(test.rows, docs[0].test_rows);
        assert_eq!(explain(&data, &docs[0], Subset::Train).unwrap().rows.len(), 64);
        assert!(matches!(explain(&data, &docs[1], Subset::All), Err(PipelineError::NotGbt("lasso"))));
        assert!(matches!(explain(&data[..10], &docs[0], Subset::All), Err(PipelineError::SplitMismatch { .. })));
    }
}
