//! Regression models for KL expressibility from gate-count features.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math;

mod gbt;
mod lasso;

pub use gbt::{fit_gbt, GbtModel, GbtParams, Tree, TreeNode};
pub use lasso::{fit_lasso, lambda_grid, LassoModel, Penalty};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("no training data")]
    Empty,
    #[error("insufficient data: {0}")]
    Insufficient(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("expected {expected} features, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("test fraction {0} outside (0, 1)")]
    Fraction(f64),
    #[error("degenerate split: {test} test rows out of {total}")]
    DegenerateSplit { test: usize, total: usize },
    #[error("R² undefined for constant truth")]
    ConstantTruth,
    #[error("invalid hyperparameter: {0}")]
    Hyper(&'static str),
}

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_vec(data: Vec<f64>, n_cols: usize) -> Self {
        assert!(n_cols > 0 && data.len().is_multiple_of(n_cols), "data does not fill whole rows");
        Matrix { n_cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_cols = rows.first().map_or(1, |r| r.as_ref().len());
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::from_vec(data, n_cols)
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let data = idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Matrix { n_cols: self.n_cols, data }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Mean that is exact when all values are equal.
pub(crate) fn mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(first) = it.next() else { return 0.0 };
    let (mut sum, mut n) = (0.0, 1usize);
    for v in it {
        sum += v - first;
        n += 1;
    }
    first + sum / n as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub train_x: Matrix,
    pub train_y: Vec<f64>,
    pub test_x: Matrix,
    pub test_y: Vec<f64>,
}

/// Random hold-out split without replacement. The test set has
/// `floor(n · test_fraction)` rows; both sides must be non-empty.
pub fn train_test_split(x: &Matrix, y: &[f64], test_fraction: f64, seed: u64) -> Result<Split, LearnError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(LearnError::Fraction(test_fraction));
    }
    let n = x.n_rows();
    if y.len() != n {
        return Err(LearnError::Length(n, y.len()));
    }
    let n_test = math::floor(n as f64 * test_fraction) as usize;
    if n_test == 0 || n_test == n {
        return Err(LearnError::DegenerateSplit { test: n_test, total: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test_idx = idx[..n_test].to_vec();
    let mut train_idx = idx[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok(Split {
        train_x: x.select_rows(&train_idx),
        train_y: train_idx.iter().map(|&i| y[i]).collect(),
        test_x: x.select_rows(&test_idx),
        test_y: test_idx.iter().map(|&i| y[i]).collect(),
        train_idx,
        test_idx,
    })
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2(predictions: &[f64], truth: &[f64]) -> Result<f64, LearnError> {
    if predictions.len() != truth.len() {
        return Err(LearnError::Length(predictions.len(), truth.len()));
    }
    if truth.len() < 2 {
        return Err(LearnError::Insufficient("R² needs at least two points"));
    }
    let m = mean(truth.iter().copied());
    let ss_tot: f64 = truth.iter().map(|t| (t - m) * (t - m)).sum();
    if ss_tot == 0.0 {
        return Err(LearnError::ConstantTruth);
    }
    let ss_res: f64 = predictions.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mse(predictions: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len().max(1) as f64;
    predictions.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).sum::<f64>() / n
}
