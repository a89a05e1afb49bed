//! L1-regularized least squares by cyclic coordinate descent on
//! standardized features.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mean, mse, LearnError, Matrix};
use crate::math;

const TOLERANCE: f64 = 1e-8;
const MAX_SWEEPS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Penalty {
    Fixed(f64),
    /// K-fold cross-validation over `grid`; ties prefer the larger penalty.
    CrossValidated { grid: Vec<f64>, folds: usize, seed: u64 },
}

/// Minimizes `(1/2n)‖y − Xw‖² + λ‖w‖₁` in standardized coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub intercept: f64,
    /// Weights on standardized features; zero for constant columns.
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// `(λ, mean validation MSE)` for every grid point when cross-validated.
    pub cv_path: Vec<(f64, f64)>,
}

impl LassoModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnError> {
        if x.len() != self.weights.len() {
            return Err(LearnError::Arity { expected: self.weights.len(), got: x.len() });
        }
        let mut out = self.intercept;
        for (j, v) in x.iter().enumerate() {
            if self.stds[j] > 0.0 {
                out += self.weights[j] * (v - self.means[j]) / self.stds[j];
            }
        }
        Ok(out)
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>, LearnError> {
        x.rows().map(|r| self.predict(r)).collect()
    }

    /// Weights expressed on the original feature scale.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.stds)
            .map(|(w, s)| if *s > 0.0 { w / s } else { 0.0 })
            .collect()
    }
}

struct Standardized {
    /// Column-major standardized features.
    columns: Vec<Vec<f64>>,
    means: Vec<f64>,
    stds: Vec<f64>,
    y_mean: f64,
    y_centered: Vec<f64>,
}

fn standardize(x: &Matrix, y: &[f64]) -> Standardized {
    let n = x.n_rows() as f64;
    let mut columns = Vec::with_capacity(x.n_cols());
    let mut means = Vec::with_capacity(x.n_cols());
    let mut stds = Vec::with_capacity(x.n_cols());
    for j in 0..x.n_cols() {
        let col = x.column(j);
        let m = mean(col.iter().copied());
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let s = math::sqrt(var);
        let s = if s > 1e-12 * (1.0 + math::abs(m)) { s } else { 0.0 };
        columns.push(if s > 0.0 { col.iter().map(|v| (v - m) / s).collect() } else { vec![0.0; col.len()] });
        means.push(m);
        stds.push(s);
    }
    let y_mean = mean(y.iter().copied());
    Standardized { columns, means, stds, y_mean, y_centered: y.iter().map(|v| v - y_mean).collect() }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn coordinate_descent(s: &Standardized, lambda: f64, mut w: Vec<f64>) -> Vec<f64> {
    let n = s.y_centered.len() as f64;
    let mut residual = s.y_centered.clone();
    for (j, col) in s.columns.iter().enumerate() {
        if w[j] != 0.0 {
            residual.iter_mut().zip(col).for_each(|(r, z)| *r -= z * w[j]);
        }
    }
    for _ in 0..MAX_SWEEPS {
        let mut max_delta: f64 = 0.0;
        for (j, col) in s.columns.iter().enumerate() {
            if s.stds[j] == 0.0 {
                continue;
            }
            let rho = col.iter().zip(&residual).map(|(z, r)| z * r).sum::<f64>() / n + w[j];
            let updated = soft_threshold(rho, lambda);
            let delta = updated - w[j];
            if delta != 0.0 {
                residual.iter_mut().zip(col).for_each(|(r, z)| *r -= z * delta);
                w[j] = updated;
                max_delta = max_delta.max(math::abs(delta));
            }
        }
        if max_delta < TOLERANCE {
            break;
        }
    }
    w
}

fn check_inputs(x: &Matrix, y: &[f64]) -> Result<(), LearnError> {
    if x.n_rows() == 0 {
        return Err(LearnError::Empty);
    }
    if y.len() != x.n_rows() {
        return Err(LearnError::Length(x.n_rows(), y.len()));
    }
    if !x.all_finite() {
        return Err(LearnError::NonFinite("features"));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(LearnError::NonFinite("targets"));
    }
    Ok(())
}

fn fit_fixed(x: &Matrix, y: &[f64], lambda: f64) -> LassoModel {
    let s = standardize(x, y);
    let weights = coordinate_descent(&s, lambda, vec![0.0; x.n_cols()]);
    LassoModel { intercept: s.y_mean, weights, lambda, means: s.means, stds: s.stds, cv_path: Vec::new() }
}

/// Geometric grid of `count` penalties from the smallest λ that zeroes every
/// weight down to `ratio` times that value.
pub fn lambda_grid(x: &Matrix, y: &[f64], count: usize, ratio: f64) -> Result<Vec<f64>, LearnError> {
    check_inputs(x, y)?;
    if count < 1 || !(ratio > 0.0 && ratio < 1.0) {
        return Err(LearnError::Hyper("grid needs count >= 1 and ratio in (0, 1)"));
    }
    let s = standardize(x, y);
    let n = y.len() as f64;
    let lambda_max = s
        .columns
        .iter()
        .map(|c| math::abs(c.iter().zip(&s.y_centered).map(|(z, r)| z * r).sum::<f64>() / n))
        .fold(0.0, f64::max);
    if lambda_max == 0.0 {
        return Ok(vec![0.0]);
    }
    if count == 1 {
        return Ok(vec![lambda_max]);
    }
    let step = math::ln(ratio) / (count - 1) as f64;
    Ok((0..count).map(|k| lambda_max * math::exp(step * k as f64)).collect())
}

pub fn fit_lasso(x: &Matrix, y: &[f64], penalty: &Penalty) -> Result<LassoModel, LearnError> {
    check_inputs(x, y)?;
    match penalty {
        Penalty::Fixed(lambda) => {
            if !(*lambda >= 0.0 && lambda.is_finite()) {
                return Err(LearnError::Hyper("lambda must be finite and non-negative"));
            }
            Ok(fit_fixed(x, y, *lambda))
        }
        Penalty::CrossValidated { grid, folds, seed } => {
            if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                return Err(LearnError::Hyper("lambda grid must be non-empty and non-negative"));
            }
            let n = x.n_rows();
            if *folds < 2 || n < *folds {
                return Err(LearnError::Insufficient("fewer rows than cross-validation folds"));
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let mut path: Vec<(f64, f64)> = grid.iter().map(|&l| (l, 0.0)).collect();
            for k in 0..*folds {
                let (lo, hi) = (k * n / folds, (k + 1) * n / folds);
                let mut held: Vec<usize> = idx[lo..hi].to_vec();
                let mut kept: Vec<usize> = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
                held.sort_unstable();
                kept.sort_unstable();
                let train_x = x.select_rows(&kept);
                let train_y: Vec<f64> = kept.iter().map(|&i| y[i]).collect();
                let val_x = x.select_rows(&held);
                let val_y: Vec<f64> = held.iter().map(|&i| y[i]).collect();
                let s = standardize(&train_x, &train_y);
                let mut warm = vec![0.0; x.n_cols()];
                // Visit penalties from largest to smallest so each fit warm-starts.
                let mut order: Vec<usize> = (0..grid.len()).collect();
                order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
                for g in order {
                    warm = coordinate_descent(&s, grid[g], warm);
                    let model = LassoModel {
                        intercept: s.y_mean,
                        weights: warm.clone(),
                        lambda: grid[g],
                        means: s.means.clone(),
                        stds: s.stds.clone(),
                        cv_path: Vec::new(),
                    };
                    let pred = model.predict_batch(&val_x)?;
                    path[g].1 += mse(&pred, &val_y) / *folds as f64;
                }
            }
            let best = path
                .iter()
                .copied()
                .fold(None, |best: Option<(f64, f64)>, (l, e)| match best {
                    Some((bl, be)) if be < e || (be == e && bl >= l) => best,
                    _ => Some((l, e)),
                })
                .expect("non-empty grid");
            let mut model = fit_fixed(x, y, best.0);
            model.cv_path = path;
            Ok(model)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::Rng;

    fn synthetic(n: usize, p: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coef: Vec<f64> = (0..p).map(|j| if j % 2 == 0 { (j + 1) as f64 } else { 0.0 }).collect();
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 4.0 - 1.0).collect();
            y.push(0.5 + row.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>() + 0.1 * rng.random::<f64>());
            data.extend(row);
        }
        (Matrix::from_vec(data, p), y)
    }

    #[test]
    fn huge_penalty_gives_mean() {
        let (x, y) = synthetic(40, 4, 1);
        let m = fit_lasso(&x, &y, &Penalty::Fixed(1e6)).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
        assert_eq!(m.predict(x.row(0)).unwrap(), mean(y.iter().copied()));
    }

    #[test]
    fn zero_penalty_matches_least_squares() {
        let (x, y) = synthetic(60, 4, 2);
        let m = fit_lasso(&x, &y, &Penalty::Fixed(0.0)).unwrap();
        let design = DMatrix::from_fn(60, 5, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) });
        let target = DVector::from_column_slice(&y);
        let beta = (design.transpose() * &design).lu().solve(&(design.transpose() * target)).unwrap();
        for i in 0..60 {
            let ols = beta[0] + (0..4).map(|j| beta[j + 1] * x.get(i, j)).sum::<f64>();
            assert!((m.predict(x.row(i)).unwrap() - ols).abs() < 1e-6);
        }
        let raw = m.raw_coefficients();
        for j in 0..4 {
            assert!((raw[j] - beta[j + 1]).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_column_gets_zero_weight() {
        let (x, y) = synthetic(30, 2, 3);
        let data: Vec<f64> = x.rows().flat_map(|r| [r[0], 7.0, r[1]]).collect();
        let m = fit_lasso(&Matrix::from_vec(data, 3), &y, &Penalty::Fixed(0.01)).unwrap();
        assert_eq!(m.weights[1], 0.0);
        assert_eq!(m.stds[1], 0.0);
    }

    #[test]
    fn duplicated_column_converges() {
        let (x, y) = synthetic(50, 2, 4);
        let data: Vec<f64> = x.rows().flat_map(|r| [r[0], r[0], r[1]]).collect();
        let dup = Matrix::from_vec(data, 3);
        let a = fit_lasso(&x, &y, &Penalty::Fixed(0.05)).unwrap();
        let b = fit_lasso(&dup, &y, &Penalty::Fixed(0.05)).unwrap();
        assert!((b.weights[0] + b.weights[1] - a.weights[0]).abs() < 1e-6);
        for i in 0..50 {
            assert!((a.predict(x.row(i)).unwrap() - b.predict(dup.row(i)).unwrap()).abs() < 1e-6);
        }
    }

    fn kkt_violation(x: &Matrix, y: &[f64], m: &LassoModel) -> f64 {
        let s = standardize(x, y);
        let n = y.len() as f64;
        let residual: Vec<f64> = (0..y.len())
            .map(|i| s.y_centered[i] - s.columns.iter().zip(&m.weights).map(|(c, w)| c[i] * w).sum::<f64>())
            .collect();
        let mut worst: f64 = 0.0;
        for (j, col) in s.columns.iter().enumerate() {
            let g = col.iter().zip(&residual).map(|(z, r)| z * r).sum::<f64>() / n;
            let v = if m.weights[j] == 0.0 {
                (g.abs() - m.lambda).max(0.0)
            } else {
                (g - m.lambda * m.weights[j].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    #[test]
    fn grid_and_cross_validation() {
        let (x, y) = synthetic(100, 6, 5);
        let grid = lambda_grid(&x, &y, 30, 1e-4).unwrap();
        assert_eq!(grid.len(), 30);
        assert!(grid.windows(2).all(|w| w[0] > w[1]));
        let top = fit_lasso(&x, &y, &Penalty::Fixed(grid[0])).unwrap();
        assert!(top.weights.iter().all(|w| w.abs() < 1e-12));
        let cv = fit_lasso(&x, &y, &Penalty::CrossValidated { grid: grid.clone(), folds: 5, seed: 1 }).unwrap();
        assert_eq!(cv.cv_path.len(), 30);
        assert!(cv.lambda < grid[0]);
        assert!(kkt_violation(&x, &y, &cv) < 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        let (x, y) = synthetic(10, 2, 6);
        assert!(matches!(fit_lasso(&x, &y, &Penalty::Fixed(-1.0)), Err(LearnError::Hyper(_))));
        assert_eq!(fit_lasso(&x, &y[..3], &Penalty::Fixed(0.1)), Err(LearnError::Length(10, 3)));
        let cv = Penalty::CrossValidated { grid: vec![0.1], folds: 20, seed: 0 };
        assert!(matches!(fit_lasso(&x, &y, &cv), Err(LearnError::Insufficient(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn kkt_conditions_hold(seed in 0u64..1000, lambda in 0.0f64..3.0) {
            let (x, y) = synthetic(40, 5, seed);
            let m = fit_lasso(&x, &y, &Penalty::Fixed(lambda)).unwrap();
            prop_assert!(kkt_violation(&x, &y, &m) < 1e-6);
        }
    }
}
