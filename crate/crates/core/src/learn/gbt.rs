//! Least-squares gradient boosting with leaf-wise trees and exact splits.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{mean, LearnError, Matrix};
use crate::dataset::MinMaxScaling;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams { n_rounds: 200, learning_rate: 0.1, max_leaves: 31, min_samples_leaf: 5 }
    }
}

impl GbtParams {
    fn validate(&self) -> Result<(), LearnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearnError::Hyper("learning_rate must be positive"));
        }
        if self.max_leaves < 1 {
            return Err(LearnError::Hyper("max_leaves must be at least 1"));
        }
        if self.min_samples_leaf < 1 {
            return Err(LearnError::Hyper("min_samples_leaf must be at least 1"));
        }
        Ok(())
    }
}

/// Arena node. Rows with `x[feature] <= threshold` go left. `cover` is the
/// number of training rows that reached the node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal { feature: usize, threshold: f64, left: usize, right: usize, cover: usize },
    Leaf { value: f64, cover: usize },
}

impl TreeNode {
    pub fn cover(&self) -> usize {
        match *self {
            TreeNode::Internal { cover, .. } | TreeNode::Leaf { cover, .. } => cover,
        }
    }
}

/// Regression tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value, .. } => return value,
                TreeNode::Internal { feature, threshold, left, right, .. } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// Cover-weighted mean of the leaf values.
    pub fn expected_value(&self) -> f64 {
        let root = self.nodes[0].cover() as f64;
        self.nodes
            .iter()
            .filter_map(|n| match *n {
                TreeNode::Leaf { value, cover } => Some(value * cover as f64 / root),
                _ => None,
            })
            .sum()
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            TreeNode::Internal { feature, .. } => Some(feature),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub params: GbtParams,
    pub n_features: usize,
    /// Scaling applied to raw features before they reach the trees.
    pub scaling: Option<MinMaxScaling>,
}

impl GbtModel {
    /// `base_score + lr · Σ tree(x)` for already-scaled features.
    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnError> {
        self.predict_with_trees(x, self.trees.len())
    }

    /// Prediction using only the first `n_trees` trees.
    pub fn predict_with_trees(&self, x: &[f64], n_trees: usize) -> Result<f64, LearnError> {
        if x.len() != self.n_features {
            return Err(LearnError::Arity { expected: self.n_features, got: x.len() });
        }
        let sum: f64 = self.trees[..n_trees.min(self.trees.len())].iter().map(|t| t.predict(x)).sum();
        Ok(self.base_score + self.learning_rate * sum)
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>, LearnError> {
        x.rows().map(|r| self.predict(r)).collect()
    }

    /// Applies the stored scaling to raw features, then predicts.
    pub fn predict_raw(&self, raw: &[f64]) -> Result<f64, LearnError> {
        match &self.scaling {
            Some(s) if s.n_features() == raw.len() => self.predict(&s.transform(raw)),
            Some(s) => Err(LearnError::Arity { expected: s.n_features(), got: raw.len() }),
            None => self.predict(raw),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Best variance-reduction split of `rows`. Ties keep the lowest feature,
/// then the lowest threshold.
fn best_split(x: &Matrix, residual: &[f64], rows: &[usize], min_leaf: usize) -> Option<SplitCandidate> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = rows.iter().map(|&i| residual[i]).sum();
    let parent = total * total / n as f64;
    let mut best: Option<SplitCandidate> = None;
    let mut order = rows.to_vec();
    for feature in 0..x.n_cols() {
        order.sort_by(|&a, &b| x.get(a, feature).total_cmp(&x.get(b, feature)).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for k in 1..n {
            left_sum += residual[order[k - 1]];
            if k < min_leaf || n - k < min_leaf {
                continue;
            }
            let lo = x.get(order[k - 1], feature);
            let hi = x.get(order[k], feature);
            if lo == hi {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64 - parent;
            if gain > best.map_or(0.0, |b| b.gain) {
                best = Some(SplitCandidate { gain, feature, threshold: lo + (hi - lo) / 2.0 });
            }
        }
    }
    best
}

/// Grows one tree on `residual`, expanding the leaf with the largest gain
/// until `max_leaves` is reached or no split improves the fit.
fn grow_tree(x: &Matrix, residual: &[f64], params: &GbtParams) -> Tree {
    let all: Vec<usize> = (0..x.n_rows()).collect();
    let leaf = |rows: &[usize]| TreeNode::Leaf { value: mean(rows.iter().map(|&i| residual[i])), cover: rows.len() };
    let mut nodes = vec![leaf(&all)];
    // (node index, rows, best split)
    let mut open = vec![(0usize, best_split(x, residual, &all, params.min_samples_leaf), all)];
    let mut n_leaves = 1;
    while n_leaves < params.max_leaves {
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(k, (_, s, _))| s.map(|s| (k, s.gain)))
            .fold(None, |best: Option<(usize, f64)>, (k, g)| match best {
                Some((_, bg)) if bg >= g => best,
                _ => Some((k, g)),
            });
        let Some((k, _)) = pick else { break };
        let (node, split, rows) = open.swap_remove(k);
        let split = split.expect("picked a splittable leaf");
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| x.get(i, split.feature) <= split.threshold);
        let left = nodes.len();
        nodes.push(leaf(&left_rows));
        nodes.push(leaf(&right_rows));
        nodes[node] = TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right: left + 1,
            cover: rows.len(),
        };
        open.push((left, best_split(x, residual, &left_rows, params.min_samples_leaf), left_rows));
        open.push((left + 1, best_split(x, residual, &right_rows, params.min_samples_leaf), right_rows));
        // Keep expansion order independent of swap_remove.
        open.sort_by_key(|(node, _, _)| *node);
        n_leaves += 1;
    }
    Tree { nodes }
}

/// Stagewise least-squares boosting: each round fits a tree to the current
/// residuals and adds `learning_rate` times its output.
pub fn fit_gbt(x: &Matrix, y: &[f64], params: &GbtParams) -> Result<GbtModel, LearnError> {
    params.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(LearnError::Empty);
    }
    if y.len() != n {
        return Err(LearnError::Length(n, y.len()));
    }
    if n < params.min_samples_leaf {
        return Err(LearnError::Insufficient("fewer rows than min_samples_leaf"));
    }
    if !x.all_finite() {
        return Err(LearnError::NonFinite("features"));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(LearnError::NonFinite("targets"));
    }
    let base_score = mean(y.iter().copied());
    let mut pred = vec![base_score; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let tree = grow_tree(x, &residual, params);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict(x.row(i));
        }
        trees.push(tree);
    }
    Ok(GbtModel {
        base_score,
        learning_rate: params.learning_rate,
        trees,
        params: *params,
        n_features: x.n_cols(),
        scaling: None,
    })
}
