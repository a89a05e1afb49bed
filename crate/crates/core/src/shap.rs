//! Exact Shapley attributions for boosted tree ensembles.
//!
//! Both explainers use the path-dependent value function: a feature in the
//! coalition routes the instance down its branch, while an absent feature
//! averages both children weighted by their training cover.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::learn::{GbtModel, Matrix, Tree, TreeNode};

/// Largest feature count accepted by [`brute_force_shap`].
pub const MAX_BRUTE_FORCE_FEATURES: usize = 12;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ShapError {
    #[error("expected {expected} features, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("tree {tree} node {node}: covers are missing or inconsistent")]
    Covers { tree: usize, node: usize },
    #[error("brute-force enumeration supports at most {max} features, model has {got}")]
    TooManyFeatures { got: usize, max: usize },
    #[error("no explanations to summarize")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub base_value: f64,
    pub phi: Vec<f64>,
    /// Row of the explained matrix, when explained in bulk.
    pub instance: Option<usize>,
}

impl ShapExplanation {
    /// `base_value + Σ phi`, which equals the model output.
    pub fn total(&self) -> f64 {
        self.base_value + self.phi.iter().sum::<f64>()
    }
}

fn check_covers(model: &GbtModel) -> Result<(), ShapError> {
    for (t, tree) in model.trees.iter().enumerate() {
        if tree.nodes.is_empty() {
            return Err(ShapError::Covers { tree: t, node: 0 });
        }
        for (i, node) in tree.nodes.iter().enumerate() {
            if let TreeNode::Internal { left, right, cover, .. } = *node {
                let ok = cover > 0
                    && left < tree.nodes.len()
                    && right < tree.nodes.len()
                    && tree.nodes[left].cover() + tree.nodes[right].cover() == cover;
                if !ok {
                    return Err(ShapError::Covers { tree: t, node: i });
                }
            }
        }
    }
    Ok(())
}

fn check_arity(model: &GbtModel, x: &[f64]) -> Result<(), ShapError> {
    if x.len() != model.n_features {
        return Err(ShapError::Arity { expected: model.n_features, got: x.len() });
    }
    Ok(())
}

/// `base_score + lr · Σ` cover-weighted tree expectations.
pub fn base_value(model: &GbtModel) -> f64 {
    model.base_score + model.learning_rate * model.trees.iter().map(Tree::expected_value).sum::<f64>()
}

#[derive(Clone, Copy, Debug)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

const NO_FEATURE: usize = usize::MAX;

fn extend_path(path: &mut [PathElement], depth: usize, zero_fraction: f64, one_fraction: f64, feature: usize) {
    path[depth] = PathElement { feature, zero_fraction, one_fraction, weight: if depth == 0 { 1.0 } else { 0.0 } };
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one_fraction * path[i].weight * (i + 1) as f64 / d1;
        path[i].weight = zero_fraction * path[i].weight * (depth - i) as f64 / d1;
    }
}

fn unwind_path(path: &mut [PathElement], depth: usize, index: usize) {
    let PathElement { zero_fraction: zero, one_fraction: one, .. } = path[index];
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * d1 / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let PathElement { zero_fraction: zero, one_fraction: one, .. } = path[index];
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (depth - i) as f64 / d1;
        } else if zero != 0.0 {
            total += path[i].weight / zero / ((depth - i) as f64 / d1);
        }
    }
    total
}

struct TreeExplainer<'a> {
    tree: &'a Tree,
    x: &'a [f64],
    phi: &'a mut [f64],
    /// Stack of path segments; each recursion level owns the tail.
    buffer: Vec<PathElement>,
}

impl TreeExplainer<'_> {
    fn recurse(&mut self, node: usize, parent: usize, depth: usize, zero: f64, one: f64, feature: usize) {
        let start = self.buffer.len();
        self.buffer.extend_from_within(parent..parent + depth);
        self.buffer.push(PathElement { feature: NO_FEATURE, zero_fraction: 0.0, one_fraction: 0.0, weight: 0.0 });
        extend_path(&mut self.buffer[start..], depth, zero, one, feature);
        let mut depth = depth;
        match self.tree.nodes[node] {
            TreeNode::Leaf { value, .. } => {
                let path = &self.buffer[start..];
                for i in 1..=depth {
                    let w = unwound_path_sum(path, depth, i);
                    self.phi[path[i].feature] += w * (path[i].one_fraction - path[i].zero_fraction) * value;
                }
            }
            TreeNode::Internal { feature: split, threshold, left, right, cover } => {
                let (hot, cold) = if self.x[split] <= threshold { (left, right) } else { (right, left) };
                let hot_zero = self.tree.nodes[hot].cover() as f64 / cover as f64;
                let cold_zero = self.tree.nodes[cold].cover() as f64 / cover as f64;
                let (mut incoming_zero, mut incoming_one) = (1.0, 1.0);
                if let Some(k) = (1..=depth).find(|&k| self.buffer[start + k].feature == split) {
                    incoming_zero = self.buffer[start + k].zero_fraction;
                    incoming_one = self.buffer[start + k].one_fraction;
                    unwind_path(&mut self.buffer[start..], depth, k);
                    depth -= 1;
                }
                self.recurse(hot, start, depth + 1, hot_zero * incoming_zero, incoming_one, split);
                self.recurse(cold, start, depth + 1, cold_zero * incoming_zero, 0.0, split);
            }
        }
        self.buffer.truncate(start);
    }
}

/// Path-dependent TreeSHAP over every tree, scaled by the learning rate.
pub fn tree_shap(model: &GbtModel, x: &[f64]) -> Result<ShapExplanation, ShapError> {
    check_arity(model, x)?;
    check_covers(model)?;
    Ok(explain_checked(model, x))
}

fn explain_checked(model: &GbtModel, x: &[f64]) -> ShapExplanation {
    let mut phi = vec![0.0; model.n_features];
    let mut tree_phi = vec![0.0; model.n_features];
    let mut buffer = Vec::new();
    for tree in &model.trees {
        tree_phi.iter_mut().for_each(|p| *p = 0.0);
        let mut explainer = TreeExplainer { tree, x, phi: &mut tree_phi, buffer: core::mem::take(&mut buffer) };
        explainer.recurse(0, 0, 0, 1.0, 1.0, NO_FEATURE);
        buffer = explainer.buffer;
        for (p, t) in phi.iter_mut().zip(&tree_phi) {
            *p += model.learning_rate * t;
        }
    }
    ShapExplanation { base_value: base_value(model), phi, instance: None }
}

/// Explains every row of `x`, tagging each explanation with its row index.
pub fn explain_rows(model: &GbtModel, x: &Matrix) -> Result<Vec<ShapExplanation>, ShapError> {
    if x.n_cols() != model.n_features {
        return Err(ShapError::Arity { expected: model.n_features, got: x.n_cols() });
    }
    check_covers(model)?;
    Ok(x
        .rows()
        .enumerate()
        .map(|(i, row)| ShapExplanation { instance: Some(i), ..explain_checked(model, row) })
        .collect())
}

/// Expected tree output when only the features in `coalition` (a bit mask)
/// are known.
fn tree_expectation(tree: &Tree, node: usize, x: &[f64], coalition: u32) -> f64 {
    match tree.nodes[node] {
        TreeNode::Leaf { value, .. } => value,
        TreeNode::Internal { feature, threshold, left, right, cover } => {
            if coalition & (1 << feature) != 0 {
                let next = if x[feature] <= threshold { left } else { right };
                tree_expectation(tree, next, x, coalition)
            } else {
                let wl = tree.nodes[left].cover() as f64;
                let wr = tree.nodes[right].cover() as f64;
                (wl * tree_expectation(tree, left, x, coalition) + wr * tree_expectation(tree, right, x, coalition))
                    / cover as f64
            }
        }
    }
}

/// Shapley values by enumerating all `2^M` coalitions.
pub fn brute_force_shap(model: &GbtModel, x: &[f64]) -> Result<ShapExplanation, ShapError> {
    let m = model.n_features;
    if m > MAX_BRUTE_FORCE_FEATURES {
        return Err(ShapError::TooManyFeatures { got: m, max: MAX_BRUTE_FORCE_FEATURES });
    }
    check_arity(model, x)?;
    check_covers(model)?;
    let value = |s: u32| -> f64 {
        model.base_score
            + model.learning_rate * model.trees.iter().map(|t| tree_expectation(t, 0, x, s)).sum::<f64>()
    };
    let values: Vec<f64> = (0..1u32 << m).map(value).collect();
    let mut factorial = vec![1.0; m + 1];
    for k in 1..=m {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        for s in 0..1u32 << m {
            if s & (1 << i) != 0 {
                continue;
            }
            let size = s.count_ones() as usize;
            let weight = factorial[size] * factorial[m - size - 1] / factorial[m];
            *p += weight * (values[(s | (1 << i)) as usize] - values[s as usize]);
        }
    }
    Ok(ShapExplanation { base_value: values[0], phi, instance: None })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub mean_abs_phi: f64,
    pub mean_phi: f64,
    /// `(normalized feature value, phi)` per explained instance.
    pub pairs: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    pub features: Vec<FeatureSummary>,
}

impl ShapSummary {
    /// Feature indices by decreasing mean |φ|.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.features.len()).collect();
        order.sort_by(|&a, &b| self.features[b].mean_abs_phi.total_cmp(&self.features[a].mean_abs_phi));
        order
    }
}

/// Per-feature mean |φ|, mean φ and value/φ pairs. `feature_values` holds
/// the normalized features of the explained rows, in the same order.
pub fn shap_summary(explanations: &[ShapExplanation], feature_values: &Matrix) -> Result<ShapSummary, ShapError> {
    let Some(first) = explanations.first() else { return Err(ShapError::Empty) };
    let m = first.phi.len();
    if feature_values.n_cols() != m {
        return Err(ShapError::Arity { expected: m, got: feature_values.n_cols() });
    }
    if feature_values.n_rows() != explanations.len() {
        return Err(ShapError::Arity { expected: explanations.len(), got: feature_values.n_rows() });
    }
    let n = explanations.len() as f64;
    let features = (0..m)
        .map(|j| {
            let pairs: Vec<(f64, f64)> =
                explanations.iter().zip(feature_values.rows()).map(|(e, row)| (row[j], e.phi[j])).collect();
            FeatureSummary {
                mean_abs_phi: pairs.iter().map(|(_, p)| p.abs()).sum::<f64>() / n,
                mean_phi: pairs.iter().map(|(_, p)| p).sum::<f64>() / n,
                pairs,
            }
        })
        .collect();
    Ok(ShapSummary { features })
}

/// Mean φ over the four value quartiles of one feature (ranked by value,
/// split into near-equal groups).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuartileMeans {
    pub means: [f64; 4],
}

impl QuartileMeans {
    /// The top step is smaller than the bottom step.
    pub fn is_flattening(&self) -> bool {
        let [q1, q2, q3, q4] = self.means;
        (q4 - q3).abs() < (q2 - q1).abs()
    }
}

/// Quartile means of `φ` against the feature value. `None` with fewer than
/// four pairs.
pub fn saturation_profile(pairs: &[(f64, f64)]) -> Option<QuartileMeans> {
    if pairs.len() < 4 {
        return None;
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    let means = core::array::from_fn(|q| {
        let group = &sorted[q * n / 4..(q + 1) * n / 4];
        group.iter().map(|(_, p)| p).sum::<f64>() / group.len() as f64
    });
    Some(QuartileMeans { means })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{fit_gbt, GbtParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(trees: Vec<Tree>, n_features: usize) -> GbtModel {
        GbtModel {
            base_score: 0.5,
            learning_rate: 0.1,
            trees,
            params: GbtParams::default(),
            n_features,
            scaling: None,
        }
    }

    fn stump(feature: usize) -> Tree {
        Tree {
            nodes: vec![
                TreeNode::Internal { feature, threshold: 0.5, left: 1, right: 2, cover: 10 },
                TreeNode::Leaf { value: -2.0, cover: 4 },
                TreeNode::Leaf { value: 3.0, cover: 6 },
            ],
        }
    }

    fn random_model(seed: u64, n_features: usize, n_rounds: usize) -> (GbtModel, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 200;
        let data: Vec<f64> = (0..n * n_features).map(|_| (rng.random_range(0..12u32) as f64) / 11.0).collect();
        let x = Matrix::from_vec(data, n_features);
        let y: Vec<f64> = x
            .rows()
            .map(|r| r[0] * r[1] - 0.5 * r[2 % n_features] + r.iter().sum::<f64>() * 0.1 + rng.random::<f64>() * 0.05)
            .collect();
        let p = GbtParams { n_rounds, max_leaves: 12, min_samples_leaf: 3, ..Default::default() };
        (fit_gbt(&x, &y, &p).unwrap(), x)
    }

    #[test]
    fn single_leaf_model() {
        let m = model(vec![Tree { nodes: vec![TreeNode::Leaf { value: 2.0, cover: 10 }] }], 3);
        let e = tree_shap(&m, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(e.phi, vec![0.0; 3]);
        assert_eq!(e.base_value, m.predict(&[0.1, 0.2, 0.3]).unwrap());
        assert_eq!(brute_force_shap(&m, &[0.1, 0.2, 0.3]).unwrap().phi, vec![0.0; 3]);
    }

    #[test]
    fn depth_one_tree() {
        let m = model(vec![stump(1)], 3);
        let expected = 0.4 * -2.0 + 0.6 * 3.0;
        for (x1, leaf) in [(0.2, -2.0), (0.9, 3.0)] {
            let e = tree_shap(&m, &[7.0, x1, 7.0]).unwrap();
            assert!((e.phi[1] - 0.1 * (leaf - expected)).abs() < 1e-15);
            assert_eq!((e.phi[0], e.phi[2]), (0.0, 0.0));
            assert!((e.base_value - (0.5 + 0.1 * expected)).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_features_share_credit() {
        let m = model(vec![stump(0), stump(1)], 2);
        for x in [[0.2, 0.2], [0.8, 0.8]] {
            let e = brute_force_shap(&m, &x).unwrap();
            assert!((e.phi[0] - e.phi[1]).abs() < 1e-15);
            let t = tree_shap(&m, &x).unwrap();
            assert!((t.phi[0] - t.phi[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn repeated_feature_on_a_path() {
        let tree = Tree {
            nodes: vec![
                TreeNode::Internal { feature: 0, threshold: 0.5, left: 1, right: 2, cover: 20 },
                TreeNode::Internal { feature: 1, threshold: 0.5, left: 3, right: 4, cover: 12 },
                TreeNode::Leaf { value: 1.0, cover: 8 },
                TreeNode::Internal { feature: 0, threshold: 0.2, left: 5, right: 6, cover: 7 },
                TreeNode::Leaf { value: -1.0, cover: 5 },
                TreeNode::Leaf { value: 4.0, cover: 3 },
                TreeNode::Leaf { value: 2.5, cover: 4 },
            ],
        };
        let m = model(vec![tree], 3);
        for x in [[0.1, 0.1, 0.0], [0.3, 0.1, 1.0], [0.3, 0.9, 0.0], [0.9, 0.1, 0.0]] {
            let a = tree_shap(&m, &x).unwrap();
            let b = brute_force_shap(&m, &x).unwrap();
            for j in 0..3 {
                assert!((a.phi[j] - b.phi[j]).abs() < 1e-14, "{x:?}: {:?} vs {:?}", a.phi, b.phi);
            }
            assert!((a.total() - m.predict(&x).unwrap()).abs() < 1e-14);
            assert_eq!(a.phi[2], 0.0);
        }
    }

    #[test]
    fn agrees_with_brute_force_on_trained_models() {
        for seed in 0..4 {
            let (m, x) = random_model(seed, 6, 30);
            for row in x.rows().take(25) {
                let a = tree_shap(&m, row).unwrap();
                let b = brute_force_shap(&m, row).unwrap();
                assert!((a.base_value - b.base_value).abs() < 1e-12);
                for j in 0..6 {
                    assert!((a.phi[j] - b.phi[j]).abs() < 1e-10);
                }
                assert!((a.total() - m.predict(row).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unused_features_get_exact_zero() {
        let (m, x) = random_model(7, 6, 20);
        let used: Vec<bool> = (0..6).map(|j| m.trees.iter().any(|t| t.split_features().any(|f| f == j))).collect();
        for e in explain_rows(&m, &x).unwrap() {
            for (j, &u) in used.iter().enumerate() {
                if !u {
                    assert_eq!(e.phi[j], 0.0);
                }
            }
        }
    }

    #[test]
    fn base_value_is_training_mean_prediction() {
        let (m, x) = random_model(8, 4, 25);
        let preds = m.predict_batch(&x).unwrap();
        let mean = preds.iter().sum::<f64>() / preds.len() as f64;
        assert!((base_value(&m) - mean).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let m = model(vec![stump(0)], 13);
        assert_eq!(
            brute_force_shap(&m, &[0.0; 13]),
            Err(ShapError::TooManyFeatures { got: 13, max: MAX_BRUTE_FORCE_FEATURES })
        );
        assert_eq!(tree_shap(&m, &[0.0; 2]), Err(ShapError::Arity { expected: 13, got: 2 }));
        let mut bad = stump(0);
        bad.nodes[1] = TreeNode::Leaf { value: 1.0, cover: 1 };
        assert_eq!(tree_shap(&model(vec![bad], 1), &[0.0]), Err(ShapError::Covers { tree: 0, node: 0 }));
        assert_eq!(shap_summary(&[], &Matrix::from_vec(vec![], 1)), Err(ShapError::Empty));
    }

    #[test]
    fn summary_statistics() {
        let e = ShapExplanation { base_value: 1.0, phi: vec![-0.5, 0.25], instance: Some(0) };
        let s = shap_summary(core::slice::from_ref(&e), &Matrix::from_vec(vec![0.1, 0.9], 2)).unwrap();
        assert_eq!(s.features[0].mean_abs_phi, 0.5);
        assert_eq!(s.features[0].mean_phi, -0.5);
        assert_eq!(s.features[1].pairs, vec![(0.9, 0.25)]);
        assert_eq!(s.ranking(), vec![0, 1]);

        let (m, x) = random_model(9, 3, 10);
        let s = shap_summary(&explain_rows(&m, &x).unwrap(), &x).unwrap();
        for f in &s.features {
            assert!(f.mean_abs_phi >= f.mean_phi.abs());
        }
    }

    #[test]
    fn saturation_profile_quartiles() {
        let pairs: Vec<(f64, f64)> = (0..8).map(|i| (i as f64, [0.0, 0.0, 1.0, 1.0, 1.5, 1.5, 1.6, 1.6][i])).collect();
        let q = saturation_profile(&pairs).unwrap();
        assert_eq!(q.means, [0.0, 1.0, 1.5, 1.6]);
        assert!(q.is_flattening());
        assert!(saturation_profile(&pairs[..3]).is_none());
    }
}
