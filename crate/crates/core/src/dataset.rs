//! The instance grid, expressibility records, and the tables derived from
//! them (features, gate-count correlations, KL histograms).

use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::catalog::{decompose, gate_counts, instantiate, CatalogError, CircuitTemplate, GateCounts};
use crate::circuit::CircuitInstance;
use crate::expressibility::{ExpressibilityEstimate, SamplingConfig};
use crate::gate::GateKind;
use crate::learn::Matrix;
use crate::math;

/// Model features: the elementary kinds minus FRZ, which carries no
/// parameter and tracks RY almost perfectly.
pub const FEATURE_KINDS: [GateKind; 6] =
    [GateKind::Rx, GateKind::Ry, GateKind::Rz, GateKind::H, GateKind::Cnot, GateKind::Cz];

/// Columns of the gate-count tables, FRZ included.
pub const COUNT_KINDS: [GateKind; 7] = GateKind::ELEMENTARY;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("invalid grid filter: {0}")]
    Filter(&'static str),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPoint {
    pub template_id: u32,
    pub n_qubits: usize,
    pub n_layers: usize,
}

/// Selects grid points. Layers above `max_layers` are always dropped; with
/// `param_cap` set, instances with more than `2^n` parameters are too.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridFilter {
    pub qubits: RangeInclusive<usize>,
    pub layers: RangeInclusive<usize>,
    pub max_layers: usize,
    pub param_cap: bool,
}

impl Default for GridFilter {
    fn default() -> Self {
        GridFilter { qubits: 2..=18, layers: 1..=5, max_layers: 5, param_cap: false }
    }
}

impl GridFilter {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.qubits.is_empty() {
            return Err(DatasetError::Filter("qubit range is empty"));
        }
        if self.layers.is_empty() {
            return Err(DatasetError::Filter("layer range is empty"));
        }
        if *self.layers.start() == 0 {
            return Err(DatasetError::Filter("layers start at 1"));
        }
        Ok(())
    }

    /// Whether an instance with these dimensions passes the filter.
    pub fn admits(&self, n_qubits: usize, n_layers: usize, n_params: usize) -> bool {
        self.qubits.contains(&n_qubits)
            && self.layers.contains(&n_layers)
            && n_layers <= self.max_layers
            && (!self.param_cap || n_qubits >= usize::BITS as usize || n_params <= 1usize << n_qubits)
    }
}

/// Cartesian product of templates × qubits × layers, ascending in that
/// order, minus entries rejected by `filter`.
pub fn enumerate_grid(templates: &[CircuitTemplate], filter: &GridFilter) -> Result<Vec<GridPoint>, DatasetError> {
    filter.validate()?;
    let mut sorted: Vec<&CircuitTemplate> = templates.iter().collect();
    sorted.sort_by_key(|t| t.id);
    let mut out = Vec::new();
    for t in sorted {
        for n in filter.qubits.clone() {
            for l in filter.layers.clone() {
                if l > filter.max_layers {
                    continue;
                }
                let n_params = if filter.param_cap { instantiate(t, n, l)?.n_params() } else { 0 };
                if filter.admits(n, l, n_params) {
                    out.push(GridPoint { template_id: t.id, n_qubits: n, n_layers: l });
                }
            }
        }
    }
    Ok(out)
}

/// Elementary gate counts in [`COUNT_KINDS`] order.
pub type ElementaryCounts = [usize; 7];

pub fn elementary_counts(counts: &GateCounts) -> ElementaryCounts {
    COUNT_KINDS.map(|k| counts[k])
}

/// One dataset row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpressibilityRecord {
    pub template_id: u32,
    pub n_qubits: usize,
    pub n_layers: usize,
    /// Decomposed counts, [`COUNT_KINDS`] order.
    pub counts: ElementaryCounts,
    pub n_params: usize,
    pub kl_mean: f64,
    pub kl_std: f64,
    pub config: SamplingConfig,
}

impl ExpressibilityRecord {
    /// Builds a row from a decomposed instance and its estimate.
    pub fn new(decomposed: &CircuitInstance, estimate: &ExpressibilityEstimate) -> Self {
        ExpressibilityRecord {
            template_id: decomposed.template_id,
            n_qubits: decomposed.n_qubits,
            n_layers: decomposed.n_layers,
            counts: elementary_counts(&gate_counts(decomposed)),
            n_params: decomposed.n_params(),
            kl_mean: estimate.mean_kl,
            kl_std: estimate.std_kl,
            config: estimate.config,
        }
    }

    pub fn point(&self) -> GridPoint {
        GridPoint { template_id: self.template_id, n_qubits: self.n_qubits, n_layers: self.n_layers }
    }

    pub fn count(&self, kind: GateKind) -> usize {
        COUNT_KINDS.iter().position(|&k| k == kind).map_or(0, |i| self.counts[i])
    }

    pub fn features(&self) -> [f64; 6] {
        FEATURE_KINDS.map(|k| self.count(k) as f64)
    }
}

/// Decomposed instance for a grid point.
pub fn grid_instance(template: &CircuitTemplate, point: &GridPoint) -> Result<CircuitInstance, CatalogError> {
    Ok(decompose(&instantiate(template, point.n_qubits, point.n_layers)?))
}

/// Per-feature min-max scaling to `[0, 1]`. Constant features map to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Features that were constant over the fitted rows.
    pub constant: Vec<bool>,
}

impl MinMaxScaling {
    pub fn fit(rows: &[[f64; 6]]) -> Self {
        let mut min = vec![f64::INFINITY; 6];
        let mut max = vec![f64::NEG_INFINITY; 6];
        for r in rows {
            for j in 0..6 {
                min[j] = min[j].min(r[j]);
                max[j] = max[j].max(r[j]);
            }
        }
        let constant = min.iter().zip(&max).map(|(a, b)| a == b).collect();
        MinMaxScaling { min, max, constant }
    }

    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    pub fn scale(&self, j: usize, value: f64) -> f64 {
        if self.constant[j] {
            0.0
        } else {
            (value - self.min[j]) / (self.max[j] - self.min[j])
        }
    }

    pub fn transform(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().enumerate().map(|(j, &v)| self.scale(j, v)).collect()
    }

    /// Raw feature value for a scaled one.
    pub fn inverse(&self, j: usize, scaled: f64) -> f64 {
        self.min[j] + scaled * (self.max[j] - self.min[j])
    }

    pub fn any_constant(&self) -> bool {
        self.constant.iter().any(|&c| c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    /// Scaled features, [`FEATURE_KINDS`] order.
    pub x: Matrix,
    /// Mean KL expressibility per record.
    pub y: Vec<f64>,
    pub scaling: MinMaxScaling,
}

/// Min-max scaled gate counts of the six model features and the KL targets.
pub fn feature_matrix(records: &[ExpressibilityRecord]) -> Result<FeatureMatrix, DatasetError> {
    if records.len() < 2 {
        return Err(DatasetError::TooFewRecords { needed: 2, got: records.len() });
    }
    let raw: Vec<[f64; 6]> = records.iter().map(ExpressibilityRecord::features).collect();
    let scaling = MinMaxScaling::fit(&raw);
    let data = raw.iter().flat_map(|r| scaling.transform(r)).collect();
    Ok(FeatureMatrix {
        x: Matrix::from_vec(data, 6),
        y: records.iter().map(|r| r.kl_mean).collect(),
        scaling,
    })
}

/// Pearson correlation; `None` when either column has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs[..n].iter().zip(&ys[..n]) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Symmetric 7×7 matrix over [`COUNT_KINDS`]; `None` marks entries that are
/// undefined because a column is constant.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    pub entries: [[Option<f64>; 7]; 7],
}

impl CorrelationMatrix {
    pub fn get(&self, a: GateKind, b: GateKind) -> Option<f64> {
        let i = COUNT_KINDS.iter().position(|&k| k == a)?;
        let j = COUNT_KINDS.iter().position(|&k| k == b)?;
        self.entries[i][j]
    }
}

pub fn correlation_from_counts(rows: &[ElementaryCounts]) -> Result<CorrelationMatrix, DatasetError> {
    if rows.len() < 3 {
        return Err(DatasetError::TooFewRecords { needed: 3, got: rows.len() });
    }
    let cols: Vec<Vec<f64>> = (0..7).map(|j| rows.iter().map(|r| r[j] as f64).collect()).collect();
    let mut entries = [[None; 7]; 7];
    for i in 0..7 {
        for j in i..7 {
            let r = if i == j {
                pearson(&cols[i], &cols[i]).map(|_| 1.0)
            } else {
                pearson(&cols[i], &cols[j])
            };
            entries[i][j] = r;
            entries[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { entries })
}

pub fn correlation_matrix(records: &[ExpressibilityRecord]) -> Result<CorrelationMatrix, DatasetError> {
    let rows: Vec<ElementaryCounts> = records.iter().map(|r| r.counts).collect();
    correlation_from_counts(&rows)
}

/// Counts of `kl_mean` in bins `[k·w, (k+1)·w)` for one filter variant.
#[derive(Clone, Debug, PartialEq)]
pub struct KlHistogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

/// One histogram per variant, all sharing the same bin range so they can be
/// compared bin by bin.
pub fn expressibility_histogram(
    records: &[ExpressibilityRecord],
    bin_width: f64,
    variants: &[GridFilter],
) -> Vec<KlHistogram> {
    assert!(bin_width > 0.0, "bin width must be positive");
    let bin = |kl: f64| math::floor(kl.max(0.0) / bin_width) as usize;
    let n_bins = records.iter().map(|r| bin(r.kl_mean) + 1).max().unwrap_or(0);
    variants
        .iter()
        .map(|f| {
            let mut counts = vec![0; n_bins];
            for r in records.iter().filter(|r| f.admits(r.n_qubits, r.n_layers, r.n_params)) {
                counts[bin(r.kl_mean)] += 1;
            }
            KlHistogram { bin_width, counts }
        })
        .collect()
}
