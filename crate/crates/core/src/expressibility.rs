//! KL expressibility: the divergence between a circuit's pairwise fidelity
//! histogram and the Haar fidelity distribution `P(F) = (N-1)(1-F)^(N-2)`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitInstance;
use crate::math;
use crate::rng::StreamKey;
use crate::state::{fidelity, SimError, StateVector};

/// Lower bound applied to Haar bin masses before they are used as a KL
/// denominator. Large registers push almost all Haar mass into the first
/// bins and the rest underflows.
pub const HAAR_MASS_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("invalid sampling config: {0}")]
    Config(&'static str),
    #[error("bin {index} out of range for {n_bins} bins")]
    BinOutOfRange { index: usize, n_bins: usize },
    #[error("histogram has {0} bins but reference has {1}")]
    BinMismatch(usize, usize),
    #[error("instance still contains controlled rotations; decompose it first")]
    NotDecomposed,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Fidelity pairs per repetition.
    pub n_pairs: usize,
    pub n_bins: usize,
    pub n_repetitions: usize,
    pub master_seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { n_pairs: 20_000, n_bins: 75, n_repetitions: 10, master_seed: 0 }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), ExprError> {
        if self.n_pairs == 0 {
            return Err(ExprError::Config("n_pairs must be at least 1"));
        }
        if self.n_bins < 2 {
            return Err(ExprError::Config("n_bins must be at least 2"));
        }
        if self.n_repetitions == 0 {
            return Err(ExprError::Config("n_repetitions must be at least 1"));
        }
        Ok(())
    }

    /// Stream key of repetition `rep` for `instance`.
    pub fn stream_key(&self, instance: &CircuitInstance, rep: usize) -> StreamKey {
        StreamKey::new(self.master_seed, instance.template_id, instance.n_qubits, instance.n_layers, rep)
    }
}

/// `(1-F)^(N-1)`, the Haar survival function at `F`.
fn haar_survival_log(dim_minus_one: f64, f: f64) -> f64 {
    dim_minus_one * math::log1p(-f)
}

/// Haar probability of a fidelity landing in bin `bin_index` of `n_bins`
/// uniform bins on `[0, 1]`: `(1-a)^(N-1) - (1-b)^(N-1)` with `N = 2^n`.
pub fn haar_bin_mass(n_qubits: usize, bin_index: usize, n_bins: usize) -> Result<f64, ExprError> {
    if bin_index >= n_bins {
        return Err(ExprError::BinOutOfRange { index: bin_index, n_bins });
    }
    if n_qubits == 0 || n_qubits > 63 {
        return Err(ExprError::Sim(SimError::RegisterSize(n_qubits)));
    }
    let dim_minus_one = ((1u64 << n_qubits) - 1) as f64;
    let a = bin_index as f64 / n_bins as f64;
    let log_lo = haar_survival_log(dim_minus_one, a);
    let mass = if bin_index + 1 == n_bins {
        math::exp(log_lo)
    } else {
        let b = (bin_index + 1) as f64 / n_bins as f64;
        let log_hi = haar_survival_log(dim_minus_one, b);
        // e^lo - e^hi = e^lo (1 - e^(hi-lo)), which keeps relative precision
        // when both terms are tiny.
        -math::exp(log_lo) * math::expm1(log_hi - log_lo)
    };
    Ok(mass.max(HAAR_MASS_FLOOR))
}

/// All bin masses for an `n_qubits` register.
pub fn haar_bin_masses(n_qubits: usize, n_bins: usize) -> Result<Vec<f64>, ExprError> {
    (0..n_bins).map(|i| haar_bin_mass(n_qubits, i, n_bins)).collect()
}

/// Uniform bin of `f` on `[0, 1]`; the last bin is right-closed.
pub fn bin_index(f: f64, n_bins: usize) -> usize {
    let i = math::floor(f * n_bins as f64);
    if i <= 0.0 {
        0
    } else {
        (i as usize).min(n_bins - 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FidelityHistogram {
    counts: Vec<u64>,
    sample_count: u64,
}

impl FidelityHistogram {
    pub fn new(n_bins: usize) -> Self {
        FidelityHistogram { counts: vec![0; n_bins], sample_count: 0 }
    }

    pub fn from_fidelities(fidelities: &[f64], n_bins: usize) -> Self {
        let mut h = Self::new(n_bins);
        fidelities.iter().for_each(|&f| h.add(f));
        h
    }

    pub fn add(&mut self, f: f64) {
        let i = bin_index(f, self.counts.len());
        self.counts[i] += 1;
        self.sample_count += 1;
    }

    /// Adds the counts of `other`; addition is order-independent.
    pub fn merge(&mut self, other: &FidelityHistogram) {
        assert_eq!(self.counts.len(), other.counts.len(), "bin count mismatch");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.sample_count += other.sample_count;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.sample_count.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

/// `Σ p_i ln(p_i / q_i)` over bins with `p_i > 0`, in nats. Clamped at 0.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, ExprError> {
    if p.len() != q.len() {
        return Err(ExprError::BinMismatch(p.len(), q.len()));
    }
    let kl: f64 = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * math::ln(pi / qi.max(HAAR_MASS_FLOOR)))
        .sum();
    Ok(kl.max(0.0))
}

fn draw_angles<R: Rng>(rng: &mut R, out: &mut [f64]) {
    for a in out {
        *a = rng.random::<f64>() * TAU;
    }
}

/// Evaluates fidelity pairs `range` of the stream `key`, feeding each value
/// to `sink`. Pair `k` always draws θ then φ from stream `k`.
pub fn for_each_fidelity(
    instance: &CircuitInstance,
    key: &StreamKey,
    range: Range<u64>,
    mut sink: impl FnMut(f64),
) -> Result<(), ExprError> {
    if !instance.is_decomposed() {
        return Err(ExprError::NotDecomposed);
    }
    let n_params = instance.n_params();
    if n_params == 0 {
        // U(θ) = U(φ): both states coincide.
        range.for_each(|_| sink(1.0));
        return Ok(());
    }
    let mut theta = vec![0.0; n_params];
    let mut phi = vec![0.0; n_params];
    let mut a = StateVector::zero(instance.n_qubits)?;
    let mut b = StateVector::zero(instance.n_qubits)?;
    for pair in range {
        let mut rng = key.pair_rng(pair);
        draw_angles(&mut rng, &mut theta);
        draw_angles(&mut rng, &mut phi);
        instance.run_into(&mut a, &theta)?;
        instance.run_into(&mut b, &phi)?;
        sink(fidelity(&a, &b)?);
    }
    Ok(())
}

/// `n_pairs` fidelities of independently drawn parameter pairs.
pub fn sample_fidelities(instance: &CircuitInstance, n_pairs: usize, key: &StreamKey) -> Result<Vec<f64>, ExprError> {
    let mut out = Vec::with_capacity(n_pairs);
    for_each_fidelity(instance, key, 0..n_pairs as u64, |f| out.push(f))?;
    Ok(out)
}

/// Histogram of pairs `range` of repetition `rep`; partial histograms of
/// disjoint ranges merge into the full-repetition histogram.
pub fn histogram_chunk(
    instance: &CircuitInstance,
    config: &SamplingConfig,
    rep: usize,
    range: Range<u64>,
) -> Result<FidelityHistogram, ExprError> {
    let key = config.stream_key(instance, rep);
    let mut h = FidelityHistogram::new(config.n_bins);
    for_each_fidelity(instance, &key, range, |f| h.add(f))?;
    Ok(h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpressibilityEstimate {
    pub mean_kl: f64,
    /// Population standard deviation over repetitions.
    pub std_kl: f64,
    pub per_repetition: Vec<f64>,
    pub config: SamplingConfig,
}

/// Turns one full histogram per repetition into the final estimate.
pub fn estimate_from_histograms(
    n_qubits: usize,
    config: &SamplingConfig,
    histograms: &[FidelityHistogram],
) -> Result<ExpressibilityEstimate, ExprError> {
    config.validate()?;
    let haar = haar_bin_masses(n_qubits, config.n_bins)?;
    let per_repetition = histograms
        .iter()
        .map(|h| kl_divergence(&h.probabilities(), &haar))
        .collect::<Result<Vec<_>, _>>()?;
    let r = per_repetition.len().max(1) as f64;
    // Shifted mean: exact when all repetitions agree.
    let shift = per_repetition.first().copied().unwrap_or(0.0);
    let mean_kl = shift + per_repetition.iter().map(|k| k - shift).sum::<f64>() / r;
    let var = per_repetition.iter().map(|k| (k - mean_kl) * (k - mean_kl)).sum::<f64>() / r;
    Ok(ExpressibilityEstimate { mean_kl, std_kl: math::sqrt(var), per_repetition, config: *config })
}

/// Sequential estimate: `R` repetitions of `S` pairs each.
pub fn estimate_expressibility(instance: &CircuitInstance, config: &SamplingConfig) -> Result<ExpressibilityEstimate, ExprError> {
    config.validate()?;
    let histograms = (0..config.n_repetitions)
        .map(|rep| histogram_chunk(instance, config, rep, 0..config.n_pairs as u64))
        .collect::<Result<Vec<_>, _>>()?;
    estimate_from_histograms(instance.n_qubits, config, &histograms)
}
