//! Circuit templates, their expansion into instances, and the elementary
//! decomposition of controlled rotations.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::circuit::CircuitInstance;
use crate::gate::{AngleSource, GateKind, GateOp};
use crate::state::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    SingleQubitLayer,
    EntanglingPattern,
}

/// Qubit placement rule, evaluated for a concrete register size `n`.
///
/// Two-qubit patterns yield `(control, target)` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Every qubit, ascending.
    All,
    /// Qubits touched by [`Pattern::OddPairs`]: `1 ..= 2⌊(n-1)/2⌋`.
    OddPairQubits,
    /// Nearest-neighbour ladder `(i+1 → i)` for `i = n-2, …, 0`.
    Chain,
    /// [`Pattern::Chain`] closed by `(n-1 → 0)` when `n > 2`.
    ClosedChain,
    /// `(i → i+1 mod n)` for `i = n-1, …, 0`.
    Ring,
    /// `(i → i-1 mod n)` for `i = n-1, 0, 1, …, n-2`.
    RingReverse,
    /// Every ordered pair, controls descending, targets descending.
    AllToAll,
    /// `(2k+1 → 2k)`.
    EvenPairs,
    /// `(2k+2 → 2k+1)`.
    OddPairs,
}

impl Pattern {
    pub fn is_single_qubit(self) -> bool {
        matches!(self, Pattern::All | Pattern::OddPairQubits)
    }

    pub fn qubits(self, n: usize) -> Vec<usize> {
        match self {
            Pattern::All => (0..n).collect(),
            Pattern::OddPairQubits => (1..=2 * (n.saturating_sub(1) / 2)).collect(),
            _ => Vec::new(),
        }
    }

    pub fn pairs(self, n: usize) -> Vec<(usize, usize)> {
        if n < 2 {
            return Vec::new();
        }
        match self {
            Pattern::All | Pattern::OddPairQubits => Vec::new(),
            Pattern::Chain => (0..n - 1).rev().map(|i| (i + 1, i)).collect(),
            Pattern::ClosedChain => {
                let mut pairs = Pattern::Chain.pairs(n);
                if n > 2 {
                    pairs.push((n - 1, 0));
                }
                pairs
            }
            Pattern::Ring => (0..n).rev().map(|i| (i, (i + 1) % n)).collect(),
            Pattern::RingReverse => core::iter::once(n - 1)
                .chain(0..n - 1)
                .map(|i| (i, (i + n - 1) % n))
                .collect(),
            Pattern::AllToAll => (0..n)
                .rev()
                .flat_map(|c| (0..n).rev().filter(move |&t| t != c).map(move |t| (c, t)))
                .collect(),
            Pattern::EvenPairs => (0..n / 2).map(|k| (2 * k + 1, 2 * k)).collect(),
            Pattern::OddPairs => (0..(n - 1) / 2).map(|k| (2 * k + 2, 2 * k + 1)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub kind: BlockKind,
    pub gate: GateKind,
    pub pattern: Pattern,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitTemplate {
    pub id: u32,
    #[serde(default)]
    pub description: String,
    pub blocks: Vec<Block>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("no templates")]
    Empty,
    #[error("duplicate template id {0}")]
    DuplicateId(u32),
    #[error("template {0} has no blocks")]
    NoBlocks(u32),
    #[error("template {id}, block {block}: {gate} does not fit a {kind:?} block")]
    GateArity { id: u32, block: usize, gate: GateKind, kind: BlockKind },
    #[error("template {id}, block {block}: pattern {pattern:?} does not fit a {kind:?} block")]
    PatternArity { id: u32, block: usize, pattern: Pattern, kind: BlockKind },
    #[error("FRZ is produced by decomposition and cannot appear in a template (template {0})")]
    FixedGateInTemplate(u32),
    #[error("template {id} needs at least 2 qubits, got {n_qubits}")]
    TooFewQubits { id: u32, n_qubits: usize },
    #[error("layer count must be at least 1")]
    NoLayers,
    #[error(transparent)]
    Circuit(#[from] SimError),
}

impl CircuitTemplate {
    /// Checks block kinds against gate arity and pattern shape.
    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.blocks.is_empty() {
            return Err(CatalogError::NoBlocks(self.id));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.gate == GateKind::Frz {
                return Err(CatalogError::FixedGateInTemplate(self.id));
            }
            let single = b.kind == BlockKind::SingleQubitLayer;
            if b.gate.is_two_qubit() == single {
                return Err(CatalogError::GateArity { id: self.id, block: i, gate: b.gate, kind: b.kind });
            }
            if b.pattern.is_single_qubit() != single {
                return Err(CatalogError::PatternArity { id: self.id, block: i, pattern: b.pattern, kind: b.kind });
            }
        }
        Ok(())
    }

    fn needs_two_qubits(&self) -> bool {
        self.blocks.iter().any(|b| b.kind == BlockKind::EntanglingPattern)
    }
}

/// Validates every template and id uniqueness.
pub fn validate_catalog(templates: &[CircuitTemplate]) -> Result<(), CatalogError> {
    if templates.is_empty() {
        return Err(CatalogError::Empty);
    }
    let mut ids: Vec<u32> = Vec::with_capacity(templates.len());
    for t in templates {
        if ids.contains(&t.id) {
            return Err(CatalogError::DuplicateId(t.id));
        }
        ids.push(t.id);
        t.validate()?;
    }
    Ok(())
}

/// Expands `template` on `n_qubits` and repeats the block sequence
/// `n_layers` times, with fresh parameter slots in every repetition.
pub fn instantiate(template: &CircuitTemplate, n_qubits: usize, n_layers: usize) -> Result<CircuitInstance, CatalogError> {
    template.validate()?;
    if n_layers == 0 {
        return Err(CatalogError::NoLayers);
    }
    if n_qubits < 2 && template.needs_two_qubits() {
        return Err(CatalogError::TooFewQubits { id: template.id, n_qubits });
    }
    let mut gates = Vec::new();
    let mut slot = 0;
    let mut next_angle = |kind: GateKind| {
        if kind.is_parameterized() {
            slot += 1;
            AngleSource::Param { slot: slot - 1, scale: 1.0 }
        } else {
            AngleSource::None
        }
    };
    for _ in 0..n_layers {
        for block in &template.blocks {
            match block.kind {
                BlockKind::SingleQubitLayer => {
                    for q in block.pattern.qubits(n_qubits) {
                        gates.push(GateOp::single(block.gate, q, next_angle(block.gate)));
                    }
                }
                BlockKind::EntanglingPattern => {
                    for (c, t) in block.pattern.pairs(n_qubits) {
                        gates.push(GateOp::controlled(block.gate, c, t, next_angle(block.gate)));
                    }
                }
            }
        }
    }
    Ok(CircuitInstance::new(template.id, n_qubits, n_layers, gates)?)
}

fn half(angle: AngleSource, sign: f64) -> AngleSource {
    match angle {
        AngleSource::Param { slot, scale } => AngleSource::Param { slot, scale: sign * 0.5 * scale },
        AngleSource::Fixed(a) => AngleSource::Fixed(sign * 0.5 * a),
        AngleSource::None => AngleSource::None,
    }
}

/// Rewrites every controlled rotation into elementary gates.
///
/// With `c` the control and `t` the target, in time order:
///
/// ```text
/// CRY(θ) = RY_t(θ/2)  CNOT(c,t)  RY_t(-θ/2)  CNOT(c,t)
/// CRZ(θ) = RZ_t(θ/2)  CNOT(c,t)  RZ_t(-θ/2)  CNOT(c,t)
/// CRX(θ) = FRZ_t(π/2) CRY(θ) FRZ_t(-π/2)
/// ```
///
/// The sub-rotations reuse the parent's parameter slot with a ±1/2 scale, so
/// the parameter space is unchanged. All three identities are exact (no
/// global phase).
pub fn decompose(instance: &CircuitInstance) -> CircuitInstance {
    use core::f64::consts::FRAC_PI_2;

    let mut gates = Vec::with_capacity(instance.gates().len());
    for g in instance.gates() {
        let (rot, frz) = match g.kind {
            GateKind::Cry => (GateKind::Ry, false),
            GateKind::Crz => (GateKind::Rz, false),
            GateKind::Crx => (GateKind::Ry, true),
            _ => {
                gates.push(*g);
                continue;
            }
        };
        let control = g.control.expect("controlled rotation without control");
        let t = g.target;
        let cnot = GateOp::controlled(GateKind::Cnot, control, t, AngleSource::None);
        if frz {
            gates.push(GateOp::single(GateKind::Frz, t, AngleSource::Fixed(FRAC_PI_2)));
        }
        gates.push(GateOp::single(rot, t, half(g.angle, 1.0)));
        gates.push(cnot);
        gates.push(GateOp::single(rot, t, half(g.angle, -1.0)));
        gates.push(cnot);
        if frz {
            gates.push(GateOp::single(GateKind::Frz, t, AngleSource::Fixed(-FRAC_PI_2)));
        }
    }
    CircuitInstance::new(instance.template_id, instance.n_qubits, instance.n_layers, gates)
        .expect("decomposition preserves instance validity")
}

/// Gate tally indexed by [`GateKind`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GateCounts([usize; 10]);

impl GateCounts {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn as_array(&self) -> &[usize; 10] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (GateKind, usize)> + '_ {
        GateKind::ALL.into_iter().zip(self.0.iter().copied())
    }
}

impl Index<GateKind> for GateCounts {
    type Output = usize;

    fn index(&self, kind: GateKind) -> &usize {
        &self.0[kind.index()]
    }
}

impl IndexMut<GateKind> for GateCounts {
    fn index_mut(&mut self, kind: GateKind) -> &mut usize {
        &mut self.0[kind.index()]
    }
}

impl AddAssign for GateCounts {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Add for GateCounts {
    type Output = GateCounts;

    fn add(mut self, rhs: Self) -> GateCounts {
        self += rhs;
        self
    }
}

impl core::iter::Sum for GateCounts {
    fn sum<I: Iterator<Item = GateCounts>>(iter: I) -> Self {
        iter.fold(GateCounts::default(), Add::add)
    }
}

pub fn gate_counts(instance: &CircuitInstance) -> GateCounts {
    let mut counts = GateCounts::default();
    for g in instance.gates() {
        counts[g.kind] += 1;
    }
    counts
}

/// Number of distinct parameter slots.
pub fn param_count(instance: &CircuitInstance) -> usize {
    instance.n_params()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn template(id: u32, blocks: &[(GateKind, Pattern)]) -> CircuitTemplate {
        CircuitTemplate {
            id,
            description: String::new(),
            blocks: blocks
                .iter()
                .map(|&(gate, pattern)| Block {
                    kind: if gate.is_two_qubit() { BlockKind::EntanglingPattern } else { BlockKind::SingleQubitLayer },
                    gate,
                    pattern,
                })
                .collect(),
        }
    }

    #[test]
    fn pattern_pairs_at_four_qubits() {
        assert_eq!(Pattern::Chain.pairs(4), vec![(3, 2), (2, 1), (1, 0)]);
        assert_eq!(Pattern::ClosedChain.pairs(4), vec![(3, 2), (2, 1), (1, 0), (3, 0)]);
        assert_eq!(Pattern::ClosedChain.pairs(2), vec![(1, 0)]);
        assert_eq!(Pattern::Ring.pairs(4), vec![(3, 0), (2, 3), (1, 2), (0, 1)]);
        assert_eq!(Pattern::RingReverse.pairs(4), vec![(3, 2), (0, 3), (1, 0), (2, 1)]);
        assert_eq!(Pattern::EvenPairs.pairs(4), vec![(1, 0), (3, 2)]);
        assert_eq!(Pattern::OddPairs.pairs(4), vec![(2, 1)]);
        assert_eq!(Pattern::OddPairs.pairs(5), vec![(2, 1), (4, 3)]);
        assert_eq!(Pattern::AllToAll.pairs(3), vec![(2, 1), (2, 0), (1, 2), (1, 0), (0, 2), (0, 1)]);
        assert_eq!(Pattern::OddPairQubits.qubits(4), vec![1, 2]);
        assert_eq!(Pattern::OddPairQubits.qubits(5), vec![1, 2, 3, 4]);
        assert!(Pattern::OddPairQubits.qubits(2).is_empty());
    }

    #[test]
    fn rx_layer_counts() {
        let t = template(1, &[(GateKind::Rx, Pattern::All)]);
        let inst = instantiate(&t, 5, 3).unwrap();
        assert_eq!(gate_counts(&inst)[GateKind::Rx], 15);
        assert_eq!(param_count(&inst), 15);
        assert_eq!(param_count(&instantiate(&t, 4, 2).unwrap()), 8);
    }

    #[test]
    fn layers_scale_counts_linearly() {
        let t = template(
            3,
            &[(GateKind::Rx, Pattern::All), (GateKind::Crx, Pattern::AllToAll), (GateKind::Cz, Pattern::ClosedChain)],
        );
        for n in 2..7 {
            let one = gate_counts(&instantiate(&t, n, 1).unwrap());
            let two = gate_counts(&instantiate(&t, n, 2).unwrap());
            assert_eq!(one + one, two);
        }
    }

    #[test]
    fn instantiate_errors() {
        let t = template(2, &[(GateKind::Cnot, Pattern::Chain)]);
        assert_eq!(instantiate(&t, 1, 1), Err(CatalogError::TooFewQubits { id: 2, n_qubits: 1 }));
        assert_eq!(instantiate(&t, 3, 0), Err(CatalogError::NoLayers));
        let single = template(5, &[(GateKind::Ry, Pattern::All)]);
        assert_eq!(instantiate(&single, 1, 1).unwrap().gates().len(), 1);
    }

    #[test]
    fn catalog_validation() {
        assert_eq!(validate_catalog(&[]), Err(CatalogError::Empty));
        let a = template(7, &[(GateKind::H, Pattern::All)]);
        assert_eq!(validate_catalog(&[a.clone(), a.clone()]), Err(CatalogError::DuplicateId(7)));
        let mut bad = a.clone();
        bad.blocks[0].pattern = Pattern::Ring;
        assert!(matches!(validate_catalog(&[bad]), Err(CatalogError::PatternArity { id: 7, .. })));
        let mut bad = a;
        bad.blocks[0].gate = GateKind::Cz;
        assert!(matches!(validate_catalog(&[bad]), Err(CatalogError::GateArity { id: 7, .. })));
    }

    #[test]
    fn decomposition_arithmetic_and_idempotence() {
        let t = template(
            9,
            &[
                (GateKind::Rx, Pattern::All),
                (GateKind::H, Pattern::All),
                (GateKind::Crx, Pattern::Ring),
                (GateKind::Cry, Pattern::Chain),
                (GateKind::Crz, Pattern::AllToAll),
            ],
        );
        let inst = instantiate(&t, 4, 2).unwrap();
        let before = gate_counts(&inst);
        let dec = decompose(&inst);
        let after = gate_counts(&dec);
        let (crx, cry, crz) = (before[GateKind::Crx], before[GateKind::Cry], before[GateKind::Crz]);
        assert_eq!(after[GateKind::Cnot], before[GateKind::Cnot] + 2 * (crx + cry + crz));
        assert_eq!(after[GateKind::Ry], before[GateKind::Ry] + 2 * (crx + cry));
        assert_eq!(after[GateKind::Rz], before[GateKind::Rz] + 2 * crz);
        assert_eq!(after[GateKind::Frz], 2 * crx);
        assert_eq!(after[GateKind::Rx], before[GateKind::Rx]);
        assert_eq!(after[GateKind::H], before[GateKind::H]);
        assert_eq!(param_count(&dec), param_count(&inst));
        assert!(dec.is_decomposed());
        assert_eq!(decompose(&dec), dec);
    }

    #[test]
    fn decompose_passes_plain_circuits_through() {
        let t = template(4, &[(GateKind::Ry, Pattern::All), (GateKind::Cz, Pattern::ClosedChain)]);
        let inst = instantiate(&t, 4, 1).unwrap();
        assert_eq!(decompose(&inst), inst);
    }

    #[test]
    fn empty_instance_counts() {
        let inst = CircuitInstance::empty(2).unwrap();
        assert_eq!(gate_counts(&inst), GateCounts::default());
        assert_eq!(param_count(&inst), 0);
    }
}
