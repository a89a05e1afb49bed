use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::gate::{AngleSource, GateOp};
use crate::state::{SimError, StateVector, MAX_QUBITS};
use crate::Complex;

/// Largest register for which [`circuit_unitary`] materializes a matrix.
pub const MAX_UNITARY_QUBITS: usize = 10;

/// A concrete circuit: a template expanded at a qubit and layer count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitInstance {
    pub template_id: u32,
    pub n_qubits: usize,
    pub n_layers: usize,
    gates: Vec<GateOp>,
    n_params: usize,
}

impl CircuitInstance {
    /// Validates qubit indices and that parameter slots first appear in
    /// order `0, 1, 2, …`.
    pub fn new(template_id: u32, n_qubits: usize, n_layers: usize, gates: Vec<GateOp>) -> Result<Self, SimError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(SimError::RegisterSize(n_qubits));
        }
        let mut n_params = 0;
        for g in &gates {
            if g.max_qubit() >= n_qubits {
                return Err(SimError::QubitOutOfRange { qubit: g.max_qubit(), n_qubits });
            }
            match (g.kind.is_two_qubit(), g.control) {
                (true, Some(c)) if c == g.target => return Err(SimError::ControlIsTarget(g.kind)),
                (true, Some(_)) | (false, None) => {}
                _ => return Err(SimError::ControlMismatch(g.kind)),
            }
            match (g.kind.is_parameterized(), g.angle) {
                (true, AngleSource::Param { slot, .. }) => {
                    if slot == n_params {
                        n_params += 1;
                    } else if slot > n_params {
                        return Err(SimError::ParamCount { expected: n_params, got: slot });
                    }
                }
                (true, _) => return Err(SimError::MissingAngle(g.kind)),
                (false, AngleSource::Param { .. }) => return Err(SimError::SuperfluousAngle(g.kind)),
                (false, _) => {}
            }
        }
        Ok(CircuitInstance { template_id, n_qubits, n_layers, gates, n_params })
    }

    /// An instance with no gates.
    pub fn empty(n_qubits: usize) -> Result<Self, SimError> {
        Self::new(0, n_qubits, 1, Vec::new())
    }

    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// True when no controlled rotations remain.
    pub fn is_decomposed(&self) -> bool {
        self.gates.iter().all(|g| !g.kind.is_controlled_rotation())
    }

    /// Runs the circuit from `|0…0⟩` into an existing buffer of matching size.
    pub fn run_into(&self, state: &mut StateVector, params: &[f64]) -> Result<(), SimError> {
        if params.len() != self.n_params {
            return Err(SimError::ParamCount { expected: self.n_params, got: params.len() });
        }
        if state.n_qubits() != self.n_qubits {
            return Err(SimError::DimensionMismatch(state.n_qubits(), self.n_qubits));
        }
        state.reset();
        self.apply_to(state, params);
        Ok(())
    }

    /// Applies the gates to `state` as-is (no reset). Sizes must already match.
    pub(crate) fn apply_to(&self, state: &mut StateVector, params: &[f64]) {
        for g in &self.gates {
            let theta = match g.angle {
                AngleSource::Param { slot, scale } => scale * params[slot],
                AngleSource::Fixed(a) => a,
                AngleSource::None => 0.0,
            };
            state.apply_unchecked(g.kind, g.target, g.control, theta);
        }
    }
}

/// `U(params)|0…0⟩`.
pub fn run_circuit(instance: &CircuitInstance, params: &[f64]) -> Result<StateVector, SimError> {
    let mut state = StateVector::zero(instance.n_qubits)?;
    instance.run_into(&mut state, params)?;
    Ok(state)
}

/// Dense square matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix {
    dim: usize,
    data: Vec<Complex>,
}

impl UnitaryMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex {
        self.data[row * self.dim + col]
    }

    pub fn as_slice(&self) -> &[Complex] {
        &self.data
    }
}

/// Full `2^n × 2^n` unitary, built column by column from basis states.
pub fn circuit_unitary(instance: &CircuitInstance, params: &[f64]) -> Result<UnitaryMatrix, SimError> {
    let n = instance.n_qubits;
    if n > MAX_UNITARY_QUBITS {
        return Err(SimError::UnitaryTooLarge { got: n, max: MAX_UNITARY_QUBITS });
    }
    if params.len() != instance.n_params {
        return Err(SimError::ParamCount { expected: instance.n_params, got: params.len() });
    }
    let dim = 1usize << n;
    let mut data = alloc::vec![Complex::new(0.0, 0.0); dim * dim];
    for col in 0..dim {
        let mut state = StateVector::basis(n, col)?;
        instance.apply_to(&mut state, params);
        for (row, a) in state.amplitudes().iter().enumerate() {
            data[row * dim + col] = *a;
        }
    }
    Ok(UnitaryMatrix { dim, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::GateKind;
    use alloc::vec;
    use core::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    fn p(slot: usize) -> AngleSource {
        AngleSource::Param { slot, scale: 1.0 }
    }

    #[test]
    fn empty_instance_leaves_zero_state() {
        let inst = CircuitInstance::empty(3).unwrap();
        assert_eq!(run_circuit(&inst, &[]).unwrap(), StateVector::zero(3).unwrap());
    }

    #[test]
    fn single_rx_row() {
        let inst = CircuitInstance::new(0, 1, 1, vec![GateOp::single(GateKind::Rx, 0, p(0))]).unwrap();
        let s = run_circuit(&inst, &[FRAC_PI_2]).unwrap();
        let c = libm::cos(FRAC_PI_4);
        let sn = libm::sin(FRAC_PI_4);
        assert!((s.amplitudes()[0] - Complex::new(c, 0.0)).norm() < 1e-15);
        assert!((s.amplitudes()[1] - Complex::new(0.0, -sn)).norm() < 1e-15);
    }

    #[test]
    fn param_count_mismatch() {
        let inst = CircuitInstance::new(0, 1, 1, vec![GateOp::single(GateKind::Rx, 0, p(0))]).unwrap();
        assert_eq!(
            run_circuit(&inst, &[]),
            Err(SimError::ParamCount { expected: 1, got: 0 })
        );
    }

    #[test]
    fn slots_must_appear_in_order() {
        let gates = vec![GateOp::single(GateKind::Rx, 0, p(1))];
        assert!(CircuitInstance::new(0, 1, 1, gates).is_err());
        let gates = vec![GateOp::single(GateKind::Rx, 0, p(0)), GateOp::single(GateKind::Ry, 0, p(0))];
        assert_eq!(CircuitInstance::new(0, 1, 1, gates).unwrap().n_params(), 1);
    }

    #[test]
    fn identity_and_hadamard_unitaries() {
        let u = circuit_unitary(&CircuitInstance::empty(1).unwrap(), &[]).unwrap();
        assert_eq!(u.get(0, 0), Complex::new(1.0, 0.0));
        assert_eq!(u.get(0, 1), Complex::new(0.0, 0.0));
        assert_eq!(u.get(1, 1), Complex::new(1.0, 0.0));

        let h = CircuitInstance::new(0, 1, 1, vec![GateOp::single(GateKind::H, 0, AngleSource::None)]).unwrap();
        let u = circuit_unitary(&h, &[]).unwrap();
        let r = FRAC_1_SQRT_2;
        for (i, j, v) in [(0, 0, r), (0, 1, r), (1, 0, r), (1, 1, -r)] {
            assert!((u.get(i, j) - Complex::new(v, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn unitary_size_guard() {
        let inst = CircuitInstance::empty(11).unwrap();
        assert_eq!(
            circuit_unitary(&inst, &[]),
            Err(SimError::UnitaryTooLarge { got: 11, max: MAX_UNITARY_QUBITS })
        );
    }
}
