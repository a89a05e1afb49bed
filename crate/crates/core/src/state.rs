//! Dense statevector and in-place gate kernels.
//!
//! Qubit 0 is the least-significant bit of the amplitude index, so basis
//! state `|q_{n-1} ... q_1 q_0⟩` lives at index `Σ q_k 2^k`.

use alloc::vec;
use alloc::vec::Vec;

use crate::gate::{AngleSource, GateKind, GateOp};
use crate::math;
use crate::Complex;

/// Largest register the simulator accepts (4 MiB of amplitudes).
pub const MAX_QUBITS: usize = 18;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("register size {0} outside 1..={MAX_QUBITS}")]
    RegisterSize(usize),
    #[error("amplitude count {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("amplitudes are not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("qubit {qubit} out of range for {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("{0} gate needs distinct control and target")]
    ControlIsTarget(GateKind),
    #[error("{0} gate has a malformed control qubit")]
    ControlMismatch(GateKind),
    #[error("{0} gate requires an angle")]
    MissingAngle(GateKind),
    #[error("{0} gate does not take a free angle")]
    SuperfluousAngle(GateKind),
    #[error("state dimensions differ ({0} vs {1} qubits)")]
    DimensionMismatch(usize, usize),
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("unitary construction limited to {max} qubits, got {got}")]
    UnitaryTooLarge { got: usize, max: usize },
}

/// Pure state of an `n`-qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self, SimError> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self, SimError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(SimError::RegisterSize(n_qubits));
        }
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(SimError::QubitOutOfRange { qubit: index, n_qubits });
        }
        let mut amps = vec![Complex::new(0.0, 0.0); dim];
        amps[index] = Complex::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    /// Wraps caller-provided amplitudes; the squared norm must be 1 within 1e-9.
    pub fn from_amplitudes(amps: Vec<Complex>) -> Result<Self, SimError> {
        let len = amps.len();
        if !len.is_power_of_two() || len < 2 {
            return Err(SimError::NotPowerOfTwo(len));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(SimError::RegisterSize(n_qubits));
        }
        let state = StateVector { n_qubits, amps };
        let norm = state.norm_sqr();
        if math::abs(norm - 1.0) > 1e-9 {
            return Err(SimError::NotNormalized(norm));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Resets to `|0…0⟩` without reallocating.
    pub fn reset(&mut self) {
        self.amps.fill(Complex::new(0.0, 0.0));
        self.amps[0] = Complex::new(1.0, 0.0);
    }

    /// Inner product `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex, SimError> {
        if self.n_qubits != other.n_qubits {
            return Err(SimError::DimensionMismatch(self.n_qubits, other.n_qubits));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .fold(Complex::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b))
    }

    fn check_qubit(&self, qubit: usize) -> Result<(), SimError> {
        if qubit >= self.n_qubits {
            Err(SimError::QubitOutOfRange { qubit, n_qubits: self.n_qubits })
        } else {
            Ok(())
        }
    }

    /// Applies `gate`. `angle` must be given exactly when the gate reads a
    /// parameter slot; fixed-angle and angle-free gates take `None`.
    pub fn apply_gate(&mut self, gate: &GateOp, angle: Option<f64>) -> Result<(), SimError> {
        self.check_qubit(gate.target)?;
        match (gate.kind.is_two_qubit(), gate.control) {
            (true, Some(c)) => {
                self.check_qubit(c)?;
                if c == gate.target {
                    return Err(SimError::ControlIsTarget(gate.kind));
                }
            }
            (false, None) => {}
            _ => return Err(SimError::ControlMismatch(gate.kind)),
        }
        let theta = match (gate.angle, angle) {
            (AngleSource::Param { .. }, Some(a)) => a,
            (AngleSource::Param { .. }, None) => return Err(SimError::MissingAngle(gate.kind)),
            (AngleSource::Fixed(a), None) => a,
            (AngleSource::None, None) => 0.0,
            (_, Some(_)) => return Err(SimError::SuperfluousAngle(gate.kind)),
        };
        self.apply_unchecked(gate.kind, gate.target, gate.control, theta);
        Ok(())
    }

    /// Kernel dispatch without validation. Indices must already be checked.
    pub(crate) fn apply_unchecked(&mut self, kind: GateKind, target: usize, control: Option<usize>, theta: f64) {
        let amps = &mut self.amps[..];
        match kind {
            GateKind::Rx | GateKind::Crx => {
                let (s, c) = math::sin_cos(theta / 2.0);
                for_each_pair(amps, target, control, |a, b| {
                    let (a0, b0) = (*a, *b);
                    // [[c, -is], [-is, c]]
                    *a = Complex::new(c * a0.re + s * b0.im, c * a0.im - s * b0.re);
                    *b = Complex::new(c * b0.re + s * a0.im, c * b0.im - s * a0.re);
                });
            }
            GateKind::Ry | GateKind::Cry => {
                let (s, c) = math::sin_cos(theta / 2.0);
                for_each_pair(amps, target, control, |a, b| {
                    let (a0, b0) = (*a, *b);
                    *a = a0 * c - b0 * s;
                    *b = a0 * s + b0 * c;
                });
            }
            GateKind::Rz | GateKind::Frz | GateKind::Crz => {
                let (s, c) = math::sin_cos(theta / 2.0);
                let (d0, d1) = (Complex::new(c, -s), Complex::new(c, s));
                for_each_pair(amps, target, control, |a, b| {
                    *a *= d0;
                    *b *= d1;
                });
            }
            GateKind::H => {
                let h = core::f64::consts::FRAC_1_SQRT_2;
                for_each_pair(amps, target, None, |a, b| {
                    let (a0, b0) = (*a, *b);
                    *a = (a0 + b0) * h;
                    *b = (a0 - b0) * h;
                });
            }
            GateKind::Cnot => for_each_pair(amps, target, control, core::mem::swap),
            GateKind::Cz => for_each_pair(amps, target, control, |_, b| *b = -*b),
        }
    }
}

/// Calls `f(a_i, a_j)` for every index pair `(i, i | 2^target)` with the
/// target bit of `i` clear and, if present, the control bit set.
#[inline(always)]
fn for_each_pair<F: FnMut(&mut Complex, &mut Complex)>(
    amps: &mut [Complex],
    target: usize,
    control: Option<usize>,
    mut f: F,
) {
    let bit = 1usize << target;
    match control {
        None => {
            for chunk in amps.chunks_exact_mut(bit << 1) {
                let (lo, hi) = chunk.split_at_mut(bit);
                lo.iter_mut().zip(hi).for_each(|(a, b)| f(a, b));
            }
        }
        Some(c) if c > target => {
            let cbit = 1usize << c;
            for outer in amps.chunks_exact_mut(cbit << 1) {
                for chunk in outer[cbit..].chunks_exact_mut(bit << 1) {
                    let (lo, hi) = chunk.split_at_mut(bit);
                    lo.iter_mut().zip(hi).for_each(|(a, b)| f(a, b));
                }
            }
        }
        Some(c) => {
            let cbit = 1usize << c;
            for chunk in amps.chunks_exact_mut(bit << 1) {
                let (lo, hi) = chunk.split_at_mut(bit);
                for (lc, hc) in lo.chunks_exact_mut(cbit << 1).zip(hi.chunks_exact_mut(cbit << 1)) {
                    lc[cbit..].iter_mut().zip(&mut hc[cbit..]).for_each(|(a, b)| f(a, b));
                }
            }
        }
    }
}

/// `|⟨a|b⟩|²`, clamped to `[0, 1]`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64, SimError> {
    Ok(a.inner(b)?.norm_sqr().clamp(0.0, 1.0))
}
