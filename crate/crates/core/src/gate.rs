use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// The ten gate kinds known to the simulator.
///
/// `Frz` is a fixed-angle Z rotation (±π/2) that only appears as a by-product
/// of decomposing `Crx`; it has no trainable parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    #[serde(rename = "RX")]
    Rx,
    #[serde(rename = "RY")]
    Ry,
    #[serde(rename = "RZ")]
    Rz,
    #[serde(rename = "FRZ")]
    Frz,
    #[serde(rename = "H")]
    H,
    #[serde(rename = "CNOT")]
    Cnot,
    #[serde(rename = "CZ")]
    Cz,
    #[serde(rename = "CRX")]
    Crx,
    #[serde(rename = "CRY")]
    Cry,
    #[serde(rename = "CRZ")]
    Crz,
}

impl GateKind {
    pub const ALL: [GateKind; 10] = [
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Frz,
        GateKind::H,
        GateKind::Cnot,
        GateKind::Cz,
        GateKind::Crx,
        GateKind::Cry,
        GateKind::Crz,
    ];

    /// Kinds that survive decomposition.
    pub const ELEMENTARY: [GateKind; 7] = [
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Frz,
        GateKind::H,
        GateKind::Cnot,
        GateKind::Cz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::Frz => "FRZ",
            GateKind::H => "H",
            GateKind::Cnot => "CNOT",
            GateKind::Cz => "CZ",
            GateKind::Crx => "CRX",
            GateKind::Cry => "CRY",
            GateKind::Crz => "CRZ",
        }
    }

    /// Position of this kind in [`GateKind::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_two_qubit(self) -> bool {
        matches!(
            self,
            GateKind::Cnot | GateKind::Cz | GateKind::Crx | GateKind::Cry | GateKind::Crz
        )
    }

    pub fn is_controlled_rotation(self) -> bool {
        matches!(self, GateKind::Crx | GateKind::Cry | GateKind::Crz)
    }

    /// Whether the gate takes a trainable angle.
    pub fn is_parameterized(self) -> bool {
        matches!(
            self,
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Crx | GateKind::Cry | GateKind::Crz
        )
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown gate kind `{0}`")]
pub struct UnknownGate(pub alloc::string::String);

impl FromStr for GateKind {
    type Err = UnknownGate;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GateKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownGate(s.into()))
    }
}

/// Where a gate gets its rotation angle from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AngleSource {
    /// `scale * params[slot]`. Templates use `scale = 1`; decomposed
    /// sub-gates use `±1/2` of their parent's slot.
    Param { slot: usize, scale: f64 },
    /// A fixed angle in radians.
    Fixed(f64),
    None,
}

/// One gate placed on concrete qubits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub angle: AngleSource,
}

impl GateOp {
    pub fn single(kind: GateKind, target: usize, angle: AngleSource) -> Self {
        GateOp { kind, target, control: None, angle }
    }

    pub fn controlled(kind: GateKind, control: usize, target: usize, angle: AngleSource) -> Self {
        GateOp { kind, target, control: Some(control), angle }
    }

    pub fn param_slot(&self) -> Option<usize> {
        match self.angle {
            AngleSource::Param { slot, .. } => Some(slot),
            _ => None,
        }
    }

    /// Largest qubit index the gate touches.
    pub fn max_qubit(&self) -> usize {
        self.control.map_or(self.target, |c| c.max(self.target))
    }
}
