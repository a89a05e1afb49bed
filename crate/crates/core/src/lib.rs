#![no_std]

//! Core algorithms for studying how the gate composition of parameterized
//! quantum circuits drives their KL expressibility.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It contains:
//!
//! - [`state`], [`gate`] and [`circuit`]: a dense statevector simulator for
//!   the rotation, Hadamard, CNOT/CZ and controlled-rotation gate set.
//! - [`catalog`]: data-driven circuit templates, their instantiation at a
//!   qubit/layer count, and the decomposition of controlled rotations into
//!   elementary gates.
//! - [`expressibility`]: Monte Carlo fidelity sampling and the KL divergence
//!   against the Haar fidelity distribution.
//! - [`dataset`]: the instance grid, gate-count features and summary tables.
//! - [`learn`]: least-squares gradient-boosted trees and a LASSO baseline.
//! - [`shap`]: exact path-dependent TreeSHAP and a brute-force Shapley oracle.
//!
//! File formats, the parallel driver and the command-line tool live in the
//! `pqcexpr` companion crate.

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod catalog;
pub mod circuit;
pub mod dataset;
pub mod expressibility;
pub mod gate;
pub mod learn;
pub(crate) mod math;
pub mod rng;
pub mod shap;
pub mod state;

pub use catalog::{decompose, gate_counts, instantiate, param_count, Block, BlockKind, CircuitTemplate, GateCounts, Pattern};
pub use circuit::{circuit_unitary, run_circuit, CircuitInstance};
pub use dataset::{ExpressibilityRecord, GridFilter, GridPoint};
pub use expressibility::{estimate_expressibility, ExpressibilityEstimate, SamplingConfig};
pub use gate::{AngleSource, GateKind, GateOp};
pub use learn::{fit_gbt, fit_lasso, GbtModel, GbtParams, LassoModel, Matrix};
pub use shap::{brute_force_shap, tree_shap, ShapExplanation, ShapSummary};
pub use state::{fidelity, StateVector};

/// Complex amplitude type used throughout the simulator.
pub type Complex = num_complex::Complex64;
