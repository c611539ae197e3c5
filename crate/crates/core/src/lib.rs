//! Global-pulse quantum error correction on a six-ion planar Coulomb crystal.
//!
//! The crate is organised bottom-up:
//!
//! - [`crystal_modes`]: planar equilibrium and transverse normal modes.
//! - [`spin_coupling`]: spin-dependent forces, the spin-mode coupling matrix
//!   and the geometric phases imprinted by a pulse sequence.
//! - [`pulse_synth`]: targets, the telescoping cost, Nelder-Mead and the
//!   pruned integer search for pulse sequences.
//! - [`quantum_engine`]: exact 6-qubit density-matrix simulation.
//! - [`qec_protocol`]: teleportation-based encode/store/readout for the
//!   five-qubit repetition code and the five-qubit code.
//! - [`bench`]: Monte-Carlo fidelity curves, high-fidelity times and the
//!   scaling-law fit.

pub mod bench;
pub mod crystal_modes;
pub mod error;
pub mod pulse_synth;
pub mod qec_protocol;
pub mod quantum_engine;
pub mod rng;
pub mod spin_coupling;

pub use crystal_modes::{CrystalConfig, Geometry, ModeBasis};
pub use error::{Error, Result};
pub use pulse_synth::{IntegerAssignment, SearchReport, TargetUnitary};
pub use qec_protocol::{CodeKind, Protocol};
pub use quantum_engine::{NoiseChannelSpec, NoiseKind, Pauli, PureTarget, RegisterState};
pub use spin_coupling::{CouplingMatrix, ForceModel, PhaseVector, PulseSolution};
