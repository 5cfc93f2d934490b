//! Simulation and analysis toolkit for entanglement swapping between
//! time-bin qubits carried by SPDC photon pairs.
//!
//! * [`qstate`]: dense kets, density matrices, projectors and Bell states.
//! * [`metrics`]: concurrence, Uhlmann fidelity, nearest maximally entangled
//!   and nearest Werner state searches.
//! * [`photonics`]: Fock-space model of the sources, Bell-state measurement,
//!   analyzers and detectors, plus the HOM and swapping experiments.
//! * [`tomography`]: maximum-likelihood reconstruction, Poissonian bootstrap
//!   and sinusoidal visibility fits.
//! * [`heralding`]: closed-form bandwidth-limited heralding efficiencies.

pub mod error;
pub mod heralding;
pub mod metrics;
pub mod photonics;
pub mod qstate;
pub mod seed;
pub mod tomography;

pub use error::{Error, Result};
