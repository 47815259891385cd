//! Simulator and verification harness for an entanglement-based QKD protocol
//! under a general Bell-basis adversary.
//!
//! The library models the joint Alice-Bob-Eve state as a superposition of
//! Pauli error patterns applied to perfect `|Φ+⟩` pairs, runs the random
//! checking phase with nonlocal Bell-subspace or local single-qubit
//! measurements, and computes the security quantities (entropies, Holevo
//! bound, fidelity bound) that certify the protocol's equivalence claims.

pub mod attack;
pub mod bell;
pub mod checking;
pub mod distillation;
pub mod error;
pub mod harness;
pub mod qstate;
pub mod rng;
pub mod security;

#[cfg(test)]
pub(crate) mod testkit;

pub use error::{Error, Result};
