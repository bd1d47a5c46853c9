//! Statevector simulation and gradient optimization of peaked random
//! quantum circuits.
//!
//! A peaked circuit is a brick-wall circuit whose first τ_r layers are fixed
//! Haar-random two-qubit gates and whose last τ_p layers are parameterized
//! gates tuned to maximize the probability of the all-zero output string.
//! This crate provides:
//!
//! - exact dense statevector simulation with two-qubit gate application
//!   ([`state`], [`gate`]);
//! - a 15-parameter KAK gate form with analytic derivatives ([`kak`]);
//! - brick-wall layouts and the random+peaking circuit model ([`circuits`]);
//! - adjoint-mode gradients of the peak weight and multi-restart Adam
//!   ascent ([`gradopt`]);
//! - output-distribution diagnostics: collision probability, half-chain
//!   entanglement entropy, rarity estimates, exponential-decay fits
//!   ([`stats`]);
//! - independent analytic oracles for the two-layer peaking construction
//!   and brute-force optimization at tiny sizes ([`oracle`]).
//!
//! Dense simulation is practical up to roughly 20 qubits for optimization
//! sweeps; the hard cap is [`state::MAX_QUBITS`].

pub mod circuits;
pub mod error;
pub mod gate;
pub mod gradopt;
pub mod hexfloat;
pub mod kak;
pub mod linalg;
pub mod oracle;
pub mod seed;
pub mod state;
pub mod stats;

pub use error::{Error, Result};
pub use gate::{haar_random_unitary, GateKind, TwoQubitGate};
pub use kak::{kak_gate, kak_gate_derivatives, KakParams, KAK_PARAMS};
pub use state::StateVector;
