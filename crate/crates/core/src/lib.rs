//! Discrete-event simulation of quantum key distribution optics.
//!
//! The crate is layered bottom-up:
//!
//! * [`kernel`]: event queue, modules, gates, channels, named RNG streams.
//! * [`pulse`]: coherent and Fock pulses, shapes, photon statistics.
//! * [`components`]: device property records and stateless transfer functions.
//! * [`channels`]: fiber and free-space propagation.
//! * [`protocols`]: BB84 encoding, sifting, QBER, polarization control, decoy
//!   analysis and the photon-number-splitting eavesdropper.
//! * [`network`]: kernel modules wrapping the above.
//! * [`scenario`]: config loading, network assembly, replications, export.

pub mod channels;
pub mod components;
pub mod error;
pub mod kernel;
pub mod network;
pub mod protocols;
pub mod pulse;
pub mod scenario;

pub use error::DomainError;
