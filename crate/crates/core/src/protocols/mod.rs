//! BB84 encoding and bookkeeping, polarization feedback, decoy-state
//! analysis and the eavesdroppers. Everything here is a pure function over
//! explicit state; the kernel modules in [`crate::network`] drive them.

mod bb84;
mod control;
mod decoy;
mod eve;

use thiserror::Error;

pub use bb84::{
    alice_prepare, bob_measure_setup, qber, random_bit, resolve_detection, sift, AliceRecord, Basis, BobRecord,
    Outcome, QberEstimate,
};
pub use control::{
    controller_update, estimate_polarization_error, ControllerConfig, ControllerState, ReferenceCounts,
};
pub use decoy::{
    decoy_analyze, decoy_choose, ChannelModel, ClassCounts, ClassResult, DecoyAnalysis, DecoyConfig, IntensityClass,
    DEFAULT_ATTACK_THRESHOLD, DEFAULT_MIN_SLOTS,
};
pub use eve::{intercept_measure, pns_attack, EveState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("record bookkeeping: {0}")]
    Bookkeeping(String),
}
