//! Kernel modules wrapping the component, channel and protocol functions.
//!
//! Optical modules take pulses on `in` (or `in[i]`) and emit on `out` (or
//! `out[i]`); commandable ones also accept commands on `control`. Outputs
//! that carry no light at all are not sent.

mod channels;
mod optics;
mod parties;

pub use channels::{ClassicalChannel, FiberChannel, FreeSpaceChannel};
pub use optics::{
    AttenuatorModule, BeamsplitterModule, CirculatorModule, ClassicalDetectorModule, CouplerModule, LaserModule,
    ModulatorModule, PbsModule, RotatorModule, SinkModule, SpdModule, SpdTiming, VariableAttenuatorModule,
};
pub use parties::{
    AliceModule, AliceParams, AliceSlot, BobModule, BobParams, ControllerSample, EveMode, EveModule, ReferenceKind,
    ReferenceSchedule,
};

use crate::components::DetectorClick;
use crate::kernel::{Context, GateId, ModuleId, Payload, SimError};
use crate::protocols::{Basis, IntensityClass};
use crate::pulse::{OpticalMessage, Pulse};

pub type Sim = crate::kernel::Simulation<Message>;
pub type Ctx<'a> = Context<'a, Message>;

/// Everything that travels through a simulated network.
#[derive(Clone, Debug)]
pub enum Message {
    Optical(OpticalMessage),
    /// Fire the laser for the given slot.
    Trigger { pulse_id: u64 },
    SetPolarization(f64),
    SetRotation(f64),
    /// Target output MPN of a variable attenuator.
    SetMpn(f64),
    Click(DetectorClick),
    Classical(Announcement),
    Timer(u32),
    /// Close of detector gate `n`.
    GateClose(u64),
}

/// Public-channel traffic between Alice and Bob.
#[derive(Clone, Debug, PartialEq)]
pub enum Announcement {
    /// Bob's measurement bases for consecutive slots.
    Bases { first_slot: u64, bases: Vec<Basis> },
    /// Alice's intensity classes for consecutive slots.
    Classes {
        first_slot: u64,
        classes: Vec<IntensityClass>,
    },
}

impl Payload for Message {
    fn kind(&self) -> &'static str {
        match self {
            Message::Optical(m) => match m.pulse {
                Pulse::Coherent(_) => "optical_coherent",
                Pulse::Fock(_) => "optical_fock",
            },
            Message::Trigger { .. } => "trigger",
            Message::SetPolarization(_) => "set_polarization",
            Message::SetRotation(_) => "set_rotation",
            Message::SetMpn(_) => "set_mpn",
            Message::Click(_) => "click",
            Message::Classical(Announcement::Bases { .. }) => "announce_bases",
            Message::Classical(Announcement::Classes { .. }) => "announce_classes",
            Message::Timer(_) => "timer",
            Message::GateClose(_) => "gate_close",
        }
    }
}

/// Sends an optical message unless the pulse is empty.
pub(crate) fn emit(ctx: &mut Ctx<'_>, gate: Option<GateId>, pulse: Pulse, origin: ModuleId, pulse_id: u64) -> Result<(), SimError> {
    if pulse.is_vacuum() {
        return Ok(());
    }
    let Some(gate) = gate else {
        return Err(ctx.error("light reached an unconnected output; attach a sink"));
    };
    ctx.send(
        Message::Optical(OpticalMessage {
            pulse,
            origin,
            pulse_id,
        }),
        gate,
    )
}

pub(crate) fn unexpected(ctx: &Ctx<'_>, msg: &Message) -> SimError {
    ctx.error(format!("unexpected `{}` message", msg.kind()))
}
