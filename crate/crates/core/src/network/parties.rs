use std::any::Any;
use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use super::{emit, unexpected, Announcement, Ctx, Message};
use crate::kernel::{GateId, Module, RngStream, SimError, SimTime};
use crate::protocols::{
    alice_prepare, bob_measure_setup, controller_update, decoy_choose, estimate_polarization_error, intercept_measure,
    pns_attack, random_bit, Basis, ControllerConfig, ControllerState, DecoyConfig, EveState, IntensityClass,
    ReferenceCounts,
};
use crate::pulse::{CoherentPulse, OpticalMessage, Polarization, Pulse};

/// Bright alignment pulses interleaved with the data slots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSchedule {
    /// One reference every `interval` slots.
    pub interval: u64,
    pub mpn: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceKind {
    /// Horizontal (0°) reference.
    Zero,
    /// 45° reference.
    Diagonal,
}

impl ReferenceSchedule {
    /// Slots `interval−1, 2·interval−1, ...` are references, alternating 0° and 45°.
    pub fn kind(&self, slot: u64) -> Option<ReferenceKind> {
        if self.interval == 0 || (slot + 1) % self.interval != 0 {
            return None;
        }
        Some(if ((slot + 1) / self.interval) % 2 == 1 {
            ReferenceKind::Zero
        } else {
            ReferenceKind::Diagonal
        })
    }
}

pub(crate) fn reference_kind(schedule: &Option<ReferenceSchedule>, slot: u64) -> Option<ReferenceKind> {
    schedule.as_ref().and_then(|s| s.kind(slot))
}

fn slot_time(period: SimTime, k: u64) -> SimTime {
    SimTime::from_ps(period.as_ps() * k)
}

const SLOT: u32 = 0;
const CONTROL: u32 = 1;
/// Commands for the next slot go out after the current pulse has passed.
const COMMAND_PRIORITY: i32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct AliceParams {
    pub period: SimTime,
    pub pulses: u64,
    pub signal_mpn: f64,
    pub decoy: Option<DecoyConfig>,
    pub reference: Option<ReferenceSchedule>,
    pub announce_batch: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AliceSlot {
    pub bit: u8,
    pub basis: Basis,
    pub class: IntensityClass,
    pub reference: Option<ReferenceKind>,
}

/// BB84 transmitter: slot `k` fires at `(k+1)·period`.
pub struct AliceModule {
    params: AliceParams,
    slots: Vec<AliceSlot>,
    bits: Option<RngStream>,
    intensity_rng: Option<RngStream>,
    laser: Option<GateId>,
    modulator: Option<GateId>,
    intensity: Option<GateId>,
    classical: Option<GateId>,
    last_angle: Option<f64>,
    last_mpn: Option<f64>,
    pub bases_heard: u64,
}

impl AliceModule {
    pub fn new(params: AliceParams) -> Self {
        AliceModule {
            slots: Vec::with_capacity(params.pulses as usize),
            params,
            bits: None,
            intensity_rng: None,
            laser: None,
            modulator: None,
            intensity: None,
            classical: None,
            last_angle: None,
            last_mpn: None,
            bases_heard: 0,
        }
    }

    pub fn params(&self) -> &AliceParams {
        &self.params
    }

    pub fn slots(&self) -> &[AliceSlot] {
        &self.slots
    }

    fn prepare(&mut self, k: u64, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let (slot, angle, mpn) = match reference_kind(&self.params.reference, k) {
            Some(kind) => {
                let angle = match kind {
                    ReferenceKind::Zero => 0.0,
                    ReferenceKind::Diagonal => FRAC_PI_4,
                };
                let slot = AliceSlot {
                    bit: 0,
                    basis: Basis::Rectilinear,
                    class: IntensityClass::Signal,
                    reference: Some(kind),
                };
                (slot, angle, self.params.reference.expect("kind implies schedule").mpn)
            }
            None => {
                let rng = self.bits.as_mut().expect("initialized");
                let bit = random_bit(rng);
                let basis = Basis::random(rng);
                let (class, mpn) = match &self.params.decoy {
                    Some(d) => decoy_choose(d, self.intensity_rng.as_mut().expect("initialized")),
                    None => (IntensityClass::Signal, self.params.signal_mpn),
                };
                let slot = AliceSlot {
                    bit,
                    basis,
                    class,
                    reference: None,
                };
                (slot, alice_prepare(bit, basis), mpn)
            }
        };
        self.slots.push(slot);
        if self.last_angle != Some(angle) {
            self.last_angle = Some(angle);
            let gate = self.modulator.ok_or_else(|| ctx.error("`modulator` gate is not connected"))?;
            ctx.send_with_priority(Message::SetPolarization(angle), gate, COMMAND_PRIORITY)?;
        }
        if let Some(gate) = self.intensity {
            if self.last_mpn != Some(mpn) {
                self.last_mpn = Some(mpn);
                ctx.send_with_priority(Message::SetMpn(mpn), gate, COMMAND_PRIORITY)?;
            }
        }
        self.announce(k, ctx)
    }

    fn announce(&mut self, k: u64, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let (Some(gate), Some(_)) = (self.classical, &self.params.decoy) else {
            return Ok(());
        };
        let batch = self.params.announce_batch.max(1);
        if (k + 1) % batch == 0 || k + 1 == self.params.pulses {
            let first = k + 1 - ((k + 1) % batch).max(if (k + 1) % batch == 0 { batch } else { 0 });
            let first = first.min(k);
            let classes = self.slots[first as usize..=k as usize].iter().map(|s| s.class).collect();
            ctx.send(
                Message::Classical(Announcement::Classes {
                    first_slot: first,
                    classes,
                }),
                gate,
            )?;
        }
        Ok(())
    }
}

impl Module<Message> for AliceModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.bits = Some(ctx.rng("bits"));
        self.intensity_rng = Some(ctx.rng("intensity"));
        self.laser = Some(ctx.require_gate("laser", 0)?);
        self.modulator = ctx.gate("modulator", 0);
        self.intensity = ctx.gate("intensity", 0);
        self.classical = ctx.gate("classical", 0);
        if self.params.pulses > 0 {
            self.prepare(0, ctx)?;
            ctx.schedule_self(Message::Timer(SLOT), slot_time(self.params.period, 1), 0)?;
        }
        Ok(())
    }

    fn handle(&mut self, msg: Message, _arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        match msg {
            Message::Timer(SLOT) => {
                let k = self.slots.len() as u64 - 1;
                ctx.send(Message::Trigger { pulse_id: k }, self.laser.expect("initialized"))?;
                if k + 1 < self.params.pulses {
                    self.prepare(k + 1, ctx)?;
                    ctx.schedule_self(Message::Timer(SLOT), slot_time(self.params.period, k + 2), 0)?;
                }
                Ok(())
            }
            Message::Classical(Announcement::Bases { bases, .. }) => {
                self.bases_heard += bases.len() as u64;
                Ok(())
            }
            other => Err(unexpected(ctx, &other)),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BobParams {
    pub period: SimTime,
    pub pulses: u64,
    /// When slot 0's pulse reaches the basis rotator.
    pub first_arrival: SimTime,
    pub reference: Option<ReferenceSchedule>,
    pub controller: Option<ControllerConfig>,
    pub announce_batch: u64,
}

/// One feedback step of the polarization controller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ControllerSample {
    pub time_s: f64,
    pub error_estimate: Option<f64>,
    pub correction: f64,
    pub references: u64,
}

/// BB84 receiver: picks a basis per slot, collects detector clicks and runs
/// the polarization feedback loop on reference slots.
pub struct BobModule {
    params: BobParams,
    bases: Vec<Basis>,
    clicks: Vec<u8>,
    rng: Option<RngStream>,
    basis_gate: Option<GateId>,
    correction_gate: Option<GateId>,
    classical: Option<GateId>,
    last_angle: Option<f64>,
    controller: ControllerState,
    counts: ReferenceCounts,
    tallied: u64,
    telemetry: Vec<ControllerSample>,
    pub stray_clicks: u64,
    pub classes_heard: u64,
}

impl BobModule {
    pub fn new(params: BobParams) -> Self {
        let slew = params.controller.as_ref().map_or(0.0, |c| c.slew_rad_per_s);
        BobModule {
            bases: Vec::with_capacity(params.pulses as usize),
            clicks: vec![0; params.pulses as usize],
            params,
            rng: None,
            basis_gate: None,
            correction_gate: None,
            classical: None,
            last_angle: None,
            controller: ControllerState::new(slew),
            counts: ReferenceCounts::default(),
            tallied: 0,
            telemetry: Vec::new(),
            stray_clicks: 0,
            classes_heard: 0,
        }
    }

    pub fn params(&self) -> &BobParams {
        &self.params
    }

    pub fn bases(&self) -> &[Basis] {
        &self.bases
    }

    /// Per-slot click mask: bit 0 for the H detector, bit 1 for V.
    pub fn click_masks(&self) -> &[u8] {
        &self.clicks
    }

    pub fn telemetry(&self) -> &[ControllerSample] {
        &self.telemetry
    }

    pub fn controller(&self) -> ControllerState {
        self.controller
    }

    fn choose_basis(&mut self, k: u64, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let basis = if reference_kind(&self.params.reference, k).is_some() {
            Basis::Rectilinear
        } else {
            Basis::random(self.rng.as_mut().expect("initialized"))
        };
        self.bases.push(basis);
        let angle = bob_measure_setup(basis);
        if self.last_angle != Some(angle) {
            self.last_angle = Some(angle);
            ctx.send(Message::SetRotation(angle), self.basis_gate.expect("initialized"))?;
        }
        if let Some(gate) = self.classical {
            let batch = self.params.announce_batch.max(1);
            if (k + 1) % batch == 0 || k + 1 == self.params.pulses {
                let first = k + 1 - (k + 1).min(if (k + 1) % batch == 0 { batch } else { (k + 1) % batch });
                let bases = self.bases[first as usize..].to_vec();
                ctx.send(
                    Message::Classical(Announcement::Bases {
                        first_slot: first,
                        bases,
                    }),
                    gate,
                )?;
            }
        }
        Ok(())
    }

    fn basis_time(&self, k: u64) -> SimTime {
        let half = SimTime::from_ps(self.params.period.as_ps() / 2);
        (self.params.first_arrival + slot_time(self.params.period, k)).saturating_sub(half)
    }

    fn control_step(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let cfg = self.params.controller.clone().expect("scheduled only with a controller");
        let now = ctx.now();
        // Slots whose pulses passed at least one period ago.
        let elapsed = now.saturating_sub(self.params.first_arrival).as_ps() / self.params.period.as_ps().max(1);
        let horizon = elapsed.min(self.params.pulses);
        let horizon = horizon.saturating_sub(1);
        for s in self.tallied..horizon {
            let Some(kind) = reference_kind(&self.params.reference, s) else {
                continue;
            };
            match self.clicks[s as usize] {
                1 => self.counts.record(kind == ReferenceKind::Diagonal, false),
                2 => self.counts.record(kind == ReferenceKind::Diagonal, true),
                _ => {}
            }
        }
        self.tallied = self.tallied.max(horizon);
        let estimate = estimate_polarization_error(&self.counts);
        if let Some(e) = estimate {
            self.controller = controller_update(self.controller, e, cfg.update_interval_s, cfg.gain);
            if let Some(gate) = self.correction_gate {
                ctx.send(Message::SetRotation(self.controller.correction), gate)?;
            }
        }
        self.telemetry.push(ControllerSample {
            time_s: now.as_secs_f64(),
            error_estimate: estimate,
            correction: self.controller.correction,
            references: self.counts.zero_total + self.counts.diag_total,
        });
        self.counts = ReferenceCounts::default();
        let next = now + SimTime::from_secs_f64(cfg.update_interval_s);
        let end = self.params.first_arrival + slot_time(self.params.period, self.params.pulses);
        if next <= end {
            ctx.schedule_self(Message::Timer(CONTROL), next, 0)?;
        }
        Ok(())
    }
}

impl Module<Message> for BobModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.rng = Some(ctx.rng("bases"));
        self.basis_gate = Some(ctx.require_gate("basis", 0)?);
        self.correction_gate = ctx.gate("correction", 0);
        self.classical = ctx.gate("classical", 0);
        if self.params.pulses == 0 {
            return Ok(());
        }
        self.choose_basis(0, ctx)?;
        if self.params.pulses > 1 {
            ctx.schedule_self(Message::Timer(SLOT), self.basis_time(1), 0)?;
        }
        if let Some(c) = &self.params.controller {
            if self.correction_gate.is_none() {
                return Err(ctx.error("a controller is configured but `correction` is not connected"));
            }
            ctx.schedule_self(Message::Timer(CONTROL), SimTime::from_secs_f64(c.update_interval_s), 0)?;
        }
        Ok(())
    }

    fn handle(&mut self, msg: Message, arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        match msg {
            Message::Timer(SLOT) => {
                let k = self.bases.len() as u64;
                self.choose_basis(k, ctx)?;
                if k + 1 < self.params.pulses {
                    ctx.schedule_self(Message::Timer(SLOT), self.basis_time(k + 1), 0)?;
                }
                Ok(())
            }
            Message::Timer(CONTROL) => self.control_step(ctx),
            Message::Click(c) => {
                let detector = arrival.map_or(0, |g| ctx.gate_info(g).1);
                match self.clicks.get_mut(c.gate_index as usize) {
                    Some(mask) if detector < 2 => *mask |= 1 << detector,
                    _ => self.stray_clicks += 1,
                }
                Ok(())
            }
            Message::Classical(Announcement::Classes { classes, .. }) => {
                self.classes_heard += classes.len() as u64;
                Ok(())
            }
            other => Err(unexpected(ctx, &other)),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EveMode {
    #[default]
    Off,
    InterceptResend,
    Pns,
}

/// Eavesdropper placed in the line. With `pns` she forwards on `bypass`
/// (a lossless, delay-matched path) when that gate is connected.
pub struct EveModule {
    mode: EveMode,
    state: EveState,
    realize: Option<RngStream>,
    attack: Option<RngStream>,
    out: Option<GateId>,
    bypass: Option<GateId>,
    pub intercepted: u64,
    pub resent: u64,
}

impl EveModule {
    pub fn new(mode: EveMode) -> Self {
        EveModule {
            mode,
            state: EveState::default(),
            realize: None,
            attack: None,
            out: None,
            bypass: None,
            intercepted: 0,
            resent: 0,
        }
    }

    pub fn mode(&self) -> EveMode {
        self.mode
    }

    pub fn state(&self) -> &EveState {
        &self.state
    }
}

impl Module<Message> for EveModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.realize = Some(ctx.rng("realize"));
        self.attack = Some(ctx.rng("attack"));
        self.out = ctx.gate("out", 0);
        self.bypass = ctx.gate("bypass", 0);
        Ok(())
    }

    fn handle(&mut self, msg: Message, _arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let Message::Optical(OpticalMessage { pulse, origin, pulse_id }) = msg else {
            return Err(unexpected(ctx, &msg));
        };
        match self.mode {
            EveMode::Off => emit(ctx, self.out, pulse, origin, pulse_id),
            EveMode::Pns => {
                let fock = pulse.into_fock(self.realize.as_mut().expect("initialized"));
                let rest = pns_attack(fock, pulse_id, &mut self.state, self.attack.as_mut().expect("initialized"));
                emit(ctx, self.bypass.or(self.out), Pulse::Fock(rest), origin, pulse_id)
            }
            EveMode::InterceptResend => {
                let mpn = pulse.expected_photons();
                let fock = pulse.into_fock(self.realize.as_mut().expect("initialized"));
                self.intercepted += 1;
                let Some((basis, bit)) = intercept_measure(&fock, self.attack.as_mut().expect("initialized")) else {
                    return Ok(());
                };
                let mut common = fock.common;
                common.polarization = Polarization::linear(alice_prepare(bit, basis));
                let mut resend = CoherentPulse::new(common, 1.0).map_err(|e| ctx.error(e.to_string()))?;
                resend.set_mean_photon_number(mpn);
                self.resent += 1;
                emit(ctx, self.out, Pulse::Coherent(resend), origin, pulse_id)
            }
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_pattern() {
        let r = ReferenceSchedule { interval: 5, mpn: 1.0 };
        let kinds: Vec<_> = (0..20).map(|s| r.kind(s)).collect();
        assert_eq!(kinds[4], Some(ReferenceKind::Zero));
        assert_eq!(kinds[9], Some(ReferenceKind::Diagonal));
        assert_eq!(kinds[14], Some(ReferenceKind::Zero));
        assert_eq!(kinds.iter().filter(|k| k.is_some()).count(), 4);
        assert_eq!(ReferenceSchedule { interval: 0, mpn: 1.0 }.kind(0), None);
    }
}
