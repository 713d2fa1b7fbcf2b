use std::any::Any;
use std::collections::BTreeMap;

use super::{emit, unexpected, Ctx, Message};
use crate::components::{
    apply_transmittance, attenuate, beamsplit, circulate, classical_detect, couple, db_to_transmittance,
    laser_fire, modulate_polarization, polarizing_beamsplit, rotate, spd_gate, Attenuator, Beamsplitter, Circulator,
    ClassicalDetector, Coupler, DetectorClick, LaserSource, LaserState, ModulatorState, PolarizationModulator,
    PolarizationRotator, PolarizingBeamsplitter, Spd, SpdState, VariableAttenuator,
};
use crate::kernel::{GateId, Module, RngStream, SimError, SimTime};
use crate::pulse::{OpticalMessage, Pulse};

fn transfer_rng(ctx: &Ctx<'_>) -> RngStream {
    ctx.rng("transfer")
}

fn arrival_index(ctx: &Ctx<'_>, arrival: Option<GateId>) -> u32 {
    arrival.map_or(0, |g| ctx.gate_info(g).1)
}

macro_rules! any_impl {
    () => {
        fn as_any(&self) -> &dyn Any {
            self
        }
    };
}

pub struct LaserModule {
    source: Option<LaserSource>,
    state: LaserState,
    rng: Option<RngStream>,
    out: Option<GateId>,
    pub fired: u64,
    pub refused: u64,
}

impl LaserModule {
    pub fn new(source: Option<LaserSource>) -> Self {
        LaserModule {
            source,
            state: LaserState::default(),
            rng: None,
            out: None,
            fired: 0,
            refused: 0,
        }
    }

    pub fn source(&self) -> Option<&LaserSource> {
        self.source.as_ref()
    }
}

impl Module<Message> for LaserModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.rng = Some(ctx.rng("phase"));
        self.out = ctx.gate("out", 0);
        Ok(())
    }

    fn handle(&mut self, msg: Message, _arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let Message::Trigger { pulse_id } = msg else {
            return Err(unexpected(ctx, &msg));
        };
        let Some(source) = &self.source else {
            return Ok(());
        };
        let rng = self.rng.as_mut().expect("initialized");
        match laser_fire(source, &mut self.state, ctx.now(), rng) {
            Some(p) => {
                self.fired += 1;
                let me = ctx.module_id();
                emit(ctx, self.out, Pulse::Coherent(p), me, pulse_id)
            }
            None => {
                self.refused += 1;
                ctx.warn(format!("trigger for pulse {pulse_id} refused: faster than the repetition period"));
                Ok(())
            }
        }
    }

    any_impl!();
}

/// Fixed attenuator.
pub struct AttenuatorModule {
    props: Option<Attenuator>,
    rng: Option<RngStream>,
    out: Option<GateId>,
}

impl AttenuatorModule {
    pub fn new(props: Option<Attenuator>) -> Self {
        AttenuatorModule {
            props,
            rng: None,
            out: None,
        }
    }
}

impl Module<Message> for AttenuatorModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.rng = Some(transfer_rng(ctx));
        self.out = ctx.gate("out", 0);
        Ok(())
    }

    fn handle(&mut self, msg: Message, _arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let Message::Optical(OpticalMessage { pulse, origin, pulse_id }) = msg else {
            return Err(unexpected(ctx, &msg));
        };
        let Some(props) = &self.props else {
            return Ok(());
        };
        let out = attenuate(props, pulse, self.rng.as_mut().expect("initialized"));
        emit(ctx, self.out, out, origin, pulse_id)
    }

    any_impl!();
}

/// Intensity modulator: scales each pulse down to the commanded MPN.
pub struct VariableAttenuatorModule {
    props: Option<VariableAttenuator>,
    target_mpn: Option<f64>,
    rng: Option<RngStream>,
    out: Option<GateId>,
    pub shortfalls: u64,
}

impl VariableAttenuatorModule {
    pub fn new(props: Option<VariableAttenuator>) -> Self {
        VariableAttenuatorModule {
            props,
            target_mpn: None,
            rng: None,
            out: None,
            shortfalls: 0,
        }
    }
}

impl Module<Message> for VariableAttenuatorModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.rng = Some(transfer_rng(ctx));
        self.out = ctx.gate("out", 0);
        Ok(())
    }

    fn handle(&mut self, msg: Message, _arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let (pulse, origin, pulse_id) = match msg {
            Message::SetMpn(m) => {
                self.target_mpn = Some(m.max(0.0));
                return Ok(());
            }
            Message::Optical(OpticalMessage { pulse, origin, pulse_id }) => (pulse, origin, pulse_id),
            other => return Err(unexpected(ctx, &other)),
        };
        let Some(props) = &self.props else {
            return Ok(());
        };
        let rng = self.rng.as_mut().expect("initialized");
        let mut pulse = apply_transmittance(pulse, db_to_transmittance(props.insertion_loss_db), rng);
        if let Some(target) = self.target_mpn {
            let current = pulse.expected_photons();
            if current + 1e-12 * current < target {
                self.shortfalls += 1;
                if self.shortfalls == 1 {
                    ctx.warn(format!("input MPN {current} is below the commanded {target}; passing unchanged"));
                }
            } else {
                pulse = match pulse {
                    Pulse::Coherent(mut p) => {
                        p.set_mean_photon_number(target);
                        Pulse::Coherent(p)
                    }
                    fock => {
                        let t = if current > 0.0 { target / current } else { 0.0 };
                        apply_transmittance(fock, t, rng)
                    }
                };
            }
        }
        emit(ctx, self.out, pulse, origin, pulse_id)
    }

    any_impl!();
}

pub struct ModulatorModule {
    props: Option<PolarizationModulator>,
    state: ModulatorState,
    rng: Option<RngStream>,
    out: Option<GateId>,
    pub unsettled: u64,
}

impl ModulatorModule {
    pub fn new(props: Option<PolarizationModulator>) -> Self {
        ModulatorModule {
            props,
            state: ModulatorState::default(),
            rng: None,
            out: None,
            unsettled: 0,
        }
    }
}

impl Module<Message> for ModulatorModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.rng = Some(transfer_rng(ctx));
        self.out = ctx.gate("out", 0);
        Ok(())
    }

    fn handle(&mut self, msg: Message, _arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let (pulse, origin, pulse_id) = match msg {
            Message::SetPolarization(a) => {
                self.state.command(a, ctx.now());
                return Ok(());
            }
            Message::Optical(OpticalMessage { pulse, origin, pulse_id }) => (pulse, origin, pulse_id),
            other => return Err(unexpected(ctx, &other)),
        };
        let Some(props) = &self.props else {
            return Ok(());
        };
        let (out, unsettled) =
            modulate_polarization(props, &self.state, pulse, ctx.now(), self.rng.as_mut().expect("initialized"));
        if unsettled {
            self.unsettled += 1;
            ctx.warn(format!("pulse {pulse_id} arrived inside the settle window; previous angle used"));
        }
        emit(ctx, self.out, out, origin, pulse_id)
    }

    any_impl!();
}

/// Polarization rotator, commanded with an absolute angle.
pub struct RotatorModule {
    props: Option<PolarizationRotator>,
    angle: f64,
    rng: Option<RngStream>,
    out: Option<GateId>,
}

impl RotatorModule {
    pub fn new(props: Option<PolarizationRotator>) -> Self {
        RotatorModule {
            props,
            angle: 0.0,
            rng: None,
            out: None,
        }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }
}

impl Module<Message> for RotatorModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.rng = Some(transfer_rng(ctx));
        self.out = ctx.gate("out", 0);
        Ok(())
    }

    fn handle(&mut self, msg: Message, _arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let (pulse, origin, pulse_id) = match msg {
            Message::SetRotation(a) => {
                self.angle = a;
                return Ok(());
            }
            Message::Optical(OpticalMessage { pulse, origin, pulse_id }) => (pulse, origin, pulse_id),
            other => return Err(unexpected(ctx, &other)),
        };
        let Some(props) = &self.props else {
            return Ok(());
        };
        let out = rotate(props, self.angle, pulse, self.rng.as_mut().expect("initialized"));
        emit(ctx, self.out, out, origin, pulse_id)
    }

    any_impl!();
}

/// Four-port beamsplitter: light entering `in[i]` is transmitted to `out[i]`
/// and reflected to the other output.
pub struct BeamsplitterModule {
    props: Option<Beamsplitter>,
    rng: Option<RngStream>,
    outs: [Option<GateId>; 2],
}

impl BeamsplitterModule {
    pub fn new(props: Option<Beamsplitter>) -> Self {
        BeamsplitterModule {
            props,
            rng: None,
            outs: [None; 2],
        }
    }
}

impl Module<Message> for BeamsplitterModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.rng = Some(transfer_rng(ctx));
        self.outs = [ctx.gate("out", 0), ctx.gate("out", 1)];
        Ok(())
    }

    fn handle(&mut self, msg: Message, arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let Message::Optical(OpticalMessage { pulse, origin, pulse_id }) = msg else {
            return Err(unexpected(ctx, &msg));
        };
        let Some(props) = &self.props else {
            return Ok(());
        };
        let i = (arrival_index(ctx, arrival) as usize).min(1);
        let (t, r) = beamsplit(props, pulse, self.rng.as_mut().expect("initialized"));
        emit(ctx, self.outs[i], t, origin, pulse_id)?;
        emit(ctx, self.outs[1 - i], r, origin, pulse_id)
    }

    any_impl!();
}

/// Polarizing beamsplitter: `out[0]` is the H port, `out[1]` the V port.
pub struct PbsModule {
    props: Option<PolarizingBeamsplitter>,
    rng: Option<RngStream>,
    outs: [Option<GateId>; 2],
}

impl PbsModule {
    pub fn new(props: Option<PolarizingBeamsplitter>) -> Self {
        PbsModule {
            props,
            rng: None,
            outs: [None; 2],
        }
    }
}

impl Module<Message> for PbsModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.rng = Some(transfer_rng(ctx));
        self.outs = [ctx.gate("out", 0), ctx.gate("out", 1)];
        Ok(())
    }

    fn handle(&mut self, msg: Message, _arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let Message::Optical(OpticalMessage { pulse, origin, pulse_id }) = msg else {
            return Err(unexpected(ctx, &msg));
        };
        let Some(props) = &self.props else {
            return Ok(());
        };
        let (h, v) = polarizing_beamsplit(props, pulse, self.rng.as_mut().expect("initialized"));
        emit(ctx, self.outs[0], h, origin, pulse_id)?;
        emit(ctx, self.outs[1], v, origin, pulse_id)
    }

    any_impl!();
}

/// Three-port circulator with gates `in[i]` and `out[i]`.
pub struct CirculatorModule {
    props: Option<Circulator>,
    rng: Option<RngStream>,
    outs: [Option<GateId>; Circulator::PORTS],
}

impl CirculatorModule {
    pub fn new(props: Option<Circulator>) -> Self {
        CirculatorModule {
            props,
            rng: None,
            outs: [None; Circulator::PORTS],
        }
    }
}

impl Module<Message> for CirculatorModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.rng = Some(transfer_rng(ctx));
        for (i, g) in self.outs.iter_mut().enumerate() {
            *g = ctx.gate("out", i as u32);
        }
        Ok(())
    }

    fn handle(&mut self, msg: Message, arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let Message::Optical(OpticalMessage { pulse, origin, pulse_id }) = msg else {
            return Err(unexpected(ctx, &msg));
        };
        let Some(props) = &self.props else {
            return Ok(());
        };
        let port = arrival_index(ctx, arrival) as usize;
        let (o, out) = circulate(props, port, pulse, self.rng.as_mut().expect("initialized"))
            .map_err(|e| ctx.error(e.to_string()))?;
        emit(ctx, self.outs[o], out, origin, pulse_id)
    }

    any_impl!();
}

/// Merges `in[0]` and `in[1]` onto `out`.
pub struct CouplerModule {
    props: Option<Coupler>,
    rng: Option<RngStream>,
    out: Option<GateId>,
}

impl CouplerModule {
    pub fn new(props: Option<Coupler>) -> Self {
        CouplerModule {
            props,
            rng: None,
            out: None,
        }
    }
}

impl Module<Message> for CouplerModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.rng = Some(transfer_rng(ctx));
        self.out = ctx.gate("out", 0);
        Ok(())
    }

    fn handle(&mut self, msg: Message, _arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let Message::Optical(OpticalMessage { pulse, origin, pulse_id }) = msg else {
            return Err(unexpected(ctx, &msg));
        };
        let Some(props) = &self.props else {
            return Ok(());
        };
        let out = couple(props, pulse, self.rng.as_mut().expect("initialized"));
        emit(ctx, self.out, out, origin, pulse_id)
    }

    any_impl!();
}

/// Gate clock of a detector, fixed by the network builder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpdTiming {
    pub first_open: SimTime,
    pub period: SimTime,
    pub width: SimTime,
    /// Gates after this many are never opened.
    pub gate_count: u64,
}

impl SpdTiming {
    pub fn open(&self, gate: u64) -> SimTime {
        SimTime::from_ps(self.first_open.as_ps() + self.period.as_ps() * gate)
    }

    /// Gate whose centre is nearest the centre of a pulse window.
    pub fn gate_for(&self, start: SimTime, duration: SimTime) -> Option<u64> {
        let centre = start.as_ps() as i128 + duration.as_ps() as i128 / 2;
        let first = self.first_open.as_ps() as i128 + self.width.as_ps() as i128 / 2;
        let p = self.period.as_ps().max(1) as i128;
        let g = (centre - first + p / 2).div_euclid(p);
        (g >= 0 && (g as u64) < self.gate_count).then_some(g as u64)
    }
}

const FLUSH: u32 = 0;

/// Gated single-photon detector. Gates with light are evaluated when they
/// close; gates that saw no light only matter for dark counts and are
/// evaluated in order the next time anything is evaluated, so the click log
/// is complete and time-ordered by gate, but dark-only clicks may be reported
/// a little late.
pub struct SpdModule {
    props: Option<Spd>,
    timing: SpdTiming,
    state: SpdState,
    next_gate: u64,
    pending: BTreeMap<u64, Vec<SimTime>>,
    realize: Option<RngStream>,
    detect: Option<RngStream>,
    out: Option<GateId>,
    clicks: Vec<DetectorClick>,
    pub late_pulses: u64,
}

impl SpdModule {
    pub fn new(props: Option<Spd>, timing: SpdTiming) -> Self {
        SpdModule {
            props,
            timing,
            state: SpdState::default(),
            next_gate: 0,
            pending: BTreeMap::new(),
            realize: None,
            detect: None,
            out: None,
            clicks: Vec::new(),
            late_pulses: 0,
        }
    }

    pub fn clicks(&self) -> &[DetectorClick] {
        &self.clicks
    }

    pub fn timing(&self) -> SpdTiming {
        self.timing
    }

    fn evaluate_through(&mut self, last: u64, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let Some(props) = &self.props else {
            return Ok(());
        };
        let rng = self.detect.as_mut().expect("initialized");
        let mut g = self.next_gate;
        while g <= last {
            let photons = self.pending.remove(&g);
            if photons.is_none() && props.dark_count_prob == 0.0 {
                // Nothing can happen in an empty gate; skip to the next lit one.
                match self.pending.range(g..=last).next() {
                    Some((&next, _)) => {
                        g = next;
                        continue;
                    }
                    None => break,
                }
            }
            let photons = photons.unwrap_or_default();
            if let Some(click) = spd_gate(props, &mut self.state, self.timing.open(g), g, &photons, rng) {
                self.clicks.push(click);
                if let Some(out) = self.out {
                    ctx.send(Message::Click(click), out)?;
                }
            }
            g += 1;
        }
        self.next_gate = self.next_gate.max(last + 1);
        Ok(())
    }
}

impl Module<Message> for SpdModule {
    fn initialize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.realize = Some(ctx.rng("realize"));
        self.detect = Some(ctx.rng("detect"));
        self.out = ctx.gate("out", 0);
        if self.timing.gate_count > 0 {
            let last = self.timing.gate_count - 1;
            let at = self.timing.open(last) + self.timing.width;
            ctx.schedule_self(Message::Timer(FLUSH), at.max(ctx.now()), 10)?;
        }
        Ok(())
    }

    fn handle(&mut self, msg: Message, _arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        match msg {
            Message::Optical(OpticalMessage { pulse, pulse_id, .. }) => {
                if self.props.is_none() {
                    return Ok(());
                }
                let now = ctx.now();
                let duration = SimTime::from_secs_f64(pulse.common().duration_s());
                let fock = pulse.into_fock(self.realize.as_mut().expect("initialized"));
                if fock.photon_count() == 0 {
                    return Ok(());
                }
                let gate = match self.timing.gate_for(now, duration) {
                    Some(g) if g >= self.next_gate => g,
                    _ => {
                        self.late_pulses += 1;
                        ctx.warn(format!("pulse {pulse_id} arrived outside any open gate"));
                        return Ok(());
                    }
                };
                let photons: Vec<SimTime> = fock.offsets().map(|o| now + o).collect();
                let entry = self.pending.entry(gate).or_default();
                let first = entry.is_empty();
                entry.extend(photons);
                if first {
                    let close = self.timing.open(gate) + self.timing.width;
                    ctx.schedule_self(Message::GateClose(gate), close.max(now), 0)?;
                }
                Ok(())
            }
            Message::GateClose(g) => {
                if let Some(p) = self.pending.get_mut(&g) {
                    p.sort_unstable();
                }
                self.evaluate_through(g, ctx)
            }
            Message::Timer(FLUSH) => {
                if self.timing.gate_count > 0 {
                    self.evaluate_through(self.timing.gate_count - 1, ctx)?;
                }
                Ok(())
            }
            other => Err(unexpected(ctx, &other)),
        }
    }

    any_impl!();
}

/// Threshold detector; keeps `(time, energy, hit)` for every pulse seen.
pub struct ClassicalDetectorModule {
    props: Option<ClassicalDetector>,
    pub readings: Vec<(SimTime, f64, bool)>,
}

impl ClassicalDetectorModule {
    pub fn new(props: Option<ClassicalDetector>) -> Self {
        ClassicalDetectorModule {
            props,
            readings: Vec::new(),
        }
    }
}

impl Module<Message> for ClassicalDetectorModule {
    fn handle(&mut self, msg: Message, _arrival: Option<GateId>, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let Message::Optical(m) = msg else {
            return Err(unexpected(ctx, &msg));
        };
        if let Some(props) = &self.props {
            let (hit, e) = classical_detect(props, &m.pulse);
            self.readings.push((ctx.now(), e, hit));
        }
        Ok(())
    }

    any_impl!();
}

/// Absorbs anything.
#[derive(Default)]
pub struct SinkModule {
    pub absorbed: u64,
}

impl Module<Message> for SinkModule {
    fn handle(&mut self, _msg: Message, _arrival: Option<GateId>, _ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.absorbed += 1;
        Ok(())
    }

    any_impl!();
}
