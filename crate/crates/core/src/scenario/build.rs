use std::collections::{BTreeMap, HashSet, VecDeque};

use super::validate::{ChannelPlan, ConfigIssue, ConnectionPlan, Device, Plan};
use super::ScenarioError;
use crate::channels::{fiber_delay, FiberProperties};
use crate::components::{db_to_transmittance, LaserSource};
use crate::kernel::{GateRef, Module, RngStream, SimTime};
use crate::network::{
    AliceModule, AliceParams, AttenuatorModule, BeamsplitterModule, BobModule, BobParams, CirculatorModule,
    ClassicalChannel, ClassicalDetectorModule, CouplerModule, EveModule, FiberChannel, FreeSpaceChannel, LaserModule,
    Message, ModulatorModule, PbsModule, RotatorModule, Sim, SinkModule, SpdModule, SpdTiming,
    VariableAttenuatorModule,
};
use crate::protocols::ChannelModel;
use crate::pulse::StokesAxis;

/// A network ready to run, plus what the analysis needs to know about it.
pub struct BuiltNetwork {
    pub sim: Sim,
    pub plan: Plan,
    /// Earliest optical arrival at each module reached from a laser, measured
    /// from the laser trigger.
    pub path_delays: BTreeMap<String, SimTime>,
    /// Honest-path channel model for the decoy test, when one applies.
    pub channel_model: Option<ChannelModel>,
    pub detectors: Vec<String>,
}

fn link_delay(plan: &Plan, c: &ConnectionPlan, depth: u32) -> SimTime {
    match &c.channel {
        None => SimTime::ZERO,
        Some(ChannelPlan::Fiber(p)) => SimTime::from_secs_f64(fiber_delay(p)),
        Some(ChannelPlan::Classical { delay_s }) => SimTime::from_secs_f64(*delay_s),
        Some(ChannelPlan::FreeSpace {
            delay_matched_to: Some(r),
            ..
        }) if depth < 8 => plan
            .connections
            .iter()
            .find(|o| &o.from == r)
            .map_or(SimTime::ZERO, |o| link_delay(plan, o, depth + 1)),
        Some(ChannelPlan::FreeSpace { props, .. }) => SimTime::from_secs_f64(props.delay_s),
    }
}

fn link_transmittance(c: &ConnectionPlan) -> f64 {
    match &c.channel {
        Some(ChannelPlan::Fiber(p)) => db_to_transmittance(p.total_loss_db()),
        Some(ChannelPlan::FreeSpace { props, .. }) => db_to_transmittance(props.loss_db),
        _ => 1.0,
    }
}

/// Optical outputs reached from an input gate, with the power fraction each
/// receives. Eve's bypass is left out: this is the honest path.
fn routes(device: &Device, input_index: u32) -> Vec<(&'static str, u32, f64)> {
    let ins = |db: f64| db_to_transmittance(db);
    match device {
        Device::Laser(_) => vec![("out", 0, 1.0)],
        Device::Attenuator(Some(a)) => vec![("out", 0, a.transmittance())],
        Device::VariableAttenuator(Some(a)) => vec![("out", 0, ins(a.insertion_loss_db))],
        Device::PolarizationModulator(Some(m)) => vec![("out", 0, ins(m.insertion_loss_db))],
        Device::PolarizationRotator(Some(r)) => vec![("out", 0, ins(r.insertion_loss_db))],
        Device::Beamsplitter(Some(b)) => {
            let i = input_index.min(1);
            vec![("out", i, b.transmittance), ("out", 1 - i, b.reflectance)]
        }
        // Averaged over the four BB84 states the two ports share the light equally.
        Device::PolarizingBeamsplitter(Some(p)) => {
            let t = ins(p.insertion_loss_db);
            vec![("out", 0, 0.5 * t), ("out", 1, 0.5 * t)]
        }
        Device::Circulator(Some(c)) => vec![("out", (input_index + 1) % 3, ins(c.insertion_loss_db))],
        Device::Coupler(Some(c)) => vec![("out", 0, ins(c.insertion_loss_db))],
        Device::Eve => vec![("out", 0, 1.0)],
        _ => Vec::new(),
    }
}

/// Earliest arrival time at every module input reachable from the lasers.
fn path_delays(plan: &Plan) -> BTreeMap<String, SimTime> {
    let mut best: BTreeMap<String, SimTime> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for m in &plan.modules {
        if matches!(m.device, Device::Laser(_)) {
            best.insert(m.path.clone(), SimTime::ZERO);
            queue.push_back((m.path.clone(), 0u32, SimTime::ZERO));
        }
    }
    let mut steps = 0usize;
    while let Some((path, input, t)) = queue.pop_front() {
        steps += 1;
        if steps > 100_000 {
            break;
        }
        let Some(m) = plan.module(&path) else { continue };
        for (gate, idx, _) in routes(&m.device, input) {
            let Some(c) = plan.link_from(&path, gate, idx) else { continue };
            let at = t + link_delay(plan, c, 0);
            let better = best.get(&c.to.module).map_or(true, |&b| at < b);
            if better {
                best.insert(c.to.module.clone(), at);
                queue.push_back((c.to.module.clone(), c.to.index, at));
            }
        }
    }
    best
}

fn spd_timing(plan: &Plan, path: &str, spd: &crate::components::Spd, delays: &BTreeMap<String, SimTime>) -> SpdTiming {
    let first_trigger = plan
        .protocol
        .as_ref()
        .map_or(SimTime::ZERO, |p| SimTime::from_secs_f64(p.slot_period_s));
    let first_open = match spd.gate_offset_s {
        Some(o) => SimTime::from_secs_f64(o),
        None => {
            let arrival = first_trigger + delays.get(path).copied().unwrap_or(SimTime::ZERO);
            arrival.saturating_sub(SimTime::from_secs_f64(spd.gate_lead_s))
        }
    };
    SpdTiming {
        first_open,
        period: SimTime::from_secs_f64(spd.gate_period_s),
        width: SimTime::from_secs_f64(spd.gate_width_s),
        gate_count: plan.pulses,
    }
}

/// Walks the honest path from where Alice sets the intensity to the
/// detectors and returns `η_sys` (transmittance × efficiency × the share of
/// the pulse inside the gate, summed over detectors) and `Y0`.
fn calibrate(
    plan: &Plan,
    timings: &BTreeMap<String, SpdTiming>,
    delays: &BTreeMap<String, SimTime>,
) -> Option<ChannelModel> {
    let alice = plan.alice.as_deref()?;
    let laser_path = &plan.link_from(alice, "laser", 0)?.to.module;
    let Device::Laser(Some(laser)) = &plan.module(laser_path)?.device else {
        return Some(ChannelModel { eta_sys: 0.0, y0: 0.0 });
    };
    let start = plan
        .link_from(alice, "intensity", 0)
        .map_or(laser_path.clone(), |c| c.to.module.clone());
    let period = SimTime::from_secs_f64(plan.protocol.as_ref()?.slot_period_s);

    let total = laser.shape.integral(0.0, laser.duration_s);
    let coverage = |path: &str| -> f64 {
        let (Some(t), Some(d)) = (timings.get(path), delays.get(path)) else {
            return 0.0;
        };
        if total <= 0.0 {
            return 0.0;
        }
        // Offset of the pulse start from the opening of its gate.
        let arrival = (period + *d).as_ps() as i128;
        let off = (arrival - t.first_open.as_ps() as i128) as f64 * 1e-12;
        let g = t.gate_for(period + *d, SimTime::from_secs_f64(laser.duration_s));
        if g != Some(0) {
            return 0.0;
        }
        let a = (-off).max(0.0);
        let b = (t.width.as_secs_f64() - off).min(laser.duration_s);
        if b <= a {
            0.0
        } else {
            laser.shape.integral(a, b) / total
        }
    };

    let mut eta = 0.0;
    let mut no_dark = 1.0;
    let mut seen_detectors = HashSet::new();
    // The intensity modulator output carries exactly the commanded MPN.
    let mut stack = Vec::new();
    if let Some(c) = plan.link_from(&start, "out", 0) {
        stack.push((c.to.module.clone(), c.to.index, link_transmittance(c), 0u32));
    }
    while let Some((path, input, t, depth)) = stack.pop() {
        if depth > 64 || t <= 0.0 {
            continue;
        }
        let Some(m) = plan.module(&path) else { continue };
        let outs = match &m.device {
            Device::Spd(Some(s)) => {
                eta += t * s.efficiency * coverage(&path);
                if seen_detectors.insert(path.clone()) {
                    no_dark *= 1.0 - s.dark_count_prob;
                }
                continue;
            }
            d => routes(d, input),
        };
        for (gate, idx, f) in outs {
            if let Some(c) = plan.link_from(&path, gate, idx) {
                stack.push((c.to.module.clone(), c.to.index, t * f * link_transmittance(c), depth + 1));
            }
        }
    }
    Some(ChannelModel {
        eta_sys: eta.min(1.0),
        y0: 1.0 - no_dark,
    })
}

fn invalid(path: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(vec![ConfigIssue {
        path: path.to_owned(),
        message: message.into(),
    }])
}

/// Instantiates every module and channel of a validated plan. RNG streams
/// are derived from `seed` and named by module path (channels by the gate
/// they leave from).
pub fn build_network(plan: Plan, seed: u64) -> Result<BuiltNetwork, ScenarioError> {
    let delays = path_delays(&plan);
    let mut timings = BTreeMap::new();
    for m in &plan.modules {
        if let Device::Spd(Some(s)) = &m.device {
            timings.insert(m.path.clone(), spd_timing(&plan, &m.path, s, &delays));
        }
    }
    let channel_model = match &plan.protocol {
        Some(p) if p.decoy.is_some() => match p.calibration {
            Some(c) => Some(ChannelModel {
                eta_sys: c.eta_sys,
                y0: c.y0,
            }),
            None => calibrate(&plan, &timings, &delays),
        },
        _ => None,
    };

    let mut sim = Sim::new(seed);
    let mut detectors = Vec::new();
    for m in &plan.modules {
        let module: Box<dyn Module<Message>> = match &m.device {
            Device::Laser(props) => {
                let source = match props {
                    Some(p) => Some(
                        LaserSource::new(p.clone()).map_err(|e| invalid(&format!("modules.{}", m.path), e.to_string()))?,
                    ),
                    None => None,
                };
                Box::new(LaserModule::new(source))
            }
            Device::Attenuator(p) => Box::new(AttenuatorModule::new(p.clone())),
            Device::VariableAttenuator(p) => Box::new(VariableAttenuatorModule::new(p.clone())),
            Device::Beamsplitter(p) => Box::new(BeamsplitterModule::new(p.clone())),
            Device::PolarizingBeamsplitter(p) => Box::new(PbsModule::new(p.clone())),
            Device::Circulator(p) => Box::new(CirculatorModule::new(p.clone())),
            Device::Coupler(p) => Box::new(CouplerModule::new(p.clone())),
            Device::PolarizationModulator(p) => Box::new(ModulatorModule::new(p.clone())),
            Device::PolarizationRotator(p) => Box::new(RotatorModule::new(p.clone())),
            Device::Spd(p) => {
                detectors.push(m.path.clone());
                let timing = timings.get(&m.path).copied().unwrap_or(SpdTiming {
                    first_open: SimTime::ZERO,
                    period: SimTime::from_ps(1),
                    width: SimTime::ZERO,
                    gate_count: 0,
                });
                Box::new(SpdModule::new(p.clone(), timing))
            }
            Device::ClassicalDetector(p) => Box::new(ClassicalDetectorModule::new(p.clone())),
            Device::Sink => Box::new(SinkModule::default()),
            Device::Alice => {
                let p = plan.protocol.as_ref().expect("validated");
                Box::new(AliceModule::new(AliceParams {
                    period: SimTime::from_secs_f64(p.slot_period_s),
                    pulses: plan.pulses,
                    signal_mpn: p.signal_mpn,
                    decoy: p.decoy.clone(),
                    reference: p.reference,
                    announce_batch: p.announce_batch,
                }))
            }
            Device::Bob => {
                let p = plan.protocol.as_ref().expect("validated");
                let period = SimTime::from_secs_f64(p.slot_period_s);
                let rotator_delay = plan
                    .link_from(&m.path, "basis", 0)
                    .and_then(|c| delays.get(&c.to.module).copied())
                    .unwrap_or(SimTime::ZERO);
                Box::new(BobModule::new(BobParams {
                    period,
                    pulses: plan.pulses,
                    first_arrival: period + rotator_delay,
                    reference: p.reference,
                    controller: p.controller.clone(),
                    announce_batch: p.announce_batch,
                }))
            }
            Device::Eve => {
                let mode = plan.protocol.as_ref().map(|p| p.eve.mode).unwrap_or_default();
                Box::new(EveModule::new(mode))
            }
        };
        sim.add_module(&m.path, module)?;
    }

    for c in &plan.connections {
        let name = format!("channel/{}", c.from);
        let channel: Option<Box<dyn crate::kernel::Channel<Message>>> = match &c.channel {
            None => None,
            Some(ChannelPlan::Fiber(p)) => {
                let mut props: FiberProperties = p.clone();
                if props.drift_axis.is_none() {
                    let mut axis_rng = RngStream::derive(seed, &format!("{name}/axis"));
                    props.drift_axis = Some(StokesAxis::from_uniforms(axis_rng.uniform(), axis_rng.uniform()));
                }
                Some(Box::new(FiberChannel::new(props, RngStream::derive(seed, &name))))
            }
            Some(ChannelPlan::FreeSpace { props, delay_matched_to }) => {
                let mut props = props.clone();
                if delay_matched_to.is_some() {
                    props.delay_s = link_delay(&plan, c, 0).as_secs_f64();
                }
                Some(Box::new(FreeSpaceChannel::new(props, RngStream::derive(seed, &name))))
            }
            Some(ChannelPlan::Classical { delay_s }) => Some(Box::new(ClassicalChannel::new(*delay_s))),
        };
        sim.connect(
            &GateRef::new(c.from.module.clone(), c.from.gate.clone(), c.from.index),
            &c.to,
            channel,
        )?;
    }

    Ok(BuiltNetwork {
        sim,
        plan,
        path_delays: delays,
        channel_model,
        detectors,
    })
}
