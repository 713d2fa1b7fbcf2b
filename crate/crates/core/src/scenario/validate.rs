use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::config::{ProtocolSettings, ScenarioConfig};
use crate::channels::{FiberProperties, FreeSpaceProperties};
use crate::components::{
    Attenuator, Beamsplitter, Circulator, ClassicalDetector, Coupler, Degradable, DeviceCondition, Laser,
    PolarizationModulator, PolarizationRotator, PolarizingBeamsplitter, Spd, VariableAttenuator,
    DEFAULT_DEGRADATION_FACTOR,
};
use crate::error::DomainError;
use crate::kernel::GateRef;
use crate::network::EveMode;

/// One problem found in a config, located by a dotted path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateDirection {
    In,
    Out,
}

/// A gate family of a module kind; `count > 1` means `name[0..count]`.
#[derive(Clone, Copy, Debug)]
pub struct GateSpec {
    pub name: &'static str,
    pub count: u32,
    pub direction: GateDirection,
}

const fn gin(name: &'static str, count: u32) -> GateSpec {
    GateSpec {
        name,
        count,
        direction: GateDirection::In,
    }
}

const fn gout(name: &'static str, count: u32) -> GateSpec {
    GateSpec {
        name,
        count,
        direction: GateDirection::Out,
    }
}

/// Catalogue entry for `list-components`.
#[derive(Clone, Copy, Debug)]
pub struct KindInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub gates: &'static [GateSpec],
    /// Property keys; a trailing `?` marks optional ones.
    pub properties: &'static [&'static str],
}

pub const KINDS: &[KindInfo] = &[
    KindInfo {
        name: "laser",
        summary: "pulsed laser, fires on each trigger",
        gates: &[gin("trigger", 1), gout("out", 1)],
        properties: &["wavelength_m", "shape", "duration_s", "pulse_energy_j", "repetition_period_s"],
    },
    KindInfo {
        name: "attenuator",
        summary: "fixed loss",
        gates: &[gin("in", 1), gout("out", 1)],
        properties: &["loss_db"],
    },
    KindInfo {
        name: "variable_attenuator",
        summary: "sets the output mean photon number on command",
        gates: &[gin("in", 1), gin("control", 1), gout("out", 1)],
        properties: &["insertion_loss_db?"],
    },
    KindInfo {
        name: "beamsplitter",
        summary: "in[i] transmits to out[i], reflects to out[1-i]",
        gates: &[gin("in", 2), gout("out", 2)],
        properties: &["transmittance", "reflectance", "reflection_phase_rad?"],
    },
    KindInfo {
        name: "polarizing_beamsplitter",
        summary: "out[0] carries H, out[1] carries V",
        gates: &[gin("in", 1), gout("out", 2)],
        properties: &["extinction_ratio_db?", "insertion_loss_db?"],
    },
    KindInfo {
        name: "circulator",
        summary: "in[i] leaves on out[(i+1) mod 3]",
        gates: &[gin("in", 3), gout("out", 3)],
        properties: &["insertion_loss_db?"],
    },
    KindInfo {
        name: "coupler",
        summary: "merges two inputs into one output",
        gates: &[gin("in", 2), gout("out", 1)],
        properties: &["insertion_loss_db?"],
    },
    KindInfo {
        name: "polarization_modulator",
        summary: "sets a commanded linear polarization",
        gates: &[gin("in", 1), gin("control", 1), gout("out", 1)],
        properties: &["insertion_loss_db?", "settle_time_s?"],
    },
    KindInfo {
        name: "polarization_rotator",
        summary: "rotates by a commanded angle about a fixed Stokes axis",
        gates: &[gin("in", 1), gin("control", 1), gout("out", 1)],
        properties: &["insertion_loss_db?", "axis?"],
    },
    KindInfo {
        name: "spd",
        summary: "gated single-photon detector; clicks leave on out",
        gates: &[gin("in", 1), gout("out", 1)],
        properties: &[
            "efficiency",
            "dark_count_prob?",
            "gate_width_s",
            "dead_time_s?",
            "jitter_sigma_s?",
            "gate_period_s",
            "gate_offset_s?",
            "gate_lead_s?",
        ],
    },
    KindInfo {
        name: "classical_detector",
        summary: "threshold detector for bright pulses",
        gates: &[gin("in", 1)],
        properties: &["threshold_j"],
    },
    KindInfo {
        name: "sink",
        summary: "absorbs anything",
        gates: &[gin("in", 1)],
        properties: &[],
    },
    KindInfo {
        name: "bb84_alice",
        summary: "BB84 transmitter driven by the protocol settings",
        gates: &[
            gout("laser", 1),
            gout("modulator", 1),
            gout("intensity", 1),
            gout("classical", 1),
            gin("classical_in", 1),
        ],
        properties: &[],
    },
    KindInfo {
        name: "bb84_bob",
        summary: "BB84 receiver; click[0] is the H detector, click[1] the V detector",
        gates: &[
            gout("basis", 1),
            gout("correction", 1),
            gout("classical", 1),
            gin("click", 2),
            gin("classical_in", 1),
        ],
        properties: &[],
    },
    KindInfo {
        name: "eve",
        summary: "eavesdropper, mode from protocol.eve.mode; pns forwards on bypass",
        gates: &[gin("in", 1), gout("out", 1), gout("bypass", 1)],
        properties: &[],
    },
];

pub fn kind_info(name: &str) -> Option<&'static KindInfo> {
    KINDS.iter().find(|k| k.name == name)
}

/// Validated device properties, already adjusted for the module condition.
/// `None` inside a variant means the device is damaged.
#[derive(Clone, Debug)]
pub enum Device {
    Laser(Option<Laser>),
    Attenuator(Option<Attenuator>),
    VariableAttenuator(Option<VariableAttenuator>),
    Beamsplitter(Option<Beamsplitter>),
    PolarizingBeamsplitter(Option<PolarizingBeamsplitter>),
    Circulator(Option<Circulator>),
    Coupler(Option<Coupler>),
    PolarizationModulator(Option<PolarizationModulator>),
    PolarizationRotator(Option<PolarizationRotator>),
    Spd(Option<Spd>),
    ClassicalDetector(Option<ClassicalDetector>),
    Sink,
    Alice,
    Bob,
    Eve,
}

#[derive(Clone, Debug)]
pub struct ModulePlan {
    pub path: String,
    pub kind: &'static KindInfo,
    pub device: Device,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FreeSpaceSpec {
    #[serde(default)]
    loss_db: f64,
    #[serde(default)]
    delay_s: Option<f64>,
    /// Copy the nominal delay of the link leaving this gate.
    #[serde(default)]
    delay_matched_to: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassicalSpec {
    #[serde(default)]
    delay_s: f64,
}

#[derive(Clone, Debug)]
pub enum ChannelPlan {
    Fiber(FiberProperties),
    FreeSpace {
        props: FreeSpaceProperties,
        delay_matched_to: Option<GateRef>,
    },
    Classical {
        delay_s: f64,
    },
}

#[derive(Clone, Debug)]
pub struct ConnectionPlan {
    pub from: GateRef,
    pub to: GateRef,
    pub channel: Option<ChannelPlan>,
}

/// A config that passed validation, with every record typed.
#[derive(Clone, Debug)]
pub struct Plan {
    pub modules: Vec<ModulePlan>,
    pub connections: Vec<ConnectionPlan>,
    pub pulses: u64,
    pub protocol: Option<ProtocolSettings>,
    pub alice: Option<String>,
    pub bob: Option<String>,
    pub eve: Option<String>,
}

impl Plan {
    pub fn module(&self, path: &str) -> Option<&ModulePlan> {
        self.modules.iter().find(|m| m.path == path)
    }

    /// The connection leaving `from`.
    pub fn link_from(&self, module: &str, gate: &str, index: u32) -> Option<&ConnectionPlan> {
        self.connections
            .iter()
            .find(|c| c.from.module == module && c.from.gate == gate && c.from.index == index)
    }

    /// The connection arriving at `to`.
    pub fn link_to(&self, module: &str, gate: &str, index: u32) -> Option<&ConnectionPlan> {
        self.connections
            .iter()
            .find(|c| c.to.module == module && c.to.gate == gate && c.to.index == index)
    }
}

struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn domain(&mut self, base: &str, e: DomainError) {
        match e {
            DomainError::OutOfRange { field, expected, value } => {
                self.push(format!("{base}.{field}"), format!("must be {expected}, got {value}"))
            }
            other => self.push(base, other.to_string()),
        }
    }
}

fn typed<T: DeserializeOwned>(props: &Map<String, Value>, base: &str, issues: &mut Issues) -> Option<T> {
    match serde_json::from_value(Value::Object(props.clone())) {
        Ok(v) => Some(v),
        Err(e) => {
            issues.push(base, e.to_string());
            None
        }
    }
}

fn device<T: DeserializeOwned + Degradable>(
    props: &Map<String, Value>,
    base: &str,
    issues: &mut Issues,
    condition: DeviceCondition,
    factor: f64,
    check: impl Fn(&T) -> Result<(), DomainError>,
) -> Option<Option<T>> {
    let v: T = typed(props, base, issues)?;
    if let Err(e) = check(&v) {
        issues.domain(base, e);
        return None;
    }
    Some(v.effective(condition, factor))
}

fn build_device(kind: &str, spec: &super::config::ModuleSpec, base: &str, issues: &mut Issues) -> Option<Device> {
    let factor = spec.degradation_factor.unwrap_or(DEFAULT_DEGRADATION_FACTOR);
    let (p, c) = (&spec.props, spec.condition);
    let d = match kind {
        "laser" => Device::Laser(device(p, base, issues, c, factor, Laser::validate)?),
        "attenuator" => Device::Attenuator(device(p, base, issues, c, factor, Attenuator::validate)?),
        "variable_attenuator" => {
            Device::VariableAttenuator(device(p, base, issues, c, factor, VariableAttenuator::validate)?)
        }
        "beamsplitter" => Device::Beamsplitter(device(p, base, issues, c, factor, Beamsplitter::validate)?),
        "polarizing_beamsplitter" => {
            Device::PolarizingBeamsplitter(device(p, base, issues, c, factor, PolarizingBeamsplitter::validate)?)
        }
        "circulator" => Device::Circulator(device(p, base, issues, c, factor, Circulator::validate)?),
        "coupler" => Device::Coupler(device(p, base, issues, c, factor, Coupler::validate)?),
        "polarization_modulator" => {
            Device::PolarizationModulator(device(p, base, issues, c, factor, PolarizationModulator::validate)?)
        }
        "polarization_rotator" => {
            Device::PolarizationRotator(device(p, base, issues, c, factor, PolarizationRotator::validate)?)
        }
        "spd" => Device::Spd(device(p, base, issues, c, factor, Spd::validate)?),
        "classical_detector" => {
            Device::ClassicalDetector(device(p, base, issues, c, factor, ClassicalDetector::validate)?)
        }
        other => {
            if let Some(k) = p.keys().next() {
                issues.push(format!("{base}.{k}"), format!("`{other}` takes no properties"));
                return None;
            }
            if c != DeviceCondition::Working {
                issues.push(format!("{base}.condition"), format!("`{other}` has no operating condition"));
            }
            match other {
                "sink" => Device::Sink,
                "bb84_alice" => Device::Alice,
                "bb84_bob" => Device::Bob,
                "eve" => Device::Eve,
                _ => unreachable!("kind checked against the catalogue"),
            }
        }
    };
    Some(d)
}

fn channel_plan(raw: &Map<String, Value>, base: &str, issues: &mut Issues) -> Option<ChannelPlan> {
    let mut rest = raw.clone();
    let kind = match rest.remove("type") {
        Some(Value::String(s)) => s,
        Some(_) => {
            issues.push(format!("{base}.type"), "must be a string");
            return None;
        }
        None => {
            issues.push(format!("{base}.type"), "missing (fiber, free_space or classical)");
            return None;
        }
    };
    match kind.as_str() {
        "fiber" => {
            let p: FiberProperties = typed(&rest, base, issues)?;
            if let Err(e) = p.validate() {
                issues.domain(base, e);
                return None;
            }
            Some(ChannelPlan::Fiber(p))
        }
        "free_space" => {
            let s: FreeSpaceSpec = typed(&rest, base, issues)?;
            let matched = match &s.delay_matched_to {
                Some(r) => match GateRef::parse(r) {
                    Ok(g) => Some(g),
                    Err(e) => {
                        issues.push(format!("{base}.delay_matched_to"), e.to_string());
                        return None;
                    }
                },
                None => None,
            };
            if matched.is_some() && s.delay_s.is_some() {
                issues.push(base, "give either `delay_s` or `delay_matched_to`, not both");
                return None;
            }
            let props = FreeSpaceProperties {
                loss_db: s.loss_db,
                delay_s: s.delay_s.unwrap_or(0.0),
            };
            if let Err(e) = props.validate() {
                issues.domain(base, e);
                return None;
            }
            Some(ChannelPlan::FreeSpace {
                props,
                delay_matched_to: matched,
            })
        }
        "classical" => {
            let s: ClassicalSpec = typed(&rest, base, issues)?;
            if !(s.delay_s.is_finite() && s.delay_s >= 0.0) {
                issues.push(format!("{base}.delay_s"), format!("must be >= 0, got {}", s.delay_s));
                return None;
            }
            Some(ChannelPlan::Classical { delay_s: s.delay_s })
        }
        other => {
            issues.push(
                format!("{base}.type"),
                format!("unknown channel type `{other}` (fiber, free_space or classical)"),
            );
            None
        }
    }
}

fn check_gate(
    r: &GateRef,
    want: GateDirection,
    kinds: &HashMap<&str, &'static KindInfo>,
    base: &str,
    issues: &mut Issues,
) -> bool {
    let Some(kind) = kinds.get(r.module.as_str()) else {
        issues.push(base, format!("module `{}` is not declared", r.module));
        return false;
    };
    let Some(g) = kind.gates.iter().find(|g| g.name == r.gate) else {
        let names: Vec<_> = kind.gates.iter().map(|g| g.name).collect();
        issues.push(
            base,
            format!("`{}` ({}) has no gate `{}`; gates: {}", r.module, kind.name, r.gate, names.join(", ")),
        );
        return false;
    };
    if r.index >= g.count {
        issues.push(base, format!("gate `{r}` index out of range (has {})", g.count));
        return false;
    }
    if g.direction != want {
        let dir = if want == GateDirection::Out { "an output" } else { "an input" };
        issues.push(base, format!("gate `{r}` is not {dir}"));
        return false;
    }
    true
}

fn range(issues: &mut Issues, path: &str, ok: bool, expected: &str, value: f64) {
    if !ok {
        issues.push(path, format!("must be {expected}, got {value}"));
    }
}

fn check_protocol(p: &ProtocolSettings, issues: &mut Issues) {
    range(
        issues,
        "protocol.slot_period_s",
        p.slot_period_s.is_finite() && p.slot_period_s > 0.0,
        "> 0",
        p.slot_period_s,
    );
    range(
        issues,
        "protocol.signal_mpn",
        p.signal_mpn.is_finite() && p.signal_mpn >= 0.0,
        ">= 0",
        p.signal_mpn,
    );
    if let Some(d) = &p.decoy {
        if let Err(e) = d.validate() {
            issues.domain("protocol.decoy", e);
        }
        if d.signal_mpn != p.signal_mpn {
            issues.push(
                "protocol.decoy.signal_mpn",
                format!("must equal protocol.signal_mpn ({})", p.signal_mpn),
            );
        }
    }
    let q = &p.qber;
    range(
        issues,
        "protocol.qber.sample_fraction",
        q.sample_fraction > 0.0 && q.sample_fraction <= 1.0,
        "within (0, 1]",
        q.sample_fraction,
    );
    range(
        issues,
        "protocol.qber.abort_threshold",
        (0.0..=1.0).contains(&q.abort_threshold),
        "within [0, 1]",
        q.abort_threshold,
    );
    if let Some(w) = q.window_s {
        range(issues, "protocol.qber.window_s", w.is_finite() && w > 0.0, "> 0", w);
    }
    if let Some(r) = &p.reference {
        range(
            issues,
            "protocol.reference.interval",
            r.interval >= 2,
            ">= 2",
            r.interval as f64,
        );
        range(issues, "protocol.reference.mpn", r.mpn.is_finite() && r.mpn >= 0.0, ">= 0", r.mpn);
    }
    if let Some(c) = &p.controller {
        if let Err(e) = c.validate() {
            issues.domain("protocol.controller", e);
        }
        if p.reference.is_none() {
            issues.push("protocol.controller", "needs protocol.reference pulses to estimate the error");
        }
    }
    range(
        issues,
        "protocol.announce_batch",
        p.announce_batch >= 1,
        ">= 1",
        p.announce_batch as f64,
    );
    if let Some(c) = &p.calibration {
        range(
            issues,
            "protocol.calibration.eta_sys",
            (0.0..=1.0).contains(&c.eta_sys),
            "within [0, 1]",
            c.eta_sys,
        );
        range(
            issues,
            "protocol.calibration.y0",
            (0.0..=1.0).contains(&c.y0),
            "within [0, 1]",
            c.y0,
        );
    }
}

/// Checks everything that can be checked before building, and collects all
/// problems rather than stopping at the first.
pub fn validate(cfg: &ScenarioConfig) -> Result<Plan, Vec<ConfigIssue>> {
    let mut issues = Issues(Vec::new());

    match (cfg.run.pulses, cfg.run.duration_s) {
        (Some(_), Some(_)) => issues.push("run", "give either `pulses` or `duration_s`, not both"),
        (None, None) => issues.push("run.pulses", "missing (or give `duration_s`)"),
        (None, Some(d)) => {
            range(&mut issues, "run.duration_s", d.is_finite() && d >= 0.0, ">= 0", d);
            if cfg.protocol.is_none() {
                issues.push("run.duration_s", "needs protocol.slot_period_s");
            }
        }
        _ => {}
    }
    range(
        &mut issues,
        "run.replications",
        cfg.run.replications >= 1,
        ">= 1",
        cfg.run.replications as f64,
    );
    if let Some(p) = &cfg.protocol {
        check_protocol(p, &mut issues);
    }

    if cfg.modules.is_empty() {
        issues.push("modules", "empty network, nothing to run");
    }
    let mut kinds: HashMap<&str, &'static KindInfo> = HashMap::new();
    let mut modules = Vec::new();
    let mut by_kind: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (path, spec) in &cfg.modules {
        let base = format!("modules.{path}");
        if path.is_empty() || path.contains(['[', ']', ' ']) {
            issues.push(&base, "module paths must be non-empty and free of brackets and spaces");
            continue;
        }
        let Some(kind) = kind_info(&spec.kind) else {
            let names: Vec<_> = KINDS.iter().map(|k| k.name).collect();
            issues.push(
                format!("{base}.kind"),
                format!("unknown module kind `{}`; known: {}", spec.kind, names.join(", ")),
            );
            continue;
        };
        kinds.insert(path, kind);
        by_kind.entry(kind.name).or_default().push(path);
        if let Some(f) = spec.degradation_factor {
            range(
                &mut issues,
                &format!("{base}.degradation_factor"),
                f.is_finite() && f > 0.0,
                "> 0",
                f,
            );
        }
        if let Some(device) = build_device(kind.name, spec, &base, &mut issues) {
            modules.push(ModulePlan {
                path: path.clone(),
                kind,
                device,
            });
        }
    }

    let mut connections = Vec::new();
    let mut used: HashMap<(String, String, u32), usize> = HashMap::new();
    for (i, c) in cfg.connections.iter().enumerate() {
        let base = format!("connections[{i}]");
        let from = GateRef::parse(&c.from).map_err(|e| issues.push(format!("{base}.from"), e.to_string()));
        let to = GateRef::parse(&c.to).map_err(|e| issues.push(format!("{base}.to"), e.to_string()));
        let channel = match &c.channel {
            Some(raw) => channel_plan(raw, &format!("{base}.channel"), &mut issues).map(Some),
            None => Some(None),
        };
        let (Ok(from), Ok(to)) = (from, to) else {
            continue;
        };
        let ok_from = check_gate(&from, GateDirection::Out, &kinds, &format!("{base}.from"), &mut issues);
        let ok_to = check_gate(&to, GateDirection::In, &kinds, &format!("{base}.to"), &mut issues);
        for (r, field) in [(&from, "from"), (&to, "to")] {
            let key = (r.module.clone(), r.gate.clone(), r.index);
            if let Some(prev) = used.insert(key, i) {
                issues.push(
                    format!("{base}.{field}"),
                    format!("gate `{r}` is already used by connections[{prev}]"),
                );
            }
        }
        if let (true, true, Some(channel)) = (ok_from, ok_to, channel) {
            connections.push(ConnectionPlan { from, to, channel });
        }
    }
    for (i, c) in connections.iter().enumerate() {
        if let Some(ChannelPlan::FreeSpace {
            delay_matched_to: Some(r),
            ..
        }) = &c.channel
        {
            let target = connections.iter().find(|o| &o.from == r);
            if target.is_none() {
                issues.push(
                    format!("connections[{i}].channel.delay_matched_to"),
                    format!("no connection leaves `{r}`"),
                );
            }
        }
    }

    let single = |issues: &mut Issues, kind: &str| -> Option<String> {
        let found = by_kind.get(kind)?;
        if found.len() > 1 {
            issues.push("modules", format!("at most one `{kind}` module is supported, found {}", found.len()));
        }
        Some(found[0].to_owned())
    };
    let alice = single(&mut issues, "bb84_alice");
    let bob = single(&mut issues, "bb84_bob");
    let eve = single(&mut issues, "eve");
    let wired = |module: &str, gate: &str, index: u32| {
        connections
            .iter()
            .any(|c| (c.from.module == module && c.from.gate == gate && c.from.index == index)
                || (c.to.module == module && c.to.gate == gate && c.to.index == index))
    };
    match (&alice, &bob) {
        (Some(a), Some(b)) => {
            let Some(p) = &cfg.protocol else {
                issues.push("protocol", "required when a bb84_alice module is present");
                return Err(issues.0);
            };
            for (m, g) in [(a.as_str(), "laser"), (a.as_str(), "modulator"), (b.as_str(), "basis")] {
                if !wired(m, g, 0) {
                    issues.push(format!("modules.{m}"), format!("gate `{g}` must be connected"));
                }
            }
            if !wired(b, "click", 0) && !wired(b, "click", 1) {
                issues.push(format!("modules.{b}"), "no detector is connected to `click`");
            }
            let needs_intensity = p.decoy.is_some() || p.reference.as_ref().is_some_and(|r| r.mpn != p.signal_mpn);
            if needs_intensity && !wired(a, "intensity", 0) {
                issues.push(
                    format!("modules.{a}"),
                    "gate `intensity` must be connected to a variable_attenuator when intensities vary",
                );
            }
            if p.controller.is_some() && !wired(b, "correction", 0) {
                issues.push(format!("modules.{b}"), "gate `correction` must be connected when a controller is configured");
            }
            for m in &modules {
                if let Device::Spd(Some(s)) = &m.device {
                    if (s.gate_period_s - p.slot_period_s).abs() > 1e-9 * p.slot_period_s {
                        issues.push(
                            format!("modules.{}.gate_period_s", m.path),
                            format!("must equal protocol.slot_period_s ({})", p.slot_period_s),
                        );
                    }
                }
            }
        }
        (Some(a), None) => issues.push(format!("modules.{a}"), "bb84_alice needs a bb84_bob"),
        (None, Some(b)) => issues.push(format!("modules.{b}"), "bb84_bob needs a bb84_alice"),
        (None, None) => {}
    }
    if let Some(p) = &cfg.protocol {
        if p.eve.mode != EveMode::Off && eve.is_none() {
            issues.push("protocol.eve.mode", "an eavesdropper mode needs an `eve` module");
        }
    }

    if !issues.0.is_empty() {
        return Err(issues.0);
    }
    Ok(Plan {
        modules,
        connections,
        pulses: cfg.pulses(),
        protocol: cfg.protocol.clone(),
        alice,
        bob,
        eve,
    })
}
