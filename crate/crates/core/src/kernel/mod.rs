//! Minimal discrete-event engine.
//!
//! Modules own their state and react to messages delivered on named gates.
//! Gates are wired either directly (zero delay) or through a [`Channel`],
//! which may delay, transform or absorb what it carries. Events are dispatched
//! strictly in `(time, priority, seq)` order, one at a time.

mod rng;
mod time;

use std::any::Any;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::io::Write;

use thiserror::Error;

pub use rng::{derive_seed, RngStream};
pub use time::{SimTime, TICKS_PER_SECOND};

/// Priority used for ordinary deliveries.
pub const DEFAULT_PRIORITY: i32 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModuleId(u32);

impl ModuleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GateId(u32);

/// Something that can travel between modules.
pub trait Payload: 'static {
    /// Short label used in the event trace.
    fn kind(&self) -> &'static str;
}

/// A textual gate address: `module.path.gate` or `module.path.gate[3]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GateRef {
    pub module: String,
    pub gate: String,
    pub index: u32,
}

impl GateRef {
    pub fn new(module: impl Into<String>, gate: impl Into<String>, index: u32) -> Self {
        GateRef {
            module: module.into(),
            gate: gate.into(),
            index,
        }
    }

    pub fn parse(text: &str) -> Result<GateRef, SimError> {
        let bad = || SimError::BadGateRef(text.to_owned());
        let (module, gate_part) = text.rsplit_once('.').ok_or_else(bad)?;
        if module.is_empty() || gate_part.is_empty() {
            return Err(bad());
        }
        let (gate, index) = match gate_part.split_once('[') {
            Some((name, rest)) => {
                let idx = rest.strip_suffix(']').ok_or_else(bad)?;
                (name, idx.parse::<u32>().map_err(|_| bad())?)
            }
            None => (gate_part, 0),
        };
        if gate.is_empty() {
            return Err(bad());
        }
        Ok(GateRef::new(module, gate, index))
    }
}

impl fmt::Display for GateRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.index == 0 {
            write!(f, "{}.{}", self.module, self.gate)
        } else {
            write!(f, "{}.{}[{}]", self.module, self.gate, self.index)
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("module `{module}` scheduled an event at {requested} which is before now ({now})")]
    PastScheduling {
        module: String,
        now: SimTime,
        requested: SimTime,
    },
    #[error("gate `{0}` is not connected")]
    UnconnectedGate(String),
    #[error("gate `{0}` is already connected")]
    GateAlreadyConnected(String),
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("duplicate module path `{0}`")]
    DuplicateModule(String),
    #[error("malformed gate reference `{0}`")]
    BadGateRef(String),
    #[error("module `{module}`: {message}")]
    Model { module: String, message: String },
    #[error("trace output failed: {0}")]
    Trace(#[from] std::io::Error),
}

/// A module's reaction logic. All state lives in the implementor.
pub trait Module<M>: Any {
    fn initialize(&mut self, _ctx: &mut Context<'_, M>) -> Result<(), SimError> {
        Ok(())
    }

    /// Handles one delivered message. `arrival` is `None` for self-messages.
    fn handle(
        &mut self,
        msg: M,
        arrival: Option<GateId>,
        ctx: &mut Context<'_, M>,
    ) -> Result<(), SimError>;

    fn as_any(&self) -> &dyn Any;
}

/// What a channel hands back for a message it lets through.
#[derive(Debug)]
pub struct Transmission<M> {
    pub msg: M,
    pub delay: SimTime,
}

/// A connection model attached to a gate pair.
///
/// Channels must be FIFO: a message sent later never arrives earlier.
pub trait Channel<M>: Any {
    /// Returns `None` when the channel absorbs the message entirely.
    fn propagate(&mut self, msg: M, send_time: SimTime) -> Option<Transmission<M>>;

    /// Delay applied to every message, used for static path-length queries.
    fn nominal_delay(&self) -> SimTime;

    fn as_any(&self) -> &dyn Any;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct EventKey {
    time: SimTime,
    priority: i32,
    seq: u64,
}

struct Event<M> {
    key: EventKey,
    target: ModuleId,
    arrival: Option<GateId>,
    msg: M,
}

impl<M> PartialEq for Event<M> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<M> Eq for Event<M> {}

impl<M> PartialOrd for Event<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Event<M> {
    // BinaryHeap is a max-heap; invert so the smallest key pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key)
    }
}

#[derive(Clone, Copy, Debug)]
struct Link {
    peer_module: ModuleId,
    peer_gate: GateId,
    channel: Option<usize>,
}

#[derive(Debug)]
struct GateSlot {
    module: ModuleId,
    name: String,
    index: u32,
    /// Set on the sending side of a connection.
    outbound: Option<Link>,
    /// Set on the receiving side of a connection.
    inbound: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Warning {
    pub time: SimTime,
    pub module: String,
    pub message: String,
}

/// Stop conditions for [`Simulation::run`].
#[derive(Clone, Copy, Debug, Default)]
pub struct RunLimit {
    pub until: Option<SimTime>,
    pub max_events: Option<u64>,
}

impl RunLimit {
    pub fn unbounded() -> Self {
        RunLimit::default()
    }

    pub fn until(t: SimTime) -> Self {
        RunLimit {
            until: Some(t),
            max_events: None,
        }
    }

    pub fn events(n: u64) -> Self {
        RunLimit {
            until: None,
            max_events: Some(n),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    QueueEmpty,
    TimeLimit,
    EventBudget,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSummary {
    pub events_processed: u64,
    pub final_time: SimTime,
    pub stop_reason: StopReason,
}

/// Kernel state reachable from inside handlers.
pub struct Core<M> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Event<M>>,
    module_paths: Vec<String>,
    gates: Vec<GateSlot>,
    gate_lookup: HashMap<(ModuleId, String, u32), GateId>,
    channels: Vec<Box<dyn Channel<M>>>,
    master_seed: u64,
    trace: Option<Box<dyn Write>>,
    warnings: Vec<Warning>,
    events_processed: u64,
}

impl<M: Payload> Core<M> {
    fn push(&mut self, time: SimTime, priority: i32, target: ModuleId, arrival: Option<GateId>, msg: M) {
        let key = EventKey {
            time,
            priority,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.queue.push(Event {
            key,
            target,
            arrival,
            msg,
        });
    }

    fn gate_name(&self, gate: GateId) -> String {
        let slot = &self.gates[gate.0 as usize];
        GateRef::new(self.module_paths[slot.module.index()].clone(), slot.name.clone(), slot.index).to_string()
    }

    fn send_from(&mut self, msg: M, gate: GateId, priority: i32) -> Result<(), SimError> {
        let link = self.gates[gate.0 as usize]
            .outbound
            .ok_or_else(|| SimError::UnconnectedGate(self.gate_name(gate)))?;
        match link.channel {
            None => self.push(self.now, priority, link.peer_module, Some(link.peer_gate), msg),
            Some(ch) => {
                let now = self.now;
                if let Some(tx) = self.channels[ch].propagate(msg, now) {
                    self.push(now + tx.delay, priority, link.peer_module, Some(link.peer_gate), tx.msg);
                }
            }
        }
        Ok(())
    }
}

/// Handle passed to a module while it runs.
pub struct Context<'a, M> {
    core: &'a mut Core<M>,
    module: ModuleId,
}

impl<M: Payload> Context<'_, M> {
    pub fn now(&self) -> SimTime {
        self.core.now
    }

    pub fn module_id(&self) -> ModuleId {
        self.module
    }

    pub fn path(&self) -> &str {
        &self.core.module_paths[self.module.index()]
    }

    /// Looks up one of this module's gates; `None` if it was never wired.
    pub fn gate(&self, name: &str, index: u32) -> Option<GateId> {
        self.core
            .gate_lookup
            .get(&(self.module, name.to_owned(), index))
            .copied()
    }

    /// Like [`Context::gate`] but a missing gate is a configuration error.
    pub fn require_gate(&self, name: &str, index: u32) -> Result<GateId, SimError> {
        self.gate(name, index).ok_or_else(|| {
            SimError::UnconnectedGate(GateRef::new(self.path(), name, index).to_string())
        })
    }

    /// Gate name and index for a gate id.
    pub fn gate_info(&self, gate: GateId) -> (&str, u32) {
        let slot = &self.core.gates[gate.0 as usize];
        (&slot.name, slot.index)
    }

    pub fn send(&mut self, msg: M, gate: GateId) -> Result<(), SimError> {
        self.send_with_priority(msg, gate, DEFAULT_PRIORITY)
    }

    pub fn send_with_priority(&mut self, msg: M, gate: GateId, priority: i32) -> Result<(), SimError> {
        let slot = &self.core.gates[gate.0 as usize];
        if slot.module != self.module {
            return Err(SimError::Model {
                module: self.path().to_owned(),
                message: format!("cannot send on foreign gate `{}`", self.core.gate_name(gate)),
            });
        }
        self.core.send_from(msg, gate, priority)
    }

    /// Schedules a message to this module at absolute time `at`.
    pub fn schedule_self(&mut self, msg: M, at: SimTime, priority: i32) -> Result<(), SimError> {
        if at < self.core.now {
            return Err(SimError::PastScheduling {
                module: self.path().to_owned(),
                now: self.core.now,
                requested: at,
            });
        }
        let me = self.module;
        self.core.push(at, priority, me, None, msg);
        Ok(())
    }

    /// The stream `"<module path>/<purpose>"` derived from the master seed.
    pub fn rng(&self, purpose: &str) -> RngStream {
        RngStream::derive(self.core.master_seed, &format!("{}/{}", self.path(), purpose))
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("[{}] {}: {}", self.core.now, self.path(), message);
        let w = Warning {
            time: self.core.now,
            module: self.path().to_owned(),
            message,
        };
        self.core.warnings.push(w);
    }

    pub fn error(&self, message: impl Into<String>) -> SimError {
        SimError::Model {
            module: self.path().to_owned(),
            message: message.into(),
        }
    }
}

/// A network of modules plus the event queue that drives it.
pub struct Simulation<M> {
    modules: Vec<Box<dyn Module<M>>>,
    path_lookup: HashMap<String, ModuleId>,
    core: Core<M>,
    initialized: bool,
}

impl<M: Payload + 'static> Simulation<M> {
    pub fn new(master_seed: u64) -> Self {
        Simulation {
            modules: Vec::new(),
            path_lookup: HashMap::new(),
            core: Core {
                now: SimTime::ZERO,
                next_seq: 0,
                queue: BinaryHeap::new(),
                module_paths: Vec::new(),
                gates: Vec::new(),
                gate_lookup: HashMap::new(),
                channels: Vec::new(),
                master_seed,
                trace: None,
                warnings: Vec::new(),
                events_processed: 0,
            },
            initialized: false,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.core.master_seed
    }

    /// Enables the per-event trace: `time_ps,priority,seq,target_path,message_kind`.
    pub fn set_trace(&mut self, sink: Box<dyn Write>) {
        self.core.trace = Some(sink);
    }

    pub fn add_module(&mut self, path: &str, module: Box<dyn Module<M>>) -> Result<ModuleId, SimError> {
        if path.is_empty() || self.path_lookup.contains_key(path) {
            return Err(SimError::DuplicateModule(path.to_owned()));
        }
        let id = ModuleId(self.modules.len() as u32);
        self.modules.push(module);
        self.core.module_paths.push(path.to_owned());
        self.path_lookup.insert(path.to_owned(), id);
        Ok(id)
    }

    pub fn module_id(&self, path: &str) -> Option<ModuleId> {
        self.path_lookup.get(path).copied()
    }

    fn intern_gate(&mut self, r: &GateRef) -> Result<GateId, SimError> {
        let module = self
            .module_id(&r.module)
            .ok_or_else(|| SimError::UnknownModule(r.module.clone()))?;
        let key = (module, r.gate.clone(), r.index);
        if let Some(id) = self.core.gate_lookup.get(&key) {
            return Ok(*id);
        }
        let id = GateId(self.core.gates.len() as u32);
        self.core.gates.push(GateSlot {
            module,
            name: r.gate.clone(),
            index: r.index,
            outbound: None,
            inbound: false,
        });
        self.core.gate_lookup.insert(key, id);
        Ok(id)
    }

    fn gate_in_use(&self, id: GateId) -> bool {
        let g = &self.core.gates[id.0 as usize];
        g.outbound.is_some() || g.inbound
    }

    /// Wires `from` to `to`, optionally through a channel. Each gate takes part
    /// in at most one connection.
    pub fn connect(
        &mut self,
        from: &GateRef,
        to: &GateRef,
        channel: Option<Box<dyn Channel<M>>>,
    ) -> Result<(), SimError> {
        let src = self.intern_gate(from)?;
        let dst = self.intern_gate(to)?;
        for (id, r) in [(src, from), (dst, to)] {
            if self.gate_in_use(id) {
                return Err(SimError::GateAlreadyConnected(r.to_string()));
            }
        }
        if src == dst {
            return Err(SimError::GateAlreadyConnected(from.to_string()));
        }
        let channel = channel.map(|c| {
            self.core.channels.push(c);
            self.core.channels.len() - 1
        });
        let peer_module = self.core.gates[dst.0 as usize].module;
        self.core.gates[src.0 as usize].outbound = Some(Link {
            peer_module,
            peer_gate: dst,
            channel,
        });
        self.core.gates[dst.0 as usize].inbound = true;
        Ok(())
    }

    /// Calls every module's `initialize` in insertion order. Idempotent.
    pub fn initialize(&mut self) -> Result<(), SimError> {
        if self.initialized {
            return Ok(());
        }
        self.initialized = true;
        for (i, module) in self.modules.iter_mut().enumerate() {
            let mut ctx = Context {
                core: &mut self.core,
                module: ModuleId(i as u32),
            };
            module.initialize(&mut ctx)?;
        }
        Ok(())
    }

    /// Injects a message for `target` at absolute time `at` (test and bootstrap use).
    pub fn schedule(&mut self, target: &str, msg: M, at: SimTime, priority: i32) -> Result<(), SimError> {
        let id = self
            .module_id(target)
            .ok_or_else(|| SimError::UnknownModule(target.to_owned()))?;
        if at < self.core.now {
            return Err(SimError::PastScheduling {
                module: target.to_owned(),
                now: self.core.now,
                requested: at,
            });
        }
        self.core.push(at, priority, id, None, msg);
        Ok(())
    }

    pub fn run(&mut self, limit: RunLimit) -> Result<RunSummary, SimError> {
        self.initialize()?;
        let mut processed = 0u64;
        let stop_reason = loop {
            let Some(next) = self.core.queue.peek() else {
                break StopReason::QueueEmpty;
            };
            if limit.until.is_some_and(|u| next.key.time > u) {
                break StopReason::TimeLimit;
            }
            if limit.max_events.is_some_and(|n| processed >= n) {
                break StopReason::EventBudget;
            }
            let ev = self.core.queue.pop().expect("peeked");
            debug_assert!(ev.key.time >= self.core.now);
            self.core.now = ev.key.time;
            if let Some(trace) = self.core.trace.as_mut() {
                writeln!(
                    trace,
                    "{},{},{},{},{}",
                    ev.key.time.as_ps(),
                    ev.key.priority,
                    ev.key.seq,
                    self.core.module_paths[ev.target.index()],
                    ev.msg.kind()
                )?;
            }
            let mut ctx = Context {
                core: &mut self.core,
                module: ev.target,
            };
            self.modules[ev.target.index()].handle(ev.msg, ev.arrival, &mut ctx)?;
            processed += 1;
        };
        self.core.events_processed += processed;
        if let Some(trace) = self.core.trace.as_mut() {
            trace.flush()?;
        }
        Ok(RunSummary {
            events_processed: processed,
            final_time: self.core.now,
            stop_reason,
        })
    }

    pub fn now(&self) -> SimTime {
        self.core.now
    }

    pub fn events_processed(&self) -> u64 {
        self.core.events_processed
    }

    pub fn pending_events(&self) -> usize {
        self.core.queue.len()
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.core.warnings
    }

    pub fn module_paths(&self) -> &[String] {
        &self.core.module_paths
    }

    /// Typed access to a module after (or between) runs.
    pub fn module<T: 'static>(&self, path: &str) -> Option<&T> {
        let id = self.module_id(path)?;
        self.modules[id.index()].as_any().downcast_ref::<T>()
    }

    /// All modules of concrete type `T`, with their paths, in insertion order.
    pub fn modules_of<T: 'static>(&self) -> impl Iterator<Item = (&str, &T)> {
        self.modules
            .iter()
            .zip(&self.core.module_paths)
            .filter_map(|(m, p)| m.as_any().downcast_ref::<T>().map(|t| (p.as_str(), t)))
    }

    pub fn channels_of<T: 'static>(&self) -> impl Iterator<Item = &T> {
        self.core
            .channels
            .iter()
            .filter_map(|c| c.as_any().downcast_ref::<T>())
    }

    /// Nominal delay of the channel attached to an outbound gate, if any.
    pub fn link_delay(&self, from: &GateRef) -> Option<SimTime> {
        let m = self.module_id(&from.module)?;
        let id = self.core.gate_lookup.get(&(m, from.gate.clone(), from.index))?;
        let link = self.core.gates[id.0 as usize].outbound?;
        Some(
            link.channel
                .map(|c| self.core.channels[c].nominal_delay())
                .unwrap_or(SimTime::ZERO),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;
    use std::rc::Rc;

    #[derive(Debug, Clone, PartialEq)]
    enum Msg {
        Ping(u32),
        Tick,
    }

    impl Payload for Msg {
        fn kind(&self) -> &'static str {
            match self {
                Msg::Ping(_) => "ping",
                Msg::Tick => "tick",
            }
        }
    }

    type Log = Rc<RefCell<Vec<(SimTime, String, Msg)>>>;

    struct Recorder {
        log: Log,
        forward: Option<&'static str>,
    }

    impl Module<Msg> for Recorder {
        fn handle(&mut self, msg: Msg, _arrival: Option<GateId>, ctx: &mut Context<'_, Msg>) -> Result<(), SimError> {
            self.log.borrow_mut().push((ctx.now(), ctx.path().to_owned(), msg.clone()));
            if let Some(g) = self.forward {
                let gate = ctx.require_gate(g, 0)?;
                ctx.send(msg, gate)?;
            }
            Ok(())
        }

        fn as_any(&self) -> &dyn Any {
            self
        }
    }

    struct Delay(SimTime);

    impl Channel<Msg> for Delay {
        fn propagate(&mut self, msg: Msg, _send_time: SimTime) -> Option<Transmission<Msg>> {
            Some(Transmission { msg, delay: self.0 })
        }

        fn nominal_delay(&self) -> SimTime {
            self.0
        }

        fn as_any(&self) -> &dyn Any {
            self
        }
    }

    fn recorder(log: &Log, forward: Option<&'static str>) -> Box<dyn Module<Msg>> {
        Box::new(Recorder {
            log: log.clone(),
            forward,
        })
    }

    #[test]
    fn empty_queue_returns_immediately() {
        let mut sim: Simulation<Msg> = Simulation::new(1);
        let s = sim.run(RunLimit::unbounded()).unwrap();
        assert_eq!(s.events_processed, 0);
        assert_eq!(s.final_time, SimTime::ZERO);
        assert_eq!(s.stop_reason, StopReason::QueueEmpty);
    }

    #[test]
    fn single_self_message() {
        let log = Log::default();
        let mut sim = Simulation::new(1);
        sim.add_module("a", recorder(&log, None)).unwrap();
        sim.schedule("a", Msg::Tick, SimTime::from_secs_f64(5.0), 0).unwrap();
        let s = sim.run(RunLimit::unbounded()).unwrap();
        assert_eq!(s.events_processed, 1);
        assert_eq!(s.final_time, SimTime::from_secs_f64(5.0));
    }

    #[test]
    fn ordering_by_time_priority_then_fifo() {
        let log = Log::default();
        let mut sim = Simulation::new(1);
        sim.add_module("a", recorder(&log, None)).unwrap();
        let t = SimTime::from_ps(10);
        sim.schedule("a", Msg::Ping(1), t + SimTime::from_ps(1), 0).unwrap();
        sim.schedule("a", Msg::Ping(2), t, 1).unwrap();
        sim.schedule("a", Msg::Ping(3), t, 0).unwrap();
        sim.schedule("a", Msg::Ping(4), t, 0).unwrap();
        sim.run(RunLimit::unbounded()).unwrap();
        let order: Vec<_> = log.borrow().iter().map(|(_, _, m)| m.clone()).collect();
        assert_eq!(order, vec![Msg::Ping(3), Msg::Ping(4), Msg::Ping(2), Msg::Ping(1)]);
    }

    #[test]
    fn direct_and_channel_delivery_times() {
        let log = Log::default();
        let mut sim = Simulation::new(1);
        sim.add_module("src", recorder(&log, Some("out"))).unwrap();
        sim.add_module("mid", recorder(&log, Some("out"))).unwrap();
        sim.add_module("dst", recorder(&log, None)).unwrap();
        sim.connect(&GateRef::parse("src.out").unwrap(), &GateRef::parse("mid.in").unwrap(), None)
            .unwrap();
        let d = SimTime::from_ps(1234);
        sim.connect(
            &GateRef::parse("mid.out").unwrap(),
            &GateRef::parse("dst.in").unwrap(),
            Some(Box::new(Delay(d))),
        )
        .unwrap();
        let t0 = SimTime::from_ps(100);
        sim.schedule("src", Msg::Ping(1), t0, 0).unwrap();
        sim.schedule("src", Msg::Ping(2), t0, 0).unwrap();
        sim.run(RunLimit::unbounded()).unwrap();
        let log = log.borrow();
        let at = |path: &str| -> Vec<(SimTime, Msg)> {
            log.iter()
                .filter(|(_, p, _)| p == path)
                .map(|(t, _, m)| (*t, m.clone()))
                .collect()
        };
        assert_eq!(at("mid"), vec![(t0, Msg::Ping(1)), (t0, Msg::Ping(2))]);
        assert_eq!(at("dst"), vec![(t0 + d, Msg::Ping(1)), (t0 + d, Msg::Ping(2))]);
    }

    #[test]
    fn unconnected_gate_is_fatal() {
        let log = Log::default();
        let mut sim = Simulation::new(1);
        sim.add_module("a", recorder(&log, Some("out"))).unwrap();
        sim.schedule("a", Msg::Tick, SimTime::ZERO, 0).unwrap();
        let err = sim.run(RunLimit::unbounded()).unwrap_err();
        assert!(matches!(err, SimError::UnconnectedGate(ref g) if g == "a.out"), "{err}");
    }

    #[test]
    fn gates_connect_once() {
        let log = Log::default();
        let mut sim: Simulation<Msg> = Simulation::new(1);
        sim.add_module("a", recorder(&log, None)).unwrap();
        sim.add_module("b", recorder(&log, None)).unwrap();
        let a = GateRef::parse("a.out").unwrap();
        sim.connect(&a, &GateRef::parse("b.in").unwrap(), None).unwrap();
        let err = sim.connect(&a, &GateRef::parse("b.in[1]").unwrap(), None).unwrap_err();
        assert!(matches!(err, SimError::GateAlreadyConnected(_)));
        assert!(matches!(
            sim.connect(&GateRef::parse("zz.out").unwrap(), &a, None),
            Err(SimError::UnknownModule(_))
        ));
    }

    struct PastScheduler;

    impl Module<Msg> for PastScheduler {
        fn handle(&mut self, _msg: Msg, _arrival: Option<GateId>, ctx: &mut Context<'_, Msg>) -> Result<(), SimError> {
            let back = ctx.now().saturating_sub(SimTime::from_ps(1));
            ctx.schedule_self(Msg::Tick, back, 0)
        }

        fn as_any(&self) -> &dyn Any {
            self
        }
    }

    #[test]
    fn scheduling_into_the_past_aborts() {
        let mut sim = Simulation::new(1);
        sim.add_module("p", Box::new(PastScheduler)).unwrap();
        sim.schedule("p", Msg::Tick, SimTime::from_ps(10), 0).unwrap();
        let err = sim.run(RunLimit::unbounded()).unwrap_err();
        assert!(matches!(err, SimError::PastScheduling { .. }));
    }

    #[test]
    fn limits_stop_the_loop() {
        let log = Log::default();
        let mut sim = Simulation::new(1);
        sim.add_module("a", recorder(&log, None)).unwrap();
        for i in 0..10 {
            sim.schedule("a", Msg::Ping(i), SimTime::from_ps(i as u64 * 10), 0).unwrap();
        }
        let s = sim.run(RunLimit::events(3)).unwrap();
        assert_eq!((s.events_processed, s.stop_reason), (3, StopReason::EventBudget));
        let s = sim.run(RunLimit::until(SimTime::from_ps(55))).unwrap();
        assert_eq!((s.events_processed, s.stop_reason), (3, StopReason::TimeLimit));
        assert_eq!(s.final_time, SimTime::from_ps(50));
        let s = sim.run(RunLimit::unbounded()).unwrap();
        assert_eq!(s.events_processed, 4);
        assert_eq!(sim.events_processed(), 10);
    }

    #[test]
    fn gate_ref_parsing() {
        assert_eq!(GateRef::parse("alice.laser.out").unwrap(), GateRef::new("alice.laser", "out", 0));
        assert_eq!(GateRef::parse("bob.click[1]").unwrap(), GateRef::new("bob", "click", 1));
        assert_eq!(GateRef::new("bob", "click", 1).to_string(), "bob.click[1]");
        for bad in ["out", ".out", "a.", "a.b[x]", "a.b[1"] {
            assert!(GateRef::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn trace_lines_follow_dispatch_order() {
        #[derive(Clone, Default)]
        struct Shared(Rc<RefCell<Vec<u8>>>);
        impl Write for Shared {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0.borrow_mut().extend_from_slice(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let log = Log::default();
        let buf = Shared::default();
        let mut sim = Simulation::new(1);
        sim.set_trace(Box::new(buf.clone()));
        sim.add_module("a", recorder(&log, None)).unwrap();
        sim.schedule("a", Msg::Tick, SimTime::from_ps(3), 2).unwrap();
        sim.schedule("a", Msg::Ping(0), SimTime::from_ps(3), 1).unwrap();
        sim.run(RunLimit::unbounded()).unwrap();
        let text = String::from_utf8(buf.0.borrow().clone()).unwrap();
        assert_eq!(text, "3,1,1,a,ping\n3,2,0,a,tick\n");
    }
}
