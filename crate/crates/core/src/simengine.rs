//! Deterministic discrete-event core.
//!
//! Events are ordered by `(time, kind, sequence)`, where the kind order
//! lets completions free capacity before arrivals at the same instant are
//! dispatched. Arrivals are pulled lazily from the [`RequestSource`] rather
//! than pre-loaded into the queue, so memory stays proportional to the
//! number of live workers.
//!
//! Energy is charged when it becomes certain: spin-up and spin-down when
//! they begin, busy energy when a request starts service and idle energy
//! when a worker leaves the idle state. Occupancy cost is charged once per
//! worker at death.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::Path;

use rustc_hash::FxHasher;

use crate::dispatch::{
    AssignOutcome, Assignment, DispatchPolicy, Dispatcher, SpinUpOutcome, WorkerPool,
};
use crate::error::{Error, Result};
use crate::model::{
    finalize_report, ideal_from_service, Platform, RawLedgers, Request, SimReport, WorkerClass,
    WorkerId, WorkerState,
};
use crate::tracegen::RequestSource;

/// Event kinds in tie-break priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    RequestComplete,
    SpinDownComplete,
    SpinUpComplete,
    IntervalTick,
    RequestArrival,
    IdleTimeout,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::RequestComplete => "request_complete",
            EventKind::SpinDownComplete => "spin_down_complete",
            EventKind::SpinUpComplete => "spin_up_complete",
            EventKind::IntervalTick => "interval_tick",
            EventKind::RequestArrival => "request_arrival",
            EventKind::IdleTimeout => "idle_timeout",
        }
    }
}

/// What an event refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subject {
    Request(u64),
    Worker(WorkerId),
    Tick(u64),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Request(id) => write!(f, "r{id}"),
            Subject::Worker(id) => write!(f, "{id}"),
            Subject::Tick(k) => write!(f, "t{k}"),
        }
    }
}

/// One processed event, as written to the optional event log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub subject: Subject,
}

/// A worker entering `state` at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub time: f64,
    pub worker: WorkerId,
    pub class: WorkerClass,
    pub state: WorkerState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub platform: Platform,
    /// Allocator period `T_s`.
    pub interval: f64,
    /// Idle time before spin-down, indexed by [`WorkerClass::index`].
    pub idle_timeout: [f64; 2],
    pub record_events: bool,
    pub record_timeline: bool,
}

impl SimConfig {
    /// Interval equal to the FPGA spin-up latency and idle timeouts equal to
    /// each class's spin-up latency.
    pub fn new(platform: Platform) -> Self {
        SimConfig {
            interval: platform.fpga.spin_up,
            idle_timeout: [platform.cpu.spin_up, platform.fpga.spin_up],
            platform,
            record_events: false,
            record_timeline: false,
        }
    }

    pub fn idle_timeout(&self, class: WorkerClass) -> f64 {
        self.idle_timeout[class.index()]
    }

    pub fn validate(&self) -> Result<()> {
        self.platform.validate()?;
        if !(self.interval > 0.0) || !self.interval.is_finite() {
            return Err(Error::param(format!(
                "scheduling interval must be positive, got {}",
                self.interval
            )));
        }
        if self.interval < self.platform.fpga.spin_up {
            return Err(Error::param(format!(
                "scheduling interval {} is shorter than the FPGA spin-up latency {}",
                self.interval, self.platform.fpga.spin_up
            )));
        }
        for t in self.idle_timeout {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::param(format!("idle timeout must be non-negative, got {t}")));
            }
        }
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::new(Platform::default())
    }
}

/// State visible to the allocator at an interval boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickContext {
    /// Tick `k` fires at `k * interval` and opens interval `k`.
    pub index: u64,
    pub time: f64,
    /// Idle plus busy FPGAs.
    pub fpgas_ready: usize,
    /// FPGAs still spinning up.
    pub fpgas_pending: usize,
}

impl TickContext {
    pub fn fpgas_allocated(&self) -> usize {
        self.fpgas_ready + self.fpgas_pending
    }
}

/// A worker allocated before the simulation starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialWorker {
    pub class: WorkerClass,
    pub alloc_start: f64,
    /// Pinned workers stay up until the end of the horizon.
    pub pinned: bool,
}

/// Allocation and dispatch hooks driven by the engine.
pub trait Scheduler {
    fn name(&self) -> String;

    /// Whether the engine should call [`Scheduler::on_tick`] every interval.
    fn periodic(&self) -> bool {
        true
    }

    fn dispatcher(&self) -> Dispatcher;

    fn initial_workers(&self, _config: &SimConfig) -> Vec<InitialWorker> {
        Vec::new()
    }

    /// Returns how many FPGAs to spin up now. Negative counts are rejected.
    fn on_tick(&mut self, ctx: &TickContext) -> i64;

    /// A request started `service` seconds of work on a worker of `class`.
    fn on_service_start(&mut self, _class: WorkerClass, _service: f64, _now: f64) {}

    /// An idle timeout fired before the end of the trace while `allocated`
    /// workers of `class` were up or spinning up. Returning true keeps the
    /// worker idle for another timeout period instead of spinning it down.
    fn keep_idle(&mut self, _class: WorkerClass, _allocated: usize) -> bool {
        false
    }

    /// A worker finished spinning down.
    fn on_worker_retired(&mut self, _class: WorkerClass, _alloc_context: u32, _lifetime: f64) {}
}

/// Everything a run produces besides the report.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: SimReport,
    /// Hash over every processed event's time, kind and subject.
    pub event_hash: u64,
    pub events_processed: u64,
    pub final_time: f64,
    pub events: Option<Vec<EventRecord>>,
    pub timeline: Option<Vec<Transition>>,
}

impl SimOutput {
    /// Writes the event log as `time_s,kind,subject` CSV.
    pub fn write_event_log(&self, path: &Path) -> Result<()> {
        let events = self.events.as_deref().ok_or_else(|| {
            Error::param("event log was not recorded; enable record_events")
        })?;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "time_s,kind,subject")?;
        for e in events {
            writeln!(out, "{:?},{},{}", e.time, e.kind.as_str(), e.subject)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    seq: u64,
    subject: Subject,
    /// Timer generation for idle timeouts.
    generation: u32,
}

impl Event {
    fn key(&self) -> (f64, EventKind, u64) {
        (self.time, self.kind, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Reversed so that `BinaryHeap` pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, ka, sa) = self.key();
        let (tb, kb, sb) = other.key();
        tb.total_cmp(&ta).then(kb.cmp(&ka)).then(sb.cmp(&sa))
    }
}

struct Engine<'a> {
    config: &'a SimConfig,
    scheduler: &'a mut dyn Scheduler,
    dispatcher: Dispatcher,
    pool: WorkerPool,
    heap: BinaryHeap<Event>,
    seq: u64,
    horizon: f64,
    raw: RawLedgers,
    ideal_service: f64,
    hasher: FxHasher,
    processed: u64,
    now: f64,
    events: Option<Vec<EventRecord>>,
    timeline: Option<Vec<Transition>>,
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: f64, kind: EventKind, subject: Subject, generation: u32) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            kind,
            seq: self.seq,
            subject,
            generation,
        });
    }

    fn record(&mut self, time: f64, kind: EventKind, subject: Subject) {
        self.processed += 1;
        time.to_bits().hash(&mut self.hasher);
        kind.hash(&mut self.hasher);
        subject.hash(&mut self.hasher);
        if let Some(log) = self.events.as_mut() {
            log.push(EventRecord { time, kind, subject });
        }
    }

    fn mark(&mut self, id: WorkerId, time: f64) {
        if let Some(tl) = self.timeline.as_mut() {
            let w = self.pool.worker(id);
            tl.push(Transition {
                time,
                worker: id,
                class: w.class,
                state: w.state,
            });
        }
    }

    fn spawn(&mut self, class: WorkerClass, at: f64, pinned: bool) -> WorkerId {
        let ctx = (self.pool.active(class) + self.pool.spinning_up(class)) as u32;
        let id = self.pool.spawn(class, at, ctx, pinned);
        self.on_spawned(id);
        id
    }

    fn on_spawned(&mut self, id: WorkerId) {
        let w = self.pool.worker(id);
        let (class, at, ready_at) = (w.class, w.alloc_start, w.ready_at);
        let params = self.pool.platform().get(class);
        self.raw.energy[class].spin_up_j += params.spin_up * params.busy_power;
        self.raw.spin_ups[class.index()] += 1;
        let alive = self.pool.alive(class) as u64;
        let peak = &mut self.raw.peak_workers[class.index()];
        *peak = (*peak).max(alive);
        self.mark(id, at);
        self.push(ready_at, EventKind::SpinUpComplete, Subject::Worker(id), 0);
    }

    fn start_service(&mut self, id: WorkerId, request: Request, now: f64) {
        let class = self.pool.worker(id).class;
        let params = self.pool.platform().get(class);
        let service = params.service_time(request.base_size);
        self.raw.energy[class].busy_j += service * params.busy_power;
        self.raw.requests_on[class.index()] += 1;
        self.scheduler.on_service_start(class, service, now);
        self.push(now + service, EventKind::RequestComplete, Subject::Worker(id), 0);
    }

    fn charge_idle(&mut self, id: WorkerId, idle_for: f64) {
        let class = self.pool.worker(id).class;
        let power = self.pool.platform().get(class).idle_power;
        self.raw.energy[class].idle_j += idle_for * power;
    }

    fn arm_idle_timer(&mut self, id: WorkerId, now: f64) {
        let w = self.pool.worker(id);
        let at = if w.pinned {
            self.horizon.max(now)
        } else {
            now + self.config.idle_timeout(w.class)
        };
        let generation = w.timer_gen;
        self.push(at, EventKind::IdleTimeout, Subject::Worker(id), generation);
    }

    fn apply(&mut self, a: Assignment, now: f64) {
        if a.spawned {
            self.on_spawned(a.worker);
        }
        if let AssignOutcome::Started { idle_for } = a.outcome {
            self.charge_idle(a.worker, idle_for);
            self.mark(a.worker, now);
            self.start_service(a.worker, a.request, now);
        }
    }

    fn handle_arrivals(&mut self, batch: &mut Vec<Request>, now: f64) -> Result<()> {
        let fpga = self.config.platform.fpga;
        for r in batch.iter() {
            self.record(now, EventKind::RequestArrival, Subject::Request(r.id));
            self.raw.requests_total += 1;
            self.ideal_service += fpga.service_time(r.base_size);
        }
        if batch.len() == 1 {
            let a = self.dispatcher.dispatch_one(&mut self.pool, batch.pop().unwrap(), now)?;
            self.apply(a, now);
        } else {
            for a in self.dispatcher.dispatch_pending(&mut self.pool, batch, now)? {
                self.apply(a, now);
            }
        }
        Ok(())
    }

    fn tick_context(&self, index: u64, time: f64) -> TickContext {
        TickContext {
            index,
            time,
            fpgas_ready: self.pool.active(WorkerClass::Fpga),
            fpgas_pending: self.pool.spinning_up(WorkerClass::Fpga),
        }
    }

    fn handle(&mut self, ev: Event) -> Result<()> {
        let now = ev.time;
        match (ev.kind, ev.subject) {
            (EventKind::RequestComplete, Subject::Worker(id)) => {
                let done = self.pool.complete(id, now)?;
                self.record(now, ev.kind, Subject::Request(done.finished.id));
                self.raw.requests_completed += 1;
                if now > done.finished.deadline {
                    self.raw.deadline_misses += 1;
                }
                match done.next {
                    Some(next) => self.start_service(id, next, now),
                    None => {
                        self.mark(id, now);
                        self.arm_idle_timer(id, now);
                    }
                }
            }
            (EventKind::SpinUpComplete, Subject::Worker(id)) => {
                self.record(now, ev.kind, ev.subject);
                let outcome = self.pool.finish_spin_up(id, now)?;
                self.mark(id, now);
                match outcome {
                    SpinUpOutcome::Started(r) => self.start_service(id, r, now),
                    SpinUpOutcome::Idle => self.arm_idle_timer(id, now),
                }
            }
            (EventKind::IdleTimeout, Subject::Worker(id)) => {
                let w = self.pool.worker(id);
                if w.state != WorkerState::Idle || w.timer_gen != ev.generation {
                    return Ok(());
                }
                let class = w.class;
                self.record(now, ev.kind, ev.subject);
                let allocated = self.pool.active(class) + self.pool.spinning_up(class);
                if now < self.horizon && self.scheduler.keep_idle(class, allocated) {
                    let at = now + self.config.idle_timeout(class);
                    self.push(at, EventKind::IdleTimeout, ev.subject, ev.generation);
                    return Ok(());
                }
                let idle_for = self.pool.begin_spin_down(id, now)?;
                self.charge_idle(id, idle_for);
                let class = self.pool.worker(id).class;
                let params = self.pool.platform().get(class);
                self.raw.energy[class].spin_down_j += params.spin_down * params.busy_power;
                let done_at = now + params.spin_down;
                self.mark(id, now);
                self.push(done_at, EventKind::SpinDownComplete, ev.subject, 0);
            }
            (EventKind::SpinDownComplete, Subject::Worker(id)) => {
                self.record(now, ev.kind, ev.subject);
                self.pool.finish_spin_down(id)?;
                self.mark(id, now);
                let w = self.pool.worker(id);
                let (class, start, ctx) = (w.class, w.alloc_start, w.alloc_context);
                let params = *self.pool.platform().get(class);
                self.raw.cost.charge_lifetime(&params, start, now);
                self.scheduler.on_worker_retired(class, ctx, now - start);
            }
            (EventKind::IntervalTick, Subject::Tick(k)) => {
                self.record(now, ev.kind, ev.subject);
                let ctx = self.tick_context(k, now);
                let count = self.scheduler.on_tick(&ctx);
                if count < 0 {
                    return Err(Error::Contract(format!(
                        "scheduler {} requested {count} FPGAs at tick {k}",
                        self.scheduler.name()
                    )));
                }
                for _ in 0..count {
                    self.spawn(WorkerClass::Fpga, now, false);
                }
                let next = (k + 1) as f64 * self.config.interval;
                if next < self.horizon {
                    self.push(next, EventKind::IntervalTick, Subject::Tick(k + 1), 0);
                }
            }
            (kind, subject) => {
                return Err(Error::Contract(format!("malformed event {kind:?} for {subject}")));
            }
        }
        Ok(())
    }
}

/// Simulates `source` to completion under `scheduler`.
///
/// Every request completes, possibly late, and every worker rides out its
/// idle timeout and spin-down before the report is built.
pub fn run(
    source: &(impl RequestSource + ?Sized),
    config: &SimConfig,
    scheduler: &mut dyn Scheduler,
) -> Result<SimOutput> {
    config.validate()?;
    let dispatcher = scheduler.dispatcher();
    let initial = scheduler.initial_workers(config);
    let mut pool = WorkerPool::new(config.platform);
    pool.set_idle_id_tracking(dispatcher.policy == DispatchPolicy::IndexPacking);
    let mut engine = Engine {
        config,
        dispatcher,
        pool,
        heap: BinaryHeap::new(),
        seq: 0,
        horizon: source.horizon(),
        raw: RawLedgers::default(),
        ideal_service: 0.0,
        hasher: FxHasher::default(),
        processed: 0,
        now: f64::NEG_INFINITY,
        events: config.record_events.then(Vec::new),
        timeline: config.record_timeline.then(Vec::new),
        scheduler,
    };
    for w in initial {
        engine.spawn(w.class, w.alloc_start, w.pinned);
    }
    if engine.scheduler.periodic() && engine.horizon > 0.0 {
        engine.push(0.0, EventKind::IntervalTick, Subject::Tick(0), 0);
    }

    let mut arrivals = source.requests().peekable();
    let mut batch = Vec::new();
    loop {
        let take_arrival = match (arrivals.peek(), engine.heap.peek()) {
            (None, None) => break,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(r), Some(ev)) => {
                (r.arrival, EventKind::RequestArrival) < (ev.time, ev.kind)
            }
        };
        if take_arrival {
            let first = arrivals.next().expect("peeked arrival");
            let now = first.arrival;
            batch.push(first);
            while let Some(r) = arrivals.next_if(|r| r.arrival == now) {
                batch.push(r);
            }
            engine.now = now;
            engine.handle_arrivals(&mut batch, now)?;
            batch.clear();
        } else {
            let ev = engine.heap.pop().expect("peeked event");
            engine.now = ev.time;
            engine.handle(ev)?;
        }
    }

    engine.raw.live_workers = engine.pool.alive_total() as u64;
    let ideal = ideal_from_service(engine.ideal_service, &config.platform.fpga);
    let report = finalize_report(&engine.raw, ideal)?;
    Ok(SimOutput {
        report,
        event_hash: engine.hasher.finish(),
        events_processed: engine.processed,
        final_time: if engine.processed == 0 { 0.0 } else { engine.now },
        events: engine.events,
        timeline: engine.timeline,
    })
}
