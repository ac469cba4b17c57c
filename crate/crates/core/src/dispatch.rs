//! Request-to-worker assignment.
//!
//! [`WorkerPool`] owns every simulated worker together with the ordered
//! views the dispatch policies scan: busy workers by completion time, idle
//! workers by how recently they went idle, and workers still spinning up.
//! A busy worker's queued load is `committed_until - now`, so ordering busy
//! workers by `committed_until` is ordering them by load.

use std::cmp::Reverse;
use std::collections::BTreeSet;

use ordered_float::OrderedFloat;

use crate::error::{Error, Result};
use crate::model::{Platform, Request, Worker, WorkerClass, WorkerId, WorkerState};

type Key = (OrderedFloat<f64>, Reverse<u32>);

fn key(t: f64, id: WorkerId) -> Key {
    (OrderedFloat(t), Reverse(id.0))
}

/// Whether `worker` can finish `request` by its deadline if assigned at `now`.
/// The deadline is inclusive.
#[inline]
pub fn can_meet_deadline(worker: &Worker, service: f64, request: &Request, now: f64) -> bool {
    worker.available_at(now) + service <= request.deadline
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DispatchPolicy {
    /// FPGAs before CPUs; within a class busiest first, then most recently
    /// idle, then spinning-up workers with the most queued load.
    EfficientFirst,
    /// Both classes merged into one list by decreasing load.
    IndexPacking,
    /// Rotate over all allocated workers.
    RoundRobin,
}

impl DispatchPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            DispatchPolicy::EfficientFirst => "efficient-first",
            DispatchPolicy::IndexPacking => "index-packing",
            DispatchPolicy::RoundRobin => "round-robin",
        }
    }
}

impl std::str::FromStr for DispatchPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "efficient-first" => Ok(DispatchPolicy::EfficientFirst),
            "index-packing" => Ok(DispatchPolicy::IndexPacking),
            "round-robin" => Ok(DispatchPolicy::RoundRobin),
            _ => Err(Error::param(format!("unknown dispatch policy '{s}'"))),
        }
    }
}

/// What to do when no allocated worker can meet a request's deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    /// Spin up a CPU worker with the request pre-queued on it.
    SpawnCpu,
    /// Queue on the FPGA that frees up first, spinning one up if none exist.
    /// The request may miss its deadline.
    EarliestFpga,
}

/// Outcome of handing a request to a worker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AssignOutcome {
    /// The worker was idle and starts the request now.
    Started { idle_for: f64 },
    /// The request waits behind other work or for spin-up.
    Queued,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub request: Request,
    pub worker: WorkerId,
    pub outcome: AssignOutcome,
    /// The worker was spun up for this request.
    pub spawned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpinUpOutcome {
    Started(Request),
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Completion {
    pub finished: Request,
    pub next: Option<Request>,
}

#[derive(Debug, Default, Clone)]
struct ClassIndex {
    busy: BTreeSet<Key>,
    idle: BTreeSet<Key>,
    idle_by_id: BTreeSet<u32>,
    spinning_up: BTreeSet<u32>,
    spinning_down: u32,
}

/// All workers of one simulation plus the per-class orderings.
#[derive(Debug, Clone)]
pub struct WorkerPool {
    platform: Platform,
    workers: Vec<Worker>,
    index: [ClassIndex; 2],
    /// Dispatchable workers of both classes, by id.
    allocated: BTreeSet<u32>,
    /// Whether `idle_by_id` is maintained. Only index packing reads it.
    track_idle_ids: bool,
}

impl WorkerPool {
    pub fn new(platform: Platform) -> Self {
        WorkerPool {
            platform,
            workers: Vec::new(),
            index: Default::default(),
            allocated: BTreeSet::new(),
            track_idle_ids: true,
        }
    }

    /// Turns the idle-by-id ordering on or off. Keeping it costs two set
    /// updates per idle transition, which only index packing needs; lookups
    /// fall back to a scan while it is off.
    pub fn set_idle_id_tracking(&mut self, on: bool) {
        self.track_idle_ids = on;
        for ix in &mut self.index {
            ix.idle_by_id = if on {
                ix.idle.iter().map(|&(_, Reverse(id))| id).collect()
            } else {
                BTreeSet::new()
            };
        }
    }

    fn lowest_idle_id(&self, class: WorkerClass) -> Option<u32> {
        let ix = &self.index[class.index()];
        if self.track_idle_ids {
            ix.idle_by_id.first().copied()
        } else {
            ix.idle.iter().map(|&(_, Reverse(id))| id).min()
        }
    }

    pub fn platform(&self) -> &Platform {
        &self.platform
    }

    pub fn worker(&self, id: WorkerId) -> &Worker {
        &self.workers[id.0 as usize]
    }

    pub fn workers(&self) -> &[Worker] {
        &self.workers
    }

    pub fn service_time(&self, class: WorkerClass, request: &Request) -> f64 {
        self.platform.get(class).service_time(request.base_size)
    }

    /// Idle plus busy workers of the class.
    pub fn active(&self, class: WorkerClass) -> usize {
        let ix = &self.index[class.index()];
        ix.busy.len() + ix.idle.len()
    }

    pub fn spinning_up(&self, class: WorkerClass) -> usize {
        self.index[class.index()].spinning_up.len()
    }

    pub fn busy_count(&self, class: WorkerClass) -> usize {
        self.index[class.index()].busy.len()
    }

    pub fn idle_count(&self, class: WorkerClass) -> usize {
        self.index[class.index()].idle.len()
    }

    /// Workers of the class that are not yet dead.
    pub fn alive(&self, class: WorkerClass) -> usize {
        self.active(class) + self.spinning_up(class) + self.index[class.index()].spinning_down as usize
    }

    pub fn alive_total(&self) -> usize {
        self.alive(WorkerClass::Cpu) + self.alive(WorkerClass::Fpga)
    }

    fn get_mut(&mut self, id: WorkerId) -> &mut Worker {
        &mut self.workers[id.0 as usize]
    }

    fn transition(&mut self, id: WorkerId, next: WorkerState) -> Result<()> {
        let w = self.get_mut(id);
        if !w.state.can_transition_to(next) {
            return Err(Error::Contract(format!(
                "{id} cannot go from {:?} to {:?}",
                w.state, next
            )));
        }
        w.state = next;
        Ok(())
    }

    /// Allocates a worker that becomes ready after its class's spin-up latency.
    pub fn spawn(&mut self, class: WorkerClass, at: f64, alloc_context: u32, pinned: bool) -> WorkerId {
        let id = WorkerId(self.workers.len() as u32);
        let params = *self.platform.get(class);
        self.workers
            .push(Worker::new(id, &params, at, alloc_context, pinned));
        self.index[class.index()].spinning_up.insert(id.0);
        self.allocated.insert(id.0);
        id
    }

    /// Hands `request` to worker `id`.
    pub fn assign(&mut self, id: WorkerId, request: Request, now: f64) -> Result<AssignOutcome> {
        let w = &self.workers[id.0 as usize];
        let class = w.class;
        let service = self.service_time(class, &request);
        match w.state {
            WorkerState::SpinningUp => {
                let w = self.get_mut(id);
                w.committed_until = w.available_at(now) + service;
                w.queue.push_back(request);
                Ok(AssignOutcome::Queued)
            }
            WorkerState::Busy => {
                let old = key(w.committed_until, id);
                let w = self.get_mut(id);
                w.committed_until = w.available_at(now) + service;
                w.queue.push_back(request);
                let new = key(w.committed_until, id);
                let ix = &mut self.index[class.index()];
                ix.busy.remove(&old);
                ix.busy.insert(new);
                Ok(AssignOutcome::Queued)
            }
            WorkerState::Idle => {
                let idle_key = key(w.idle_since, id);
                let idle_for = now - w.idle_since;
                self.transition(id, WorkerState::Busy)?;
                let w = self.get_mut(id);
                w.committed_until = now + service;
                w.running = Some(request);
                w.timer_gen = w.timer_gen.wrapping_add(1);
                let busy_key = key(w.committed_until, id);
                let ix = &mut self.index[class.index()];
                ix.idle.remove(&idle_key);
                if self.track_idle_ids {
                    ix.idle_by_id.remove(&id.0);
                }
                ix.busy.insert(busy_key);
                Ok(AssignOutcome::Started { idle_for })
            }
            state => Err(Error::Contract(format!(
                "request {} dispatched to {id} in state {state:?}",
                request.id
            ))),
        }
    }

    /// Spin-up finished: start the first queued request or go idle.
    pub fn finish_spin_up(&mut self, id: WorkerId, now: f64) -> Result<SpinUpOutcome> {
        let w = &self.workers[id.0 as usize];
        let class = w.class;
        if w.state != WorkerState::SpinningUp {
            return Err(Error::Contract(format!("{id} finished spin-up in state {:?}", w.state)));
        }
        self.index[class.index()].spinning_up.remove(&id.0);
        if self.workers[id.0 as usize].queue.is_empty() {
            self.transition(id, WorkerState::Idle)?;
            self.enter_idle(id, now);
            Ok(SpinUpOutcome::Idle)
        } else {
            self.transition(id, WorkerState::Busy)?;
            let w = self.get_mut(id);
            let first = w.queue.pop_front().expect("non-empty queue");
            w.running = Some(first);
            let k = key(w.committed_until, id);
            self.index[class.index()].busy.insert(k);
            Ok(SpinUpOutcome::Started(first))
        }
    }

    fn enter_idle(&mut self, id: WorkerId, now: f64) {
        let w = self.get_mut(id);
        w.idle_since = now;
        w.committed_until = now;
        w.timer_gen = w.timer_gen.wrapping_add(1);
        let class = w.class;
        let ix = &mut self.index[class.index()];
        ix.idle.insert(key(now, id));
        if self.track_idle_ids {
            ix.idle_by_id.insert(id.0);
        }
    }

    /// The running request finished: start the next one or go idle.
    pub fn complete(&mut self, id: WorkerId, now: f64) -> Result<Completion> {
        let w = self.get_mut(id);
        if w.state != WorkerState::Busy {
            return Err(Error::Contract(format!("{id} completed work in state {:?}", w.state)));
        }
        let finished = w
            .running
            .take()
            .ok_or_else(|| Error::Contract(format!("{id} completed with nothing running")))?;
        if let Some(next) = w.queue.pop_front() {
            w.running = Some(next);
            return Ok(Completion {
                finished,
                next: Some(next),
            });
        }
        let class = w.class;
        let k = key(w.committed_until, id);
        self.index[class.index()].busy.remove(&k);
        self.transition(id, WorkerState::Idle)?;
        self.enter_idle(id, now);
        Ok(Completion {
            finished,
            next: None,
        })
    }

    /// Idle timeout fired; returns how long the worker sat idle.
    pub fn begin_spin_down(&mut self, id: WorkerId, now: f64) -> Result<f64> {
        let w = &self.workers[id.0 as usize];
        let class = w.class;
        let idle_key = key(w.idle_since, id);
        let idle_for = now - w.idle_since;
        self.transition(id, WorkerState::SpinningDown)?;
        let ix = &mut self.index[class.index()];
        ix.idle.remove(&idle_key);
        if self.track_idle_ids {
            ix.idle_by_id.remove(&id.0);
        }
        ix.spinning_down += 1;
        self.allocated.remove(&id.0);
        Ok(idle_for)
    }

    pub fn finish_spin_down(&mut self, id: WorkerId) -> Result<()> {
        self.transition(id, WorkerState::Dead)?;
        let class = self.workers[id.0 as usize].class;
        self.index[class.index()].spinning_down -= 1;
        Ok(())
    }

    fn feasible(&self, id: u32, request: &Request, now: f64) -> bool {
        let w = &self.workers[id as usize];
        can_meet_deadline(w, self.service_time(w.class, request), request, now)
    }

    /// Busy worker of `class` with the highest load that still meets the deadline.
    fn best_busy(&self, class: WorkerClass, request: &Request, now: f64) -> Option<WorkerId> {
        let service = self.service_time(class, request);
        let bound = request.deadline - service;
        // The index is keyed on `committed_until`; a small slack above the
        // algebraic bound lets the exact predicate decide at the boundary.
        let slack = 4.0 * f64::EPSILON * request.deadline.abs().max(service).max(1.0);
        let hi = (OrderedFloat(bound + slack), Reverse(0));
        self.index[class.index()]
            .busy
            .range(..=hi)
            .rev()
            .map(|(_, Reverse(id))| *id)
            .find(|id| self.feasible(*id, request, now))
            .map(WorkerId)
    }

    /// Most recently idle worker of `class`, if idle workers meet the deadline.
    fn best_idle(&self, class: WorkerClass, request: &Request, now: f64) -> Option<WorkerId> {
        let (_, Reverse(id)) = *self.index[class.index()].idle.last()?;
        self.feasible(id, request, now).then_some(WorkerId(id))
    }

    /// Spinning-up worker with the most queued load that meets the deadline.
    fn best_spinning(&self, class: WorkerClass, request: &Request, now: f64) -> Option<WorkerId> {
        let mut best: Option<(f64, u32)> = None;
        for &id in &self.index[class.index()].spinning_up {
            if !self.feasible(id, request, now) {
                continue;
            }
            let load = self.workers[id as usize].queued_load(now);
            // Ascending id iteration keeps the lowest id on equal load.
            if best.is_none_or(|(l, _)| load > l) {
                best = Some((load, id));
            }
        }
        best.map(|(_, id)| WorkerId(id))
    }

    /// Efficient-first scan over the given classes, in order.
    pub fn find_efficient_first(
        &self,
        request: &Request,
        now: f64,
        classes: &[WorkerClass],
    ) -> Option<WorkerId> {
        classes.iter().find_map(|&class| {
            self.best_busy(class, request, now)
                .or_else(|| self.best_idle(class, request, now))
                .or_else(|| self.best_spinning(class, request, now))
        })
    }

    /// Highest-load feasible worker across the given classes.
    pub fn find_index_packing(
        &self,
        request: &Request,
        now: f64,
        classes: &[WorkerClass],
    ) -> Option<WorkerId> {
        let mut best: Option<(f64, u32)> = None;
        let mut consider = |load: f64, id: u32| {
            let better = match best {
                None => true,
                Some((l, bid)) => load > l || (load == l && id < bid),
            };
            if better {
                best = Some((load, id));
            }
        };
        for &class in classes {
            if let Some(id) = self.best_busy(class, request, now) {
                consider(self.workers[id.0 as usize].queued_load(now), id.0);
            }
            if let Some(id) = self.lowest_idle_id(class) {
                if self.feasible(id, request, now) {
                    consider(0.0, id);
                }
            }
            for &id in &self.index[class.index()].spinning_up {
                if self.feasible(id, request, now) {
                    consider(self.workers[id as usize].queued_load(now), id);
                }
            }
        }
        best.map(|(_, id)| WorkerId(id))
    }

    /// First feasible allocated worker at or after `cursor`, wrapping around.
    pub fn find_round_robin(
        &self,
        request: &Request,
        now: f64,
        cursor: u32,
        classes: &[WorkerClass],
    ) -> Option<WorkerId> {
        self.allocated
            .range(cursor..)
            .chain(self.allocated.range(..cursor))
            .copied()
            .find(|&id| {
                classes.contains(&self.workers[id as usize].class) && self.feasible(id, request, now)
            })
            .map(WorkerId)
    }

    /// Dispatchable FPGA that can start a new request soonest.
    fn earliest_fpga(&self, now: f64) -> Option<WorkerId> {
        let ix = &self.index[WorkerClass::Fpga.index()];
        let mut best: Option<(f64, u32)> = None;
        let candidates = ix
            .busy
            .iter()
            .take(1)
            .chain(ix.idle.iter().take(1))
            .map(|(_, Reverse(id))| *id)
            .chain(ix.spinning_up.iter().copied());
        for id in candidates {
            let at = self.workers[id as usize].available_at(now);
            if best.is_none_or(|(t, bid)| at < t || (at == t && id < bid)) {
                best = Some((at, id));
            }
        }
        best.map(|(_, id)| WorkerId(id))
    }
}

/// Policy plus the mutable state it needs across calls.
#[derive(Debug, Clone)]
pub struct Dispatcher {
    pub policy: DispatchPolicy,
    /// Worker classes the scan may choose from.
    pub classes: Vec<WorkerClass>,
    pub fallback: Fallback,
    cursor: u32,
}

impl Dispatcher {
    pub fn new(policy: DispatchPolicy, classes: Vec<WorkerClass>, fallback: Fallback) -> Self {
        Dispatcher {
            policy,
            classes,
            fallback,
            cursor: 0,
        }
    }

    /// Efficient-first over both classes with CPU spin-up on the dispatch path.
    pub fn hybrid(policy: DispatchPolicy) -> Self {
        Self::new(policy, WorkerClass::EFFICIENT_ORDER.to_vec(), Fallback::SpawnCpu)
    }

    pub fn find_available_worker(&self, pool: &WorkerPool, request: &Request, now: f64) -> Option<WorkerId> {
        match self.policy {
            DispatchPolicy::EfficientFirst => pool.find_efficient_first(request, now, &self.classes),
            DispatchPolicy::IndexPacking => pool.find_index_packing(request, now, &self.classes),
            DispatchPolicy::RoundRobin => pool.find_round_robin(request, now, self.cursor, &self.classes),
        }
    }

    /// Assigns one request, spinning up a worker if the policy finds none.
    pub fn dispatch_one(&mut self, pool: &mut WorkerPool, request: Request, now: f64) -> Result<Assignment> {
        if let Some(worker) = self.find_available_worker(pool, &request, now) {
            if self.policy == DispatchPolicy::RoundRobin {
                self.cursor = worker.0 + 1;
            }
            let outcome = pool.assign(worker, request, now)?;
            return Ok(Assignment {
                request,
                worker,
                outcome,
                spawned: false,
            });
        }
        let (worker, spawned) = match self.fallback {
            Fallback::SpawnCpu => {
                let ctx = pool.active(WorkerClass::Cpu) + pool.spinning_up(WorkerClass::Cpu);
                (pool.spawn(WorkerClass::Cpu, now, ctx as u32, false), true)
            }
            Fallback::EarliestFpga => match pool.earliest_fpga(now) {
                Some(w) => (w, false),
                None => {
                    let ctx = pool.active(WorkerClass::Fpga) + pool.spinning_up(WorkerClass::Fpga);
                    (pool.spawn(WorkerClass::Fpga, now, ctx as u32, false), true)
                }
            },
        };
        let outcome = pool.assign(worker, request, now)?;
        Ok(Assignment {
            request,
            worker,
            outcome,
            spawned,
        })
    }

    /// Assigns every pending request in deadline order (stable on ties).
    pub fn dispatch_pending(
        &mut self,
        pool: &mut WorkerPool,
        pending: &mut Vec<Request>,
        now: f64,
    ) -> Result<Vec<Assignment>> {
        pending.sort_by(|a, b| a.deadline.total_cmp(&b.deadline));
        pending
            .drain(..)
            .map(|r| self.dispatch_one(pool, r, now))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_DEADLINE_MULTIPLIER;

    fn req(id: u64, arrival: f64, size: f64) -> Request {
        Request::new(id, arrival, size, DEFAULT_DEADLINE_MULTIPLIER)
    }

    /// Pool with ready, idle workers of the given classes (all idle since t=0).
    fn ready_pool(classes: &[WorkerClass]) -> WorkerPool {
        let mut p = WorkerPool::new(Platform::default());
        for &c in classes {
            let id = p.spawn(c, -p.platform().get(c).spin_up, 0, false);
            assert_eq!(p.finish_spin_up(id, 0.0).unwrap(), SpinUpOutcome::Idle);
        }
        p
    }

    #[test]
    fn deadline_check_examples() {
        let p = ready_pool(&[WorkerClass::Cpu]);
        let r = req(0, 0.0, 0.01);
        assert_eq!(r.deadline, 0.1);
        assert!(can_meet_deadline(p.worker(WorkerId(0)), 0.01, &r, 0.0));

        let mut p = WorkerPool::new(Platform::default());
        let f = p.spawn(WorkerClass::Fpga, 0.0, 0, false);
        assert_eq!(p.worker(f).ready_at, 10.0);
        assert!(!can_meet_deadline(p.worker(f), 0.005, &r, 0.0));
    }

    #[test]
    fn deadline_boundary_is_inclusive() {
        let mut p = ready_pool(&[WorkerClass::Fpga]);
        let first = Request {
            id: 0,
            arrival: 0.0,
            base_size: 1.0,
            deadline: 10.0,
        };
        p.assign(WorkerId(0), first, 0.0).unwrap();
        assert_eq!(p.worker(WorkerId(0)).committed_until, 0.5);
        // committed_until == deadline - service exactly.
        let r = Request {
            id: 1,
            arrival: 0.0,
            base_size: 1.0,
            deadline: 1.0,
        };
        assert!(can_meet_deadline(p.worker(WorkerId(0)), 0.5, &r, 0.0));
        let d = Dispatcher::hybrid(DispatchPolicy::EfficientFirst);
        assert_eq!(d.find_available_worker(&p, &r, 0.0), Some(WorkerId(0)));
        let late = Request { deadline: 0.999, ..r };
        assert_eq!(d.find_available_worker(&p, &late, 0.0), None);
    }

    #[test]
    fn prefers_fpga_over_cpu() {
        let p = ready_pool(&[WorkerClass::Cpu, WorkerClass::Fpga]);
        let d = Dispatcher::hybrid(DispatchPolicy::EfficientFirst);
        let r = req(0, 0.0, 0.01);
        assert_eq!(d.find_available_worker(&p, &r, 0.0), Some(WorkerId(1)));
    }

    #[test]
    fn prefers_busiest_fpga() {
        let mut p = ready_pool(&[WorkerClass::Fpga, WorkerClass::Fpga]);
        p.assign(WorkerId(0), req(0, 0.0, 2.0), 0.0).unwrap(); // 1s of load
        p.assign(WorkerId(1), req(1, 0.0, 6.0), 0.0).unwrap(); // 3s of load
        let d = Dispatcher::hybrid(DispatchPolicy::EfficientFirst);
        let r = req(2, 0.0, 1.0);
        assert_eq!(d.find_available_worker(&p, &r, 0.0), Some(WorkerId(1)));
    }

    #[test]
    fn equal_load_breaks_to_lower_id() {
        let mut p = ready_pool(&[WorkerClass::Fpga, WorkerClass::Fpga, WorkerClass::Fpga]);
        p.assign(WorkerId(2), req(0, 0.0, 2.0), 0.0).unwrap();
        p.assign(WorkerId(1), req(1, 0.0, 2.0), 0.0).unwrap();
        let d = Dispatcher::hybrid(DispatchPolicy::EfficientFirst);
        assert_eq!(d.find_available_worker(&p, &req(2, 0.0, 1.0), 0.0), Some(WorkerId(1)));
    }

    #[test]
    fn idle_order_is_most_recent_first() {
        let mut p = WorkerPool::new(Platform::default());
        let a = p.spawn(WorkerClass::Cpu, 0.0, 0, false);
        let b = p.spawn(WorkerClass::Cpu, 0.0, 1, false);
        p.finish_spin_up(a, 0.005).unwrap();
        p.finish_spin_up(b, 0.005).unwrap();
        p.assign(a, req(0, 0.005, 0.01), 0.005).unwrap();
        p.complete(a, 0.015).unwrap();
        // a idle since 0.015, b since 0.005: a has been idle for less time.
        let d = Dispatcher::hybrid(DispatchPolicy::EfficientFirst);
        assert_eq!(d.find_available_worker(&p, &req(1, 0.02, 0.01), 0.02), Some(a));
    }

    #[test]
    fn nothing_feasible_returns_none() {
        let mut p = WorkerPool::new(Platform::default());
        p.spawn(WorkerClass::Fpga, 0.0, 0, false);
        let d = Dispatcher::hybrid(DispatchPolicy::EfficientFirst);
        assert_eq!(d.find_available_worker(&p, &req(0, 0.0, 0.01), 0.0), None);
    }

    #[test]
    fn packs_two_requests_on_one_fpga() {
        let mut p = ready_pool(&[WorkerClass::Fpga, WorkerClass::Fpga]);
        let mut d = Dispatcher::hybrid(DispatchPolicy::EfficientFirst);
        let mut pending = vec![req(0, 0.0, 0.02), req(1, 0.0, 0.02)];
        let out = d.dispatch_pending(&mut p, &mut pending, 0.0).unwrap();
        assert_eq!(out[0].worker, out[1].worker);
        assert_eq!(p.busy_count(WorkerClass::Fpga), 1);
        assert_eq!(p.idle_count(WorkerClass::Fpga), 1);
    }

    #[test]
    fn round_robin_rotates() {
        let mut p = ready_pool(&[WorkerClass::Cpu, WorkerClass::Cpu]);
        let mut d = Dispatcher::hybrid(DispatchPolicy::RoundRobin);
        let mut pending = vec![req(0, 0.0, 0.01), req(1, 0.0, 0.01), req(2, 0.0, 0.01)];
        let out = d.dispatch_pending(&mut p, &mut pending, 0.0).unwrap();
        let ws: Vec<u32> = out.iter().map(|a| a.worker.0).collect();
        assert_eq!(ws, vec![0, 1, 0]);
    }

    #[test]
    fn empty_pool_spawns_cpu() {
        let mut p = WorkerPool::new(Platform::default());
        let mut d = Dispatcher::hybrid(DispatchPolicy::EfficientFirst);
        let a = d.dispatch_one(&mut p, req(0, 0.0, 0.01), 0.0).unwrap();
        assert!(a.spawned);
        assert_eq!(a.outcome, AssignOutcome::Queued);
        let w = p.worker(a.worker);
        assert_eq!(w.class, WorkerClass::Cpu);
        assert_eq!(w.state, WorkerState::SpinningUp);
        assert_eq!(w.queue.len(), 1);
        assert!(w.committed_until <= a.request.deadline);
    }

    #[test]
    fn deadline_order_is_stable() {
        let mut p = ready_pool(&[WorkerClass::Cpu]);
        let mut d = Dispatcher::hybrid(DispatchPolicy::EfficientFirst);
        let mut pending = vec![req(0, 0.0, 0.05), req(1, 0.0, 0.01), req(2, 0.0, 0.01)];
        let out = d.dispatch_pending(&mut p, &mut pending, 0.0).unwrap();
        let ids: Vec<u64> = out.iter().map(|a| a.request.id).collect();
        assert_eq!(ids, vec![1, 2, 0]);
    }

    #[test]
    fn index_packing_prefers_busy_cpu_over_idle_fpga() {
        let mut p = ready_pool(&[WorkerClass::Cpu, WorkerClass::Fpga]);
        p.assign(WorkerId(0), req(0, 0.0, 0.01), 0.0).unwrap();
        let ip = Dispatcher::hybrid(DispatchPolicy::IndexPacking);
        let ef = Dispatcher::hybrid(DispatchPolicy::EfficientFirst);
        let r = req(1, 0.0, 0.01);
        assert_eq!(ip.find_available_worker(&p, &r, 0.0), Some(WorkerId(0)));
        assert_eq!(ef.find_available_worker(&p, &r, 0.0), Some(WorkerId(1)));
    }

    #[test]
    fn assigning_to_spinning_down_is_a_contract_violation() {
        let mut p = ready_pool(&[WorkerClass::Cpu]);
        p.begin_spin_down(WorkerId(0), 0.005).unwrap();
        assert!(matches!(
            p.assign(WorkerId(0), req(0, 0.01, 0.01), 0.01),
            Err(Error::Contract(_))
        ));
        p.finish_spin_down(WorkerId(0)).unwrap();
        assert!(p.assign(WorkerId(0), req(0, 0.01, 0.01), 0.01).is_err());
    }

    #[test]
    fn fpga_only_fallback_queues_on_earliest() {
        let mut p = ready_pool(&[WorkerClass::Fpga, WorkerClass::Fpga]);
        p.assign(WorkerId(0), req(0, 0.0, 4.0), 0.0).unwrap();
        p.assign(WorkerId(1), req(1, 0.0, 2.0), 0.0).unwrap();
        let mut d = Dispatcher::new(
            DispatchPolicy::EfficientFirst,
            vec![WorkerClass::Fpga],
            Fallback::EarliestFpga,
        );
        // 0.1s deadline: nobody can make it; worker 1 frees up first.
        let a = d.dispatch_one(&mut p, req(2, 0.0, 0.01), 0.0).unwrap();
        assert_eq!(a.worker, WorkerId(1));
        assert!(!a.spawned);
    }
}
