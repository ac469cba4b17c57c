//! Domain types shared by the simulator, the schedulers and the oracle:
//! worker parameters, requests, worker lifecycle records, and the energy and
//! occupancy-cost accounting that every report is built from.

use std::collections::VecDeque;
use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Default deadline as a multiple of the request's CPU service time.
pub const DEFAULT_DEADLINE_MULTIPLIER: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WorkerClass {
    Cpu,
    Fpga,
}

impl WorkerClass {
    /// Classes in dispatch preference order: most efficient first.
    pub const EFFICIENT_ORDER: [WorkerClass; 2] = [WorkerClass::Fpga, WorkerClass::Cpu];

    pub fn index(self) -> usize {
        match self {
            WorkerClass::Cpu => 0,
            WorkerClass::Fpga => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WorkerClass::Cpu => "cpu",
            WorkerClass::Fpga => "fpga",
        }
    }
}

impl fmt::Display for WorkerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Physical and economic constants of one worker class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkerClassParams {
    pub class: WorkerClass,
    /// Seconds from allocation until the worker can serve requests.
    pub spin_up: f64,
    /// Seconds from the start of deallocation until the worker is gone.
    pub spin_down: f64,
    /// Watts while serving, spinning up or spinning down.
    pub busy_power: f64,
    /// Watts while allocated and idle.
    pub idle_power: f64,
    /// Occupancy price in dollars per hour.
    pub price_per_hour: f64,
    /// Service-rate multiplier over a CPU worker (1 for CPUs).
    pub speedup: f64,
}

impl WorkerClassParams {
    pub fn cpu() -> Self {
        WorkerClassParams {
            class: WorkerClass::Cpu,
            spin_up: 0.005,
            spin_down: 0.005,
            busy_power: 150.0,
            idle_power: 30.0,
            price_per_hour: 0.668,
            speedup: 1.0,
        }
    }

    pub fn fpga() -> Self {
        WorkerClassParams {
            class: WorkerClass::Fpga,
            spin_up: 10.0,
            spin_down: 0.1,
            busy_power: 50.0,
            idle_power: 20.0,
            price_per_hour: 0.982,
            speedup: 2.0,
        }
    }

    pub fn defaults(class: WorkerClass) -> Self {
        match class {
            WorkerClass::Cpu => Self::cpu(),
            WorkerClass::Fpga => Self::fpga(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.spin_up,
            self.spin_down,
            self.busy_power,
            self.idle_power,
            self.price_per_hour,
            self.speedup,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param(format!("{} parameters must be finite", self.class)));
        }
        if self.spin_up < 0.0 || self.spin_down < 0.0 {
            return Err(Error::param(format!("{} latencies must be >= 0", self.class)));
        }
        if self.idle_power < 0.0 || self.busy_power < self.idle_power {
            return Err(Error::param(format!(
                "{} power must satisfy busy >= idle >= 0",
                self.class
            )));
        }
        if self.price_per_hour < 0.0 {
            return Err(Error::param(format!("{} price must be >= 0", self.class)));
        }
        if self.speedup <= 0.0 {
            return Err(Error::param(format!("{} speedup must be > 0", self.class)));
        }
        Ok(())
    }

    /// Service time of a request with the given CPU service time.
    #[inline]
    pub fn service_time(&self, base_size: f64) -> f64 {
        base_size / self.speedup
    }

    #[inline]
    pub fn price_per_second(&self) -> f64 {
        self.price_per_hour / SECONDS_PER_HOUR
    }
}

/// Parameters for both worker classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Platform {
    pub cpu: WorkerClassParams,
    pub fpga: WorkerClassParams,
}

impl Default for Platform {
    fn default() -> Self {
        Platform {
            cpu: WorkerClassParams::cpu(),
            fpga: WorkerClassParams::fpga(),
        }
    }
}

impl Platform {
    pub fn get(&self, class: WorkerClass) -> &WorkerClassParams {
        match class {
            WorkerClass::Cpu => &self.cpu,
            WorkerClass::Fpga => &self.fpga,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cpu.class != WorkerClass::Cpu || self.fpga.class != WorkerClass::Fpga {
            return Err(Error::param("platform class tags are swapped"));
        }
        self.cpu.validate()?;
        self.fpga.validate()
    }
}

/// One invocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub id: u64,
    pub arrival: f64,
    /// Service time on a CPU worker.
    pub base_size: f64,
    /// Absolute deadline.
    pub deadline: f64,
}

impl Request {
    pub fn new(id: u64, arrival: f64, base_size: f64, deadline_multiplier: f64) -> Self {
        Request {
            id,
            arrival,
            base_size,
            deadline: arrival + deadline_multiplier * base_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WorkerId(pub u32);

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WorkerState {
    SpinningUp,
    Idle,
    Busy,
    SpinningDown,
    Dead,
}

impl WorkerState {
    /// Whether the state machine admits `self -> next`.
    pub fn can_transition_to(self, next: WorkerState) -> bool {
        use WorkerState::*;
        matches!(
            (self, next),
            (SpinningUp, Idle)
                | (SpinningUp, Busy)
                | (Idle, Busy)
                | (Idle, SpinningDown)
                | (Busy, Idle)
                | (SpinningDown, Dead)
        )
    }

    /// Allocated and able to accept work.
    pub fn is_dispatchable(self) -> bool {
        matches!(
            self,
            WorkerState::SpinningUp | WorkerState::Idle | WorkerState::Busy
        )
    }
}

/// A simulated worker instance.
#[derive(Debug, Clone)]
pub struct Worker {
    pub id: WorkerId,
    pub class: WorkerClass,
    pub state: WorkerState,
    pub alloc_start: f64,
    pub ready_at: f64,
    /// Valid while `state == Idle`.
    pub idle_since: f64,
    /// Request currently in service.
    pub running: Option<Request>,
    /// Assigned requests waiting behind `running` (or for spin-up to finish).
    pub queue: VecDeque<Request>,
    /// Time at which all assigned work completes.
    pub committed_until: f64,
    /// Same-class workers already allocated when this one was requested.
    pub alloc_context: u32,
    /// Pinned workers never idle-time-out before the end of the horizon.
    pub pinned: bool,
    /// Generation counter invalidating stale idle timers.
    pub timer_gen: u32,
}

impl Worker {
    pub fn new(
        id: WorkerId,
        params: &WorkerClassParams,
        alloc_start: f64,
        alloc_context: u32,
        pinned: bool,
    ) -> Self {
        let ready_at = alloc_start + params.spin_up;
        Worker {
            id,
            class: params.class,
            state: WorkerState::SpinningUp,
            alloc_start,
            ready_at,
            idle_since: f64::NAN,
            running: None,
            queue: VecDeque::new(),
            committed_until: ready_at,
            alloc_context,
            pinned,
            timer_gen: 0,
        }
    }

    pub fn assigned_len(&self) -> usize {
        self.queue.len() + usize::from(self.running.is_some())
    }

    /// Earliest time a newly assigned request could start.
    #[inline]
    pub fn available_at(&self, now: f64) -> f64 {
        now.max(self.ready_at).max(self.committed_until)
    }

    /// Remaining assigned service time as seen at `now`.
    pub fn queued_load(&self, now: f64) -> f64 {
        match self.state {
            WorkerState::SpinningUp => self.committed_until - self.ready_at,
            WorkerState::Busy => self.committed_until - now,
            _ => 0.0,
        }
    }
}

/// Energy split by lifecycle phase for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassEnergy {
    pub busy_j: f64,
    pub idle_j: f64,
    pub spin_up_j: f64,
    pub spin_down_j: f64,
}

impl ClassEnergy {
    pub fn total(&self) -> f64 {
        self.busy_j + self.idle_j + self.spin_up_j + self.spin_down_j
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyLedger {
    pub per_class: [ClassEnergy; 2],
}

impl Index<WorkerClass> for EnergyLedger {
    type Output = ClassEnergy;
    fn index(&self, class: WorkerClass) -> &ClassEnergy {
        &self.per_class[class.index()]
    }
}

impl IndexMut<WorkerClass> for EnergyLedger {
    fn index_mut(&mut self, class: WorkerClass) -> &mut ClassEnergy {
        &mut self.per_class[class.index()]
    }
}

impl EnergyLedger {
    pub fn total(&self) -> f64 {
        self.per_class.iter().map(ClassEnergy::total).sum()
    }

    pub fn busy(&self) -> f64 {
        self.per_class.iter().map(|c| c.busy_j).sum()
    }

    pub fn idle(&self) -> f64 {
        self.per_class.iter().map(|c| c.idle_j).sum()
    }

    /// Spin-up plus spin-down energy.
    pub fn transitions(&self) -> f64 {
        self.per_class
            .iter()
            .map(|c| c.spin_up_j + c.spin_down_j)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostLedger {
    pub occupancy_usd: [f64; 2],
}

impl CostLedger {
    pub fn total(&self) -> f64 {
        self.occupancy_usd.iter().sum()
    }

    pub fn get(&self, class: WorkerClass) -> f64 {
        self.occupancy_usd[class.index()]
    }

    /// Charges one worker's whole lifetime, spin-up and spin-down included.
    pub fn charge_lifetime(&mut self, params: &WorkerClassParams, alloc_start: f64, dead_at: f64) {
        self.occupancy_usd[params.class.index()] +=
            params.price_per_hour * (dead_at - alloc_start) / SECONDS_PER_HOUR;
    }
}

/// Ledgers and counters as accumulated by a simulation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawLedgers {
    pub energy: EnergyLedger,
    pub cost: CostLedger,
    pub requests_total: u64,
    pub requests_completed: u64,
    pub requests_on: [u64; 2],
    pub deadline_misses: u64,
    pub spin_ups: [u64; 2],
    pub peak_workers: [u64; 2],
    /// Workers not yet dead when the ledgers were taken.
    pub live_workers: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub energy: EnergyLedger,
    pub cost: CostLedger,
    pub requests_total: u64,
    pub requests_on_fpga: u64,
    pub requests_on_cpu: u64,
    pub deadline_misses: u64,
    pub fpga_spin_ups: u64,
    pub cpu_spin_ups: u64,
    pub peak_fpgas: u64,
    pub peak_cpus: u64,
    pub ideal_energy_j: f64,
    pub ideal_cost_usd: f64,
    pub efficiency_pct: f64,
    pub relative_cost: f64,
}

impl SimReport {
    pub fn total_energy_j(&self) -> f64 {
        self.energy.total()
    }

    pub fn total_cost_usd(&self) -> f64 {
        self.cost.total()
    }

    /// Fraction of requests served on CPUs, in percent.
    pub fn cpu_request_pct(&self) -> f64 {
        if self.requests_total == 0 {
            0.0
        } else {
            100.0 * self.requests_on_cpu as f64 / self.requests_total as f64
        }
    }
}

/// Energy and cost of a platform that runs every request on an FPGA with no
/// idle, spin-up or spin-down overhead.
pub fn ideal_reference<'a, I>(requests: I, fpga: &WorkerClassParams) -> (f64, f64)
where
    I: IntoIterator<Item = &'a Request>,
{
    let service: f64 = requests
        .into_iter()
        .map(|r| fpga.service_time(r.base_size))
        .sum();
    ideal_from_service(service, fpga)
}

/// Same as [`ideal_reference`] given the summed FPGA service time.
pub fn ideal_from_service(fpga_service_s: f64, fpga: &WorkerClassParams) -> (f64, f64) {
    (
        fpga_service_s * fpga.busy_power,
        fpga_service_s * fpga.price_per_second(),
    )
}

/// Builds the final report, normalizing against the ideal FPGA-only platform.
///
/// `ideal` is the `(energy, cost)` pair from [`ideal_reference`] computed
/// with the reference FPGA parameters.
pub fn finalize_report(raw: &RawLedgers, ideal: (f64, f64)) -> Result<SimReport> {
    if raw.live_workers != 0 {
        return Err(Error::NotDrained(format!(
            "{} workers still allocated",
            raw.live_workers
        )));
    }
    if raw.requests_completed != raw.requests_total {
        return Err(Error::NotDrained(format!(
            "{} of {} requests completed",
            raw.requests_completed, raw.requests_total
        )));
    }
    let served = raw.requests_on[0] + raw.requests_on[1];
    if served != raw.requests_total {
        return Err(Error::Contract(format!(
            "{served} requests served but {} arrived",
            raw.requests_total
        )));
    }
    let (ideal_energy, ideal_cost) = ideal;
    let actual_energy = raw.energy.total();
    let actual_cost = raw.cost.total();
    Ok(SimReport {
        energy: raw.energy,
        cost: raw.cost,
        requests_total: raw.requests_total,
        requests_on_fpga: raw.requests_on[WorkerClass::Fpga.index()],
        requests_on_cpu: raw.requests_on[WorkerClass::Cpu.index()],
        deadline_misses: raw.deadline_misses,
        fpga_spin_ups: raw.spin_ups[WorkerClass::Fpga.index()],
        cpu_spin_ups: raw.spin_ups[WorkerClass::Cpu.index()],
        peak_fpgas: raw.peak_workers[WorkerClass::Fpga.index()],
        peak_cpus: raw.peak_workers[WorkerClass::Cpu.index()],
        ideal_energy_j: ideal_energy,
        ideal_cost_usd: ideal_cost,
        efficiency_pct: efficiency_pct(ideal_energy, actual_energy),
        relative_cost: relative_cost(ideal_cost, actual_cost),
    })
}

fn efficiency_pct(ideal: f64, actual: f64) -> f64 {
    if actual > 0.0 {
        100.0 * ideal / actual
    } else if ideal > 0.0 {
        f64::INFINITY
    } else {
        // Nothing ran and nothing was spent.
        100.0
    }
}

fn relative_cost(ideal: f64, actual: f64) -> f64 {
    if ideal > 0.0 {
        actual / ideal
    } else if actual > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn req(id: u64, size: f64) -> Request {
        Request::new(id, 0.0, size, DEFAULT_DEADLINE_MULTIPLIER)
    }

    #[test]
    fn defaults_are_valid() {
        Platform::default().validate().unwrap();
        let f = WorkerClassParams::fpga();
        assert_eq!(f.spin_up, 10.0);
        assert_eq!(f.spin_down, 0.1);
        let c = WorkerClassParams::cpu();
        assert_eq!(c.spin_up, 0.005);
        assert_eq!(c.busy_power, 150.0);
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut f = WorkerClassParams::fpga();
        f.idle_power = 60.0;
        assert!(f.validate().is_err());
        let mut f = WorkerClassParams::fpga();
        f.speedup = 0.0;
        assert!(f.validate().is_err());
        let mut c = WorkerClassParams::cpu();
        c.spin_up = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn deadline_is_ten_times_size() {
        let r = Request::new(0, 3.0, 0.02, DEFAULT_DEADLINE_MULTIPLIER);
        assert_relative_eq!(r.deadline, 3.2, max_relative = 1e-12);
    }

    #[test]
    fn ideal_reference_examples() {
        let f = WorkerClassParams::fpga();
        let (e, _) = ideal_reference(&[req(0, 0.010)], &f);
        assert_relative_eq!(e, 0.25, max_relative = 1e-12);

        assert_eq!(ideal_reference(&[], &f), (0.0, 0.0));

        let (_, c) = ideal_reference(&[req(0, 1.0), req(1, 1.0)], &f);
        assert_relative_eq!(c, 0.982 / 3600.0, max_relative = 1e-12);
        assert_relative_eq!(c, 2.7278e-4, max_relative = 1e-4);
    }

    fn drained(requests_on: [u64; 2]) -> RawLedgers {
        let n = requests_on[0] + requests_on[1];
        RawLedgers {
            requests_total: n,
            requests_completed: n,
            requests_on,
            ..Default::default()
        }
    }

    #[test]
    fn fpga_only_without_overhead_is_fully_efficient() {
        let f = WorkerClassParams::fpga();
        let r = req(0, 0.010);
        let mut raw = drained([0, 1]);
        raw.energy[WorkerClass::Fpga].busy_j = f.service_time(r.base_size) * f.busy_power;
        raw.cost
            .charge_lifetime(&f, 0.0, f.service_time(r.base_size));
        let rep = finalize_report(&raw, ideal_reference(&[r], &f)).unwrap();
        assert_eq!(rep.efficiency_pct, 100.0);
        assert_relative_eq!(rep.relative_cost, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn cpu_only_busy_ratios() {
        let f = WorkerClassParams::fpga();
        let c = WorkerClassParams::cpu();
        let r = req(0, 0.010);
        let mut raw = drained([1, 0]);
        raw.energy[WorkerClass::Cpu].busy_j = r.base_size * c.busy_power;
        raw.cost.charge_lifetime(&c, 0.0, r.base_size);
        let rep = finalize_report(&raw, ideal_reference(&[r], &f)).unwrap();
        // (B_f / S) / B_c
        assert_relative_eq!(rep.efficiency_pct, 100.0 * 25.0 / 150.0, max_relative = 1e-12);
        assert_relative_eq!(rep.efficiency_pct, 16.7, epsilon = 0.05);
        // S * C_c / C_f
        assert_relative_eq!(rep.relative_cost, 2.0 * 0.668 / 0.982, max_relative = 1e-12);
        assert_relative_eq!(rep.relative_cost, 1.361, epsilon = 1e-3);
    }

    #[test]
    fn undrained_report_is_refused() {
        let mut raw = drained([1, 0]);
        raw.live_workers = 1;
        assert!(matches!(
            finalize_report(&raw, (1.0, 1.0)),
            Err(Error::NotDrained(_))
        ));
        let mut raw = drained([1, 0]);
        raw.requests_completed = 0;
        assert!(matches!(
            finalize_report(&raw, (1.0, 1.0)),
            Err(Error::NotDrained(_))
        ));
    }

    #[test]
    fn empty_report_is_neutral() {
        let rep = finalize_report(&RawLedgers::default(), (0.0, 0.0)).unwrap();
        assert_eq!(rep.efficiency_pct, 100.0);
        assert_eq!(rep.relative_cost, 1.0);
        assert_eq!(rep.total_energy_j(), 0.0);
    }

    #[test]
    fn lifetime_cost_ignores_interleaving() {
        let f = WorkerClassParams::fpga();
        let mut a = CostLedger::default();
        a.charge_lifetime(&f, 5.0, 125.0);
        let mut b = CostLedger::default();
        b.charge_lifetime(&f, 0.0, 120.0);
        assert_relative_eq!(a.total(), b.total(), max_relative = 1e-12);
        assert_relative_eq!(a.total(), 0.982 * 120.0 / 3600.0, max_relative = 1e-12);
    }

    #[test]
    fn state_machine_transitions() {
        use WorkerState::*;
        let all = [SpinningUp, Idle, Busy, SpinningDown, Dead];
        let allowed = [
            (SpinningUp, Idle),
            (SpinningUp, Busy),
            (Idle, Busy),
            (Idle, SpinningDown),
            (Busy, Idle),
            (SpinningDown, Dead),
        ];
        for a in all {
            for b in all {
                assert_eq!(a.can_transition_to(b), allowed.contains(&(a, b)), "{a:?}->{b:?}");
            }
        }
    }
}
