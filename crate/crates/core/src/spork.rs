//! The Spork hybrid scheduler.
//!
//! Every interval the allocator converts the FPGA and CPU service time that
//! started in the previous interval into a count of FPGAs that would have
//! served it most efficiently, records that count in a histogram keyed by
//! the count two intervals earlier, and then picks the next allocation that
//! minimizes expected energy, cost or a blend of both. Requests that the
//! FPGAs cannot absorb fall through to CPUs spun up on the dispatch path.

use std::collections::{BTreeMap, HashMap};

use crate::dispatch::{DispatchPolicy, Dispatcher};
use crate::error::{Error, Result};
use crate::model::{Platform, WorkerClass, SECONDS_PER_HOUR};
use crate::simengine::{Scheduler, SimConfig, TickContext};

/// What the allocator minimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Energy,
    Cost,
    /// `alpha` weighs normalized energy against normalized cost.
    Weighted { alpha: f64 },
}

impl Objective {
    /// Weighted objectives at the endpoints collapse to the pure ones so
    /// that both spellings produce identical arithmetic.
    pub fn canonical(self) -> Objective {
        match self {
            Objective::Weighted { alpha } if alpha == 1.0 => Objective::Energy,
            Objective::Weighted { alpha } if alpha == 0.0 => Objective::Cost,
            o => o,
        }
    }

    pub fn validate(self) -> Result<()> {
        if let Objective::Weighted { alpha } = self {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::param(format!("alpha must lie in [0, 1], got {alpha}")));
            }
        }
        Ok(())
    }

    pub fn label(self) -> &'static str {
        match self {
            Objective::Energy => "sporkE",
            Objective::Cost => "sporkC",
            Objective::Weighted { .. } => "sporkB",
        }
    }
}

/// Residual demand, in seconds per interval, above which one more FPGA
/// beats serving the residual on CPUs.
pub fn breakeven_threshold(platform: &Platform, interval: f64, objective: Objective) -> Result<f64> {
    objective.validate()?;
    let (c, f) = (&platform.cpu, &platform.fpga);
    let s = f.speedup;
    let energy_slope = c.busy_power - (f.busy_power - f.idle_power) / s;
    let t_b = match objective.canonical() {
        Objective::Energy => {
            if energy_slope <= 0.0 {
                return Err(Error::param(
                    "CPUs are never less efficient than an FPGA here; round FPGA counts up instead",
                ));
            }
            interval * f.idle_power / energy_slope
        }
        Objective::Cost => {
            let denom = s * c.price_per_hour;
            if denom <= 0.0 {
                interval
            } else {
                interval * f.price_per_hour / denom
            }
        }
        Objective::Weighted { alpha } => {
            // Each balance equation is normalized by one busy FPGA-interval
            // of its own unit before blending.
            let (cf, cc) = (f.price_per_second(), c.price_per_second());
            let num = alpha * f.idle_power / f.busy_power + (1.0 - alpha);
            let den = alpha * energy_slope / (f.busy_power * interval)
                + (1.0 - alpha) * s * cc / (cf * interval);
            if den <= 0.0 {
                if alpha > 0.0 && energy_slope <= 0.0 {
                    return Err(Error::param(
                        "CPUs are never less efficient than an FPGA here; round FPGA counts up instead",
                    ));
                }
                interval
            } else {
                num / den
            }
        }
    };
    Ok(t_b.clamp(0.0, interval))
}

/// FPGAs needed to serve `fpga_time` seconds of FPGA work plus `cpu_time`
/// seconds of CPU work within one interval.
pub fn needed_fpgas(fpga_time: f64, cpu_time: f64, speedup: f64, interval: f64, t_b: f64) -> u32 {
    let lambda = fpga_time + cpu_time / speedup;
    let full = (lambda / interval).floor();
    let rem = lambda - full * interval;
    full as u32 + u32::from(rem > t_b)
}

/// Empirical distribution of needed FPGA counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Histogram {
    counts: BTreeMap<u32, u64>,
    total: u64,
}

impl Histogram {
    pub fn add(&mut self, value: u32) {
        *self.counts.entry(value).or_default() += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn frequency(&self, value: u32) -> f64 {
        self.counts.get(&value).map_or(0.0, |&c| c as f64 / self.total as f64)
    }

    /// `(value, relative frequency)` in ascending value order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        let total = self.total as f64;
        self.counts.iter().map(move |(&v, &c)| (v, c as f64 / total))
    }

    pub fn min(&self) -> Option<u32> {
        self.counts.keys().next().copied()
    }

    pub fn max(&self) -> Option<u32> {
        self.counts.keys().next_back().copied()
    }
}

/// Histograms keyed by the needed count two intervals before the observation.
pub type HistogramMap = BTreeMap<u32, Histogram>;

/// Running mean FPGA lifetime keyed by how many FPGAs were already allocated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LifetimeMap {
    means: BTreeMap<u32, (f64, u64)>,
}

impl LifetimeMap {
    pub fn record(&mut self, alloc_context: u32, lifetime: f64) {
        let (mean, n) = self.means.entry(alloc_context).or_insert((0.0, 0));
        *n += 1;
        *mean += (lifetime - *mean) / *n as f64;
    }

    pub fn mean(&self, alloc_context: u32) -> Option<f64> {
        self.means.get(&alloc_context).map(|&(m, _)| m)
    }

    /// Whole intervals a worker allocated in this context tends to live,
    /// defaulting to one for unseen contexts.
    pub fn epochs(&self, alloc_context: u32, interval: f64) -> f64 {
        self.mean(alloc_context)
            .map_or(1.0, |m| (m / interval).ceil().max(1.0))
    }
}

/// Expected per-interval energy in joules of allocating `n_hat` FPGAs.
fn energy_score(
    platform: &Platform,
    interval: f64,
    hist: &Histogram,
    lifetimes: Option<&LifetimeMap>,
    n_curr: u32,
    n_hat: u32,
) -> f64 {
    let (c, f) = (&platform.cpu, &platform.fpga);
    let mut score = 0.0;
    if let Some(lt) = lifetimes {
        for j in n_curr..n_hat {
            score += f.busy_power * f.spin_up / lt.epochs(j, interval);
        }
    }
    let nh = n_hat as f64;
    for (n, p) in hist.iter() {
        let nf = n as f64;
        let e = if n_hat > n {
            (nh - nf) * f.idle_power * interval + nf * f.busy_power * interval
        } else if n_hat < n {
            nh * f.busy_power * interval + (nf - nh) * f.speedup * c.busy_power * interval
        } else {
            nf * f.busy_power * interval
        };
        score += p * e;
    }
    score
}

/// Expected per-interval occupancy cost in dollars of allocating `n_hat` FPGAs.
fn cost_score(
    platform: &Platform,
    interval: f64,
    hist: &Histogram,
    lifetimes: Option<&LifetimeMap>,
    n_curr: u32,
    n_hat: u32,
) -> f64 {
    let (c, f) = (&platform.cpu, &platform.fpga);
    let per_interval = interval / SECONDS_PER_HOUR;
    let (cf, cc) = (f.price_per_hour * per_interval, c.price_per_hour * per_interval);
    let mut score = 0.0;
    if let Some(lt) = lifetimes {
        for j in n_curr..n_hat {
            score += f.price_per_second() * f.spin_up / lt.epochs(j, interval);
        }
    }
    let nh = n_hat as f64;
    for (n, p) in hist.iter() {
        let extra_cpu = if n_hat < n {
            (n as f64 - nh) * f.speedup * cc
        } else {
            0.0
        };
        score += p * (nh * cf + extra_cpu);
    }
    score
}

/// Score of `n_hat` under `objective`; lower is better.
///
/// Passing `None` for `lifetimes` drops the amortized spin-up term.
pub fn candidate_score(
    platform: &Platform,
    interval: f64,
    objective: Objective,
    hist: &Histogram,
    lifetimes: Option<&LifetimeMap>,
    n_curr: u32,
    n_hat: u32,
) -> f64 {
    match objective.canonical() {
        Objective::Energy => energy_score(platform, interval, hist, lifetimes, n_curr, n_hat),
        Objective::Cost => cost_score(platform, interval, hist, lifetimes, n_curr, n_hat),
        Objective::Weighted { alpha } => {
            let f = &platform.fpga;
            let e = energy_score(platform, interval, hist, lifetimes, n_curr, n_hat);
            let c = cost_score(platform, interval, hist, lifetimes, n_curr, n_hat);
            alpha * e / (f.busy_power * interval)
                + (1.0 - alpha) * c / (f.price_per_second() * interval)
        }
    }
}

/// Next-interval FPGA count minimizing the expected objective.
///
/// Falls back to `n_prev` when no histogram is conditioned on it. Ties go
/// to the smallest candidate.
#[allow(clippy::too_many_arguments)]
pub fn predict_fpgas(
    histograms: &HistogramMap,
    lifetimes: Option<&LifetimeMap>,
    n_prev: u32,
    n_curr: u32,
    platform: &Platform,
    interval: f64,
    objective: Objective,
) -> u32 {
    let Some(hist) = histograms.get(&n_prev).filter(|h| !h.is_empty()) else {
        return n_prev;
    };
    let (lo, hi) = (hist.min().unwrap(), hist.max().unwrap());
    let mut best = (f64::INFINITY, lo);
    for n_hat in lo..=hi {
        let s = candidate_score(platform, interval, objective, hist, lifetimes, n_curr, n_hat);
        if s < best.0 {
            best = (s, n_hat);
        }
    }
    best.1
}

/// One allocator decision, kept for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickRecord {
    pub index: u64,
    pub observed: Option<u32>,
    pub target: u32,
    pub allocated: u32,
}

/// Spork allocator state and its scheduler hooks.
#[derive(Debug, Clone)]
pub struct Spork {
    platform: Platform,
    interval: f64,
    objective: Objective,
    t_b: f64,
    policy: DispatchPolicy,
    /// Per-interval FPGA-time demand known in advance for ideal prediction.
    oracle_demand: Option<Vec<f64>>,
    histograms: HistogramMap,
    lifetimes: LifetimeMap,
    /// Needed count observed for each completed interval.
    observed: Vec<u32>,
    /// Service seconds started in each interval, by class index.
    started: Vec<[f64; 2]>,
    cache: HashMap<(u32, u32), u32>,
    log: Vec<TickRecord>,
}

impl Spork {
    pub fn new(config: &SimConfig, objective: Objective) -> Result<Self> {
        let t_b = breakeven_threshold(&config.platform, config.interval, objective)?;
        Ok(Spork {
            platform: config.platform,
            interval: config.interval,
            objective,
            t_b,
            policy: DispatchPolicy::EfficientFirst,
            oracle_demand: None,
            histograms: HistogramMap::new(),
            lifetimes: LifetimeMap::default(),
            observed: Vec::new(),
            started: Vec::new(),
            cache: HashMap::new(),
            log: Vec::new(),
        })
    }

    /// Replaces prediction with the true demand of each upcoming interval,
    /// given as FPGA-seconds per interval.
    pub fn with_ideal_prediction(mut self, demand: Vec<f64>) -> Self {
        self.oracle_demand = Some(demand);
        self
    }

    pub fn with_dispatch(mut self, policy: DispatchPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn breakeven(&self) -> f64 {
        self.t_b
    }

    pub fn histograms(&self) -> &HistogramMap {
        &self.histograms
    }

    pub fn lifetimes(&self) -> &LifetimeMap {
        &self.lifetimes
    }

    pub fn tick_log(&self) -> &[TickRecord] {
        &self.log
    }

    /// Total service seconds attributed to intervals, by class index.
    pub fn attributed_service(&self) -> [f64; 2] {
        self.started.iter().fold([0.0; 2], |acc, s| [acc[0] + s[0], acc[1] + s[1]])
    }

    fn needed(&self, fpga_time: f64, cpu_time: f64) -> u32 {
        needed_fpgas(fpga_time, cpu_time, self.platform.fpga.speedup, self.interval, self.t_b)
    }

    /// Records the needed count of the interval that just ended.
    fn observe(&mut self, n: u32) {
        self.observed.push(n);
        let t = self.observed.len();
        if t >= 3 {
            let key = self.observed[t - 3];
            self.histograms.entry(key).or_default().add(n);
            self.cache.retain(|&(k, _), _| k != key);
        }
    }

    fn predict(&mut self, n_prev: u32, n_curr: u32) -> u32 {
        if let Some(&n) = self.cache.get(&(n_prev, n_curr)) {
            return n;
        }
        let n = predict_fpgas(
            &self.histograms,
            Some(&self.lifetimes),
            n_prev,
            n_curr,
            &self.platform,
            self.interval,
            self.objective,
        );
        self.cache.insert((n_prev, n_curr), n);
        n
    }
}

impl Scheduler for Spork {
    fn name(&self) -> String {
        let base = self.objective.label();
        if self.oracle_demand.is_some() {
            format!("{base}-ideal")
        } else {
            base.to_string()
        }
    }

    fn dispatcher(&self) -> Dispatcher {
        Dispatcher::hybrid(self.policy)
    }

    fn on_tick(&mut self, ctx: &TickContext) -> i64 {
        let k = ctx.index as usize;
        let observed = if k >= 1 {
            let [cpu, fpga] = self.started.get(k - 1).copied().unwrap_or_default();
            let n = self.needed(fpga, cpu);
            self.observe(n);
            Some(n)
        } else {
            None
        };
        let n_curr = ctx.fpgas_allocated() as u32;
        let target = match &self.oracle_demand {
            Some(demand) => {
                let next = demand.get(k + 1).copied().unwrap_or(0.0);
                self.needed(next, 0.0)
            }
            None => self.predict(observed.unwrap_or(0), n_curr),
        };
        let allocated = target.saturating_sub(n_curr);
        self.log.push(TickRecord {
            index: ctx.index,
            observed,
            target,
            allocated,
        });
        allocated as i64
    }

    fn on_service_start(&mut self, class: WorkerClass, service: f64, now: f64) {
        let k = (now / self.interval).floor().max(0.0) as usize;
        if self.started.len() <= k {
            self.started.resize(k + 1, [0.0; 2]);
        }
        self.started[k][class.index()] += service;
    }

    fn on_worker_retired(&mut self, class: WorkerClass, alloc_context: u32, lifetime: f64) {
        if class == WorkerClass::Fpga {
            self.lifetimes.record(alloc_context, lifetime);
            self.cache.clear();
        }
    }
}
