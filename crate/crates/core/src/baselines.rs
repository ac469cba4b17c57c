//! Comparison schedulers: reactive CPU-only, statically and dynamically
//! provisioned FPGA-only, and a cost-optimized hybrid with perfect foresight.

use crate::dispatch::{DispatchPolicy, Dispatcher, Fallback};
use crate::error::{Error, Result};
use crate::model::{Platform, WorkerClass};
use crate::simengine::{run, InitialWorker, Scheduler, SimConfig, SimOutput, TickContext};
use crate::spork::{breakeven_threshold, needed_fpgas, Objective};
use crate::tracegen::{interval_demand, RequestSource};

pub const DEFAULT_K_MAX: u32 = 20;
pub const DEFAULT_N_MAX: u32 = 4096;

fn fpga_only_dispatch() -> Dispatcher {
    Dispatcher::new(
        DispatchPolicy::EfficientFirst,
        vec![WorkerClass::Fpga],
        Fallback::EarliestFpga,
    )
}

/// FPGAs needed for `demand` FPGA-seconds when any residual rounds up.
fn covering(platform: &Platform, interval: f64, demand: f64) -> u32 {
    needed_fpgas(demand, 0.0, platform.fpga.speedup, interval, 0.0)
}

/// Serverless-style autoscaling on CPUs only.
#[derive(Debug, Clone, Copy, Default)]
pub struct CpuDynamic;

pub fn cpu_dynamic() -> CpuDynamic {
    CpuDynamic
}

impl Scheduler for CpuDynamic {
    fn name(&self) -> String {
        "cpu-dynamic".into()
    }

    fn periodic(&self) -> bool {
        false
    }

    fn dispatcher(&self) -> Dispatcher {
        Dispatcher::new(
            DispatchPolicy::EfficientFirst,
            vec![WorkerClass::Cpu],
            Fallback::SpawnCpu,
        )
    }

    fn on_tick(&mut self, _ctx: &TickContext) -> i64 {
        0
    }
}

/// A fixed pool of FPGAs that is ready at time zero and never times out
/// before the end of the trace.
#[derive(Debug, Clone, Copy)]
pub struct FpgaStatic {
    pub count: u32,
}

impl Scheduler for FpgaStatic {
    fn name(&self) -> String {
        "fpga-static".into()
    }

    fn periodic(&self) -> bool {
        false
    }

    fn dispatcher(&self) -> Dispatcher {
        fpga_only_dispatch()
    }

    fn initial_workers(&self, config: &SimConfig) -> Vec<InitialWorker> {
        let at = -config.platform.fpga.spin_up;
        (0..self.count)
            .map(|_| InitialWorker {
                class: WorkerClass::Fpga,
                alloc_start: at,
                pinned: true,
            })
            .collect()
    }

    fn on_tick(&mut self, _ctx: &TickContext) -> i64 {
        0
    }
}

/// Result of a provisioning search.
#[derive(Debug, Clone)]
pub struct Provisioned {
    /// FPGA count for FPGA-static, headroom multiplier for FPGA-dynamic.
    pub level: u32,
    pub output: SimOutput,
}

/// Smallest static FPGA pool that serves the whole trace without misses.
pub fn fpga_static_provision(
    source: &(impl RequestSource + ?Sized),
    config: &SimConfig,
    n_max: u32,
) -> Result<Provisioned> {
    let simulate = |n: u32| run(source, config, &mut FpgaStatic { count: n });
    let zero = simulate(0)?;
    if zero.report.requests_total == 0 {
        return Ok(Provisioned {
            level: 0,
            output: zero,
        });
    }
    let peak = interval_demand(source, config.interval, config.platform.fpga.speedup)
        .into_iter()
        .fold(0.0, f64::max);
    // `lo` is always infeasible and `hi` feasible once found.
    let mut lo = 0;
    let mut guess = covering(&config.platform, config.interval, peak).clamp(1, n_max.max(1));
    let (mut hi, mut best) = loop {
        if guess > n_max {
            return Err(Error::Provisioning(format!(
                "no FPGA-static pool of at most {n_max} FPGAs meets every deadline"
            )));
        }
        let out = simulate(guess)?;
        if out.report.deadline_misses == 0 {
            break (guess, out);
        }
        lo = guess;
        if guess == n_max {
            guess = n_max + 1;
        } else {
            guess = (guess * 2).min(n_max);
        }
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let out = simulate(mid)?;
        if out.report.deadline_misses == 0 {
            hi = mid;
            best = out;
        } else {
            lo = mid;
        }
    }
    Ok(Provisioned {
        level: hi,
        output: best,
    })
}

/// Largest increase in covering FPGA count between consecutive intervals.
pub fn delta_max(demand: &[f64], platform: &Platform, interval: f64) -> u32 {
    demand
        .windows(2)
        .map(|w| {
            covering(platform, interval, w[1]).saturating_sub(covering(platform, interval, w[0]))
        })
        .max()
        .unwrap_or(0)
}

/// Reactive FPGA-only scaling with a fixed headroom above observed demand.
#[derive(Debug, Clone)]
pub struct FpgaDynamic {
    platform: Platform,
    interval: f64,
    headroom: u32,
    warm: u32,
    /// FPGA-seconds of work arriving in each interval.
    demand: Vec<f64>,
    target: u32,
}

impl FpgaDynamic {
    /// `demand` holds FPGA-seconds of work arriving in each interval; the
    /// headroom is `k` multiples of its largest step.
    pub fn new(config: &SimConfig, demand: &[f64], k: u32) -> Self {
        let headroom = k * delta_max(demand, &config.platform, config.interval);
        let first = demand.first().copied().unwrap_or(0.0);
        FpgaDynamic {
            platform: config.platform,
            interval: config.interval,
            headroom,
            warm: covering(&config.platform, config.interval, first) + headroom,
            demand: demand.to_vec(),
            target: 0,
        }
    }

    pub fn headroom(&self) -> u32 {
        self.headroom
    }
}

impl Scheduler for FpgaDynamic {
    fn name(&self) -> String {
        "fpga-dynamic".into()
    }

    fn dispatcher(&self) -> Dispatcher {
        fpga_only_dispatch()
    }

    /// Starts warm so that the first interval is not served by a cold pool.
    fn initial_workers(&self, config: &SimConfig) -> Vec<InitialWorker> {
        let at = -config.platform.fpga.spin_up;
        (0..self.warm)
            .map(|_| InitialWorker {
                class: WorkerClass::Fpga,
                alloc_start: at,
                pinned: false,
            })
            .collect()
    }

    fn on_tick(&mut self, ctx: &TickContext) -> i64 {
        let k = ctx.index as usize;
        let target = if k == 0 {
            self.warm
        } else {
            // Demand that arrived during the interval that just ended.
            let observed = self.demand.get(k - 1).copied().unwrap_or(0.0);
            covering(&self.platform, self.interval, observed) + self.headroom
        };
        self.target = target;
        target.saturating_sub(ctx.fpgas_allocated() as u32) as i64
    }

    /// Headroom is maintained: only FPGAs above the current target drain.
    fn keep_idle(&mut self, class: WorkerClass, allocated: usize) -> bool {
        class == WorkerClass::Fpga && allocated as u32 <= self.target
    }
}

/// Smallest headroom multiplier in `0..=k_max` that meets every deadline.
pub fn fpga_dynamic_provision(
    source: &(impl RequestSource + ?Sized),
    config: &SimConfig,
    k_max: u32,
) -> Result<Provisioned> {
    let demand = interval_demand(source, config.interval, config.platform.fpga.speedup);
    for k in 0..=k_max {
        let out = run(source, config, &mut FpgaDynamic::new(config, &demand, k))?;
        if out.report.deadline_misses == 0 {
            return Ok(Provisioned {
                level: k,
                output: out,
            });
        }
    }
    Err(Error::Provisioning(format!(
        "FPGA-dynamic misses deadlines with every headroom multiplier up to {k_max}"
    )))
}

/// Cost-optimized hybrid allocator with two intervals of perfect foresight
/// and round-robin dispatch.
#[derive(Debug, Clone)]
pub struct MarkIdeal {
    platform: Platform,
    interval: f64,
    t_b: f64,
    demand: Vec<f64>,
}

impl MarkIdeal {
    /// `demand` holds FPGA-seconds of work arriving in each interval.
    pub fn new(config: &SimConfig, demand: Vec<f64>) -> Result<Self> {
        Ok(MarkIdeal {
            platform: config.platform,
            interval: config.interval,
            t_b: breakeven_threshold(&config.platform, config.interval, Objective::Cost)?,
            demand,
        })
    }

    fn needed(&self, k: usize) -> u32 {
        let d = self.demand.get(k).copied().unwrap_or(0.0);
        needed_fpgas(d, 0.0, self.platform.fpga.speedup, self.interval, self.t_b)
    }
}

pub fn mark_ideal(config: &SimConfig, source: &(impl RequestSource + ?Sized)) -> Result<MarkIdeal> {
    let demand = interval_demand(source, config.interval, config.platform.fpga.speedup);
    MarkIdeal::new(config, demand)
}

impl Scheduler for MarkIdeal {
    fn name(&self) -> String {
        "mark-ideal".into()
    }

    fn dispatcher(&self) -> Dispatcher {
        Dispatcher::hybrid(DispatchPolicy::RoundRobin)
    }

    fn on_tick(&mut self, ctx: &TickContext) -> i64 {
        let k = ctx.index as usize;
        // Workers requested now are ready for the next interval; skip any
        // that the interval after would leave idle.
        let target = self.needed(k + 1).min(self.needed(k + 2));
        target.saturating_sub(ctx.fpgas_allocated() as u32) as i64
    }
}
