//! Rate-based allocation MILP: the offline optimum that per-interval worker
//! counts are measured against.
//!
//! Each interval `t` receives `X_t` requests. A worker of class `w` serves
//! `r^w` requests per interval when fully busy. The program picks integer
//! allocations `Y^w_t` and busy fractions `B^w_t ≤ Y^w_t` that serve every
//! request, minimizing a weighted sum of allocation, deallocation, busy and
//! idle energy plus occupancy cost. Allocations before the first interval
//! and after the last are zero, so initial spin-ups and final spin-downs
//! are charged.
//!
//! [`solve_exact`] solves small instances exactly by dynamic programming;
//! [`emit_lp`] writes any instance in LP file format for external solvers.

mod dp;
mod lp;

pub use dp::solve_exact;
pub use lp::{emit_lp, write_lp};

use crate::error::{Error, Result};
use crate::model::{Platform, WorkerClass, WorkerClassParams, SECONDS_PER_HOUR};
use crate::tracegen::RateTrace;

/// Largest FPGA ceiling the exact solver accepts.
pub const MAX_EXACT_FPGAS: u32 = 12;
/// Largest interval count the exact solver accepts.
pub const MAX_EXACT_INTERVALS: usize = 48;

/// Per-class coefficients, all per interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassCoeffs {
    /// Energy to allocate one worker.
    pub alloc_energy: f64,
    /// Energy to deallocate one worker.
    pub dealloc_energy: f64,
    /// Energy of one fully busy worker-interval.
    pub busy_energy: f64,
    /// Energy of one idle worker-interval.
    pub idle_energy: f64,
    /// Requests one fully busy worker serves per interval.
    pub rate: f64,
    /// Allocation ceiling; `None` is unbounded.
    pub ceiling: Option<u32>,
    /// Occupancy price of one worker-interval.
    pub price: f64,
}

impl ClassCoeffs {
    /// Coefficients for `params` with intervals of `interval` seconds and
    /// requests of `base_size` CPU-seconds.
    pub fn from_params(params: &WorkerClassParams, interval: f64, base_size: f64) -> Self {
        ClassCoeffs {
            alloc_energy: params.busy_power * params.spin_up,
            dealloc_energy: 0.0,
            busy_energy: params.busy_power * interval,
            idle_energy: params.idle_power * interval,
            rate: params.speedup * interval / base_size,
            ceiling: None,
            price: params.price_per_hour * interval / SECONDS_PER_HOUR,
        }
    }

    fn validate(&self, class: WorkerClass) -> Result<()> {
        let all = [
            self.alloc_energy,
            self.dealloc_energy,
            self.busy_energy,
            self.idle_energy,
            self.price,
        ];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::param(format!("{class} coefficients must be finite and non-negative")));
        }
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(Error::param(format!("{class} rate must be positive")));
        }
        Ok(())
    }

    /// Capacity in requests per interval, if bounded.
    fn capacity(&self) -> Option<f64> {
        self.ceiling.map(|n| n as f64 * self.rate)
    }
}

/// Whether served requests must equal or may exceed arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateConstraint {
    #[default]
    Equal,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpInstance {
    /// Requests arriving in each interval.
    pub demand: Vec<f64>,
    pub cpu: ClassCoeffs,
    pub fpga: ClassCoeffs,
    /// FPGA spin-up in whole intervals.
    pub fpga_spin_up_intervals: u32,
    pub energy_weight: f64,
    pub cost_weight: f64,
    pub rate_constraint: RateConstraint,
}

impl MilpInstance {
    /// Energy-weighted instance for `demand` with coefficients derived from
    /// `platform`.
    pub fn from_platform(demand: Vec<f64>, platform: &Platform, interval: f64, base_size: f64) -> Self {
        MilpInstance {
            demand,
            cpu: ClassCoeffs::from_params(&platform.cpu, interval, base_size),
            fpga: ClassCoeffs::from_params(&platform.fpga, interval, base_size),
            fpga_spin_up_intervals: (platform.fpga.spin_up / interval).ceil() as u32,
            energy_weight: 1.0,
            cost_weight: 0.0,
            rate_constraint: RateConstraint::Equal,
        }
    }

    pub fn intervals(&self) -> usize {
        self.demand.len()
    }

    pub fn class(&self, class: WorkerClass) -> &ClassCoeffs {
        match class {
            WorkerClass::Cpu => &self.cpu,
            WorkerClass::Fpga => &self.fpga,
        }
    }

    pub fn with_weights(mut self, energy: f64, cost: f64) -> Self {
        self.energy_weight = energy;
        self.cost_weight = cost;
        self
    }

    /// Weights that blend energy and cost after normalizing each by one
    /// busy FPGA-interval of its own unit.
    pub fn blended(&self, alpha: f64) -> Result<MilpInstance> {
        if !(self.fpga.busy_energy > 0.0) || !(self.fpga.price > 0.0) {
            return Err(Error::param(
                "pareto weights need positive FPGA busy energy and price",
            ));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::param("alpha values must lie in [0, 1]"));
        }
        Ok(self
            .clone()
            .with_weights(alpha / self.fpga.busy_energy, (1.0 - alpha) / self.fpga.price))
    }

    pub fn validate(&self) -> Result<()> {
        self.cpu.validate(WorkerClass::Cpu)?;
        self.fpga.validate(WorkerClass::Fpga)?;
        if self.demand.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::param("interval demand must be finite and non-negative"));
        }
        for w in [self.energy_weight, self.cost_weight] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::param("objective weights must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Errors naming the first interval whose demand exceeds total capacity.
    pub fn check_capacity(&self) -> Result<()> {
        if let (Some(c), Some(f)) = (self.cpu.capacity(), self.fpga.capacity()) {
            if let Some((t, x)) = self.demand.iter().enumerate().find(|(_, &x)| x > c + f) {
                return Err(Error::Infeasible(format!(
                    "interval {t} demand {x} exceeds the capacity {} of all allowed workers",
                    c + f
                )));
            }
        }
        Ok(())
    }
}

/// Requests arriving in each of `num_intervals` equal intervals of `horizon`.
pub fn demand_from_rates(rates: &RateTrace, horizon: f64, num_intervals: usize) -> Vec<f64> {
    let len = horizon / num_intervals as f64;
    let mut prev = 0.0;
    (1..=num_intervals)
        .map(|k| {
            let cum = rates.expected_count(k as f64 * len);
            let x = (cum - prev).max(0.0);
            prev = cum;
            x
        })
        .collect()
}

/// Energy split of a solution.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Breakdown {
    pub alloc_energy: f64,
    pub dealloc_energy: f64,
    pub busy_energy: f64,
    pub idle_energy: f64,
    pub cost: f64,
}

impl Breakdown {
    pub fn energy(&self) -> f64 {
        self.alloc_energy + self.dealloc_energy + self.busy_energy + self.idle_energy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub cpu_alloc: Vec<u32>,
    pub fpga_alloc: Vec<u32>,
    pub cpu_busy: Vec<f64>,
    pub fpga_busy: Vec<f64>,
    pub objective: f64,
    pub breakdown: Breakdown,
}

impl MilpSolution {
    pub fn energy(&self) -> f64 {
        self.breakdown.energy()
    }

    pub fn cost(&self) -> f64 {
        self.breakdown.cost
    }
}

/// Prices `alloc` and `busy` against `inst`, with zero allocation before
/// the first interval and after the last.
pub fn evaluate(inst: &MilpInstance, fpga: &[u32], cpu: &[u32], fpga_busy: &[f64], cpu_busy: &[f64]) -> Breakdown {
    let mut b = Breakdown::default();
    for (coef, alloc, busy) in [(&inst.fpga, fpga, fpga_busy), (&inst.cpu, cpu, cpu_busy)] {
        let mut prev = 0u32;
        for (&y, &busy) in alloc.iter().zip(busy) {
            b.alloc_energy += coef.alloc_energy * y.saturating_sub(prev) as f64;
            b.dealloc_energy += coef.dealloc_energy * prev.saturating_sub(y) as f64;
            b.busy_energy += coef.busy_energy * busy;
            b.idle_energy += coef.idle_energy * (y as f64 - busy);
            b.cost += coef.price * y as f64;
            prev = y;
        }
        b.dealloc_energy += coef.dealloc_energy * prev as f64;
    }
    b
}

/// Copy of `inst` that may only allocate workers of `class`.
pub fn restrict_homogeneous(inst: &MilpInstance, class: WorkerClass) -> MilpInstance {
    let mut out = inst.clone();
    match class {
        WorkerClass::Cpu => out.fpga.ceiling = Some(0),
        WorkerClass::Fpga => out.cpu.ceiling = Some(0),
    }
    out
}

/// One point of a pareto sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub alpha: f64,
    pub energy: f64,
    pub cost: f64,
    pub solution: MilpSolution,
}

/// Solves `inst` once per `alpha`, weighting energy by `alpha` and cost by
/// `1 - alpha`, each normalized by one busy FPGA-interval. Points come back
/// sorted by `alpha`.
pub fn pareto_sweep(inst: &MilpInstance, alphas: &[f64]) -> Result<Vec<ParetoPoint>> {
    let mut alphas = alphas.to_vec();
    alphas.sort_by(f64::total_cmp);
    let weighted: Vec<MilpInstance> = alphas.iter().map(|&a| inst.blended(a)).collect::<Result<_>>()?;
    alphas
        .into_iter()
        .zip(weighted)
        .map(|(alpha, weighted)| {
            let solution = solve_exact(&weighted)?;
            Ok(ParetoPoint {
                alpha,
                energy: solution.energy(),
                cost: solution.cost(),
                solution,
            })
        })
        .collect()
}
