//! Scheduler selection by name and a single entry point that runs any of
//! them, including the provisioning searches of the FPGA-only baselines.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{
    cpu_dynamic, fpga_dynamic_provision, fpga_static_provision, mark_ideal, DEFAULT_K_MAX,
    DEFAULT_N_MAX,
};
use crate::dispatch::DispatchPolicy;
use crate::error::{Error, Result};
use crate::simengine::{run, SimConfig, SimOutput};
use crate::spork::{Objective, Spork};
use crate::tracegen::{interval_demand, RequestSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SporkVariant {
    Energy,
    Cost,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchedulerKind {
    CpuDynamic,
    FpgaStatic,
    FpgaDynamic,
    MarkIdeal,
    Spork { variant: SporkVariant, ideal: bool },
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 10] = [
        SchedulerKind::CpuDynamic,
        SchedulerKind::FpgaStatic,
        SchedulerKind::FpgaDynamic,
        SchedulerKind::MarkIdeal,
        SchedulerKind::Spork { variant: SporkVariant::Energy, ideal: false },
        SchedulerKind::Spork { variant: SporkVariant::Cost, ideal: false },
        SchedulerKind::Spork { variant: SporkVariant::Balanced, ideal: false },
        SchedulerKind::Spork { variant: SporkVariant::Energy, ideal: true },
        SchedulerKind::Spork { variant: SporkVariant::Cost, ideal: true },
        SchedulerKind::Spork { variant: SporkVariant::Balanced, ideal: true },
    ];

    pub fn name(self) -> String {
        match self {
            SchedulerKind::CpuDynamic => "cpu-dynamic".into(),
            SchedulerKind::FpgaStatic => "fpga-static".into(),
            SchedulerKind::FpgaDynamic => "fpga-dynamic".into(),
            SchedulerKind::MarkIdeal => "mark-ideal".into(),
            SchedulerKind::Spork { variant, ideal } => {
                let v = match variant {
                    SporkVariant::Energy => "E",
                    SporkVariant::Cost => "C",
                    SporkVariant::Balanced => "B",
                };
                format!("spork{v}{}", if ideal { "-ideal" } else { "" })
            }
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<String> = SchedulerKind::ALL.iter().map(|k| k.name()).collect();
                Error::param(format!("unknown scheduler '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Knobs that only some schedulers read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Energy weight of the balanced Spork variant.
    pub alpha: f64,
    /// Dispatch policy for Spork; its default is efficient-first.
    pub dispatch: DispatchPolicy,
    /// Largest FPGA-dynamic headroom multiplier tried.
    pub k_max: u32,
    /// Largest FPGA-static pool tried.
    pub n_max: u32,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            alpha: 0.5,
            dispatch: DispatchPolicy::EfficientFirst,
            k_max: DEFAULT_K_MAX,
            n_max: DEFAULT_N_MAX,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub output: SimOutput,
    /// Pool size or headroom multiplier picked by a provisioning search.
    pub level: Option<u32>,
}

/// Runs `kind` over `source`.
pub fn simulate(
    kind: SchedulerKind,
    source: &(impl RequestSource + ?Sized),
    config: &SimConfig,
    opts: &RunOptions,
) -> Result<RunResult> {
    let plain = |output| RunResult { output, level: None };
    match kind {
        SchedulerKind::CpuDynamic => run(source, config, &mut cpu_dynamic()).map(plain),
        SchedulerKind::FpgaStatic => {
            let p = fpga_static_provision(source, config, opts.n_max)?;
            Ok(RunResult { output: p.output, level: Some(p.level) })
        }
        SchedulerKind::FpgaDynamic => {
            let p = fpga_dynamic_provision(source, config, opts.k_max)?;
            Ok(RunResult { output: p.output, level: Some(p.level) })
        }
        SchedulerKind::MarkIdeal => run(source, config, &mut mark_ideal(config, source)?).map(plain),
        SchedulerKind::Spork { variant, ideal } => {
            let objective = match variant {
                SporkVariant::Energy => Objective::Energy,
                SporkVariant::Cost => Objective::Cost,
                SporkVariant::Balanced => Objective::Weighted { alpha: opts.alpha },
            };
            let mut spork = Spork::new(config, objective)?.with_dispatch(opts.dispatch);
            if ideal {
                let demand = interval_demand(source, config.interval, config.platform.fpga.speedup);
                spork = spork.with_ideal_prediction(demand);
            }
            run(source, config, &mut spork).map(plain)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Request;
    use crate::tracegen::ArrivalTrace;

    #[test]
    fn names_round_trip() {
        for k in SchedulerKind::ALL {
            assert_eq!(k.name().parse::<SchedulerKind>().unwrap(), k);
        }
        assert!("sporkX".parse::<SchedulerKind>().is_err());
        assert_eq!(
            "sporkB-ideal".parse::<SchedulerKind>().unwrap(),
            SchedulerKind::Spork { variant: SporkVariant::Balanced, ideal: true }
        );
    }

    #[test]
    fn every_scheduler_runs_a_small_trace() {
        let reqs: Vec<Request> = (0..200)
            .map(|i| Request::new(i, i as f64 * 0.25, 0.05, 10.0))
            .collect();
        let trace = ArrivalTrace::new(reqs, 60.0).unwrap();
        let config = SimConfig::default();
        for k in SchedulerKind::ALL {
            let r = simulate(k, &trace, &config, &RunOptions::default()).unwrap();
            assert_eq!(r.output.report.requests_total, 200, "{k}");
            assert_eq!(r.output.report.deadline_misses, 0, "{k}");
            let provisioned = matches!(k, SchedulerKind::FpgaStatic | SchedulerKind::FpgaDynamic);
            assert_eq!(r.level.is_some(), provisioned);
        }
    }
}
