//! Flat `key=value` experiment configuration.
//!
//! Every key has a built-in default. A config file overrides defaults and
//! command-line flags override the file. The resolved table is written into
//! each output as `#` comment lines so a result can be reproduced from its
//! own header.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use hyssim::dispatch::DispatchPolicy;
use hyssim::experiment::{RunOptions, SchedulerKind};
use hyssim::model::{Platform, WorkerClassParams};
use hyssim::oracle::RateConstraint;
use hyssim::simengine::SimConfig;
use hyssim::tracegen::{SizeBucket, SyntheticWorkload};

use crate::UsageError;

/// Value meaning "derive from other keys".
pub const AUTO: &str = "auto";

pub struct KeySpec {
    pub name: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

macro_rules! keys {
    ($($name:literal = $default:expr, $doc:literal;)*) => {
        &[$(KeySpec { name: $name, default: $default, doc: $doc }),*]
    };
}

pub const KEYS: &[KeySpec] = keys! {
    "cpu.spin_up" = "0.005", "CPU spin-up latency (s)";
    "cpu.spin_down" = "0.005", "CPU spin-down latency (s)";
    "cpu.busy_power" = "150", "CPU busy power (W)";
    "cpu.idle_power" = "30", "CPU idle power (W)";
    "cpu.price_per_hour" = "0.668", "CPU price ($/h)";
    "cpu.speedup" = "1", "CPU service-rate multiplier";
    "cpu.idle_timeout" = AUTO, "CPU idle time before spin-down (s); auto = cpu.spin_up";
    "fpga.spin_up" = "10", "FPGA spin-up latency (s)";
    "fpga.spin_down" = "0.1", "FPGA spin-down latency (s)";
    "fpga.busy_power" = "50", "FPGA busy power (W)";
    "fpga.idle_power" = "20", "FPGA idle power (W)";
    "fpga.price_per_hour" = "0.982", "FPGA price ($/h)";
    "fpga.speedup" = "2", "FPGA service-rate multiplier over a CPU";
    "fpga.idle_timeout" = AUTO, "FPGA idle time before spin-down (s); auto = fpga.spin_up";
    "interval" = AUTO, "scheduling interval (s); auto = fpga.spin_up";
    "bucket" = "short", "request size bucket: short, medium or long";
    "burstiness" = "0.6", "b-model bias in [0.5, 1)";
    "hours" = "2", "synthetic trace length (h)";
    "avg_workers" = "100", "mean load in busy CPU workers";
    "request_size_ms" = AUTO, "fixed request size (ms); auto = sampled from the bucket or read from the trace";
    "deadline_multiplier" = "10", "deadline as a multiple of the CPU service time";
    "seed" = "1", "trace seed; the first of `repetitions` consecutive seeds in a sweep";
    "repetitions" = "10", "seeds per sweep point";
    "scheduler" = "sporkE", "scheduler name";
    "alpha" = "0.5", "energy weight of sporkB and of an emitted LP";
    "dispatch" = "efficient-first", "Spork dispatch policy: efficient-first, index-packing or round-robin";
    "k_max" = "20", "largest FPGA-dynamic headroom multiplier tried";
    "n_max" = "4096", "largest FPGA-static pool tried";
    "oracle.intervals" = AUTO, "oracle interval count; auto = trace length / interval";
    "oracle.fpga_ceiling" = AUTO, "oracle FPGA bound; auto = what the peak interval needs";
    "oracle.rate_constraint" = "equal", "oracle rate constraint: equal or at-least";
    "oracle.alphas" = "0,0.25,0.5,0.75,1", "pareto sweep energy weights";
    "oracle.cpu_dealloc_j" = "0", "oracle energy per CPU deallocation (J)";
    "oracle.fpga_dealloc_j" = "0", "oracle energy per FPGA deallocation (J)";
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    Flag,
}

#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<&'static str, (String, Source)>,
}

fn spec(name: &str) -> Result<&'static KeySpec, UsageError> {
    KEYS.iter()
        .find(|k| k.name == name)
        .ok_or_else(|| UsageError(format!("unknown config key '{name}'")))
}

fn parse_as<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T, UsageError> {
    value
        .trim()
        .parse()
        .map_err(|_| UsageError(format!("{key}: expected {what}, got '{value}'")))
}

impl Default for Config {
    fn default() -> Self {
        let values = KEYS
            .iter()
            .map(|k| (k.name, (k.default.to_string(), Source::Default)))
            .collect();
        Config { values }
    }
}

impl Config {
    /// Defaults overridden by the file at `path`, if any.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
        let mut config = Config::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::Error::new(e).context(format!("reading {}", path.display())))?;
            config.merge_text(&text, &path.display().to_string())?;
        }
        Ok(config)
    }

    fn merge_text(&mut self, text: &str, origin: &str) -> Result<(), UsageError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                UsageError(format!("{origin}: line {}: expected key=value", i + 1))
            })?;
            self.set(k.trim(), v.trim(), Source::File)
                .map_err(|e| UsageError(format!("{origin}: line {}: {}", i + 1, e.0)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str, source: Source) -> Result<(), UsageError> {
        let spec = spec(key)?;
        self.values.insert(spec.name, (value.to_string(), source));
        Ok(())
    }

    /// Applies a `KEY=VALUE` assignment given on the command line.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), UsageError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| UsageError(format!("expected KEY=VALUE, got '{assignment}'")))?;
        self.set(k.trim(), v.trim(), Source::Flag)
    }

    /// Sets `key` from a typed flag when the flag was given.
    pub fn flag<T: ToString>(&mut self, key: &str, value: Option<T>) -> Result<(), UsageError> {
        match value {
            Some(v) => self.set(key, &v.to_string(), Source::Flag),
            None => Ok(()),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        &self.values[spec(key).expect("key is declared").name].0
    }

    pub fn source(&self, key: &str) -> Source {
        self.values[spec(key).expect("key is declared").name].1
    }

    fn is_auto(&self, key: &str) -> bool {
        self.get(key).trim() == AUTO
    }

    pub fn f64(&self, key: &str) -> Result<f64, UsageError> {
        let v: f64 = parse_as(key, self.get(key), "a number")?;
        if !v.is_finite() {
            return Err(UsageError(format!("{key}: expected a finite number, got '{v}'")));
        }
        Ok(v)
    }

    pub fn u64(&self, key: &str) -> Result<u64, UsageError> {
        parse_as(key, self.get(key), "a non-negative integer")
    }

    pub fn u32(&self, key: &str) -> Result<u32, UsageError> {
        parse_as(key, self.get(key), "a non-negative integer")
    }

    fn auto_f64(&self, key: &str) -> Result<Option<f64>, UsageError> {
        if self.is_auto(key) {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    fn auto_u32(&self, key: &str) -> Result<Option<u32>, UsageError> {
        if self.is_auto(key) {
            Ok(None)
        } else {
            self.u32(key).map(Some)
        }
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<T, UsageError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .trim()
            .parse()
            .map_err(|e: T::Err| UsageError(format!("{key}: {e}")))
    }

    fn class(&self, prefix: &str, mut params: WorkerClassParams) -> Result<WorkerClassParams, UsageError> {
        let k = |field: &str| format!("{prefix}.{field}");
        params.spin_up = self.f64(&k("spin_up"))?;
        params.spin_down = self.f64(&k("spin_down"))?;
        params.busy_power = self.f64(&k("busy_power"))?;
        params.idle_power = self.f64(&k("idle_power"))?;
        params.price_per_hour = self.f64(&k("price_per_hour"))?;
        params.speedup = self.f64(&k("speedup"))?;
        params
            .validate()
            .map_err(|e| UsageError(format!("{prefix}: {e}")))?;
        Ok(params)
    }

    pub fn platform(&self) -> Result<Platform, UsageError> {
        Ok(Platform {
            cpu: self.class("cpu", WorkerClassParams::cpu())?,
            fpga: self.class("fpga", WorkerClassParams::fpga())?,
        })
    }

    pub fn sim_config(&self) -> Result<SimConfig, UsageError> {
        let mut config = SimConfig::new(self.platform()?);
        if let Some(t) = self.auto_f64("interval")? {
            config.interval = t;
        }
        if let Some(t) = self.auto_f64("cpu.idle_timeout")? {
            config.idle_timeout[0] = t;
        }
        if let Some(t) = self.auto_f64("fpga.idle_timeout")? {
            config.idle_timeout[1] = t;
        }
        config.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(config)
    }

    pub fn request_size(&self) -> Result<Option<f64>, UsageError> {
        match self.auto_f64("request_size_ms")? {
            Some(ms) if ms > 0.0 => Ok(Some(ms / 1000.0)),
            Some(ms) => Err(UsageError(format!("request_size_ms must be positive, got {ms}"))),
            None => Ok(None),
        }
    }

    pub fn deadline_multiplier(&self) -> Result<f64, UsageError> {
        let m = self.f64("deadline_multiplier")?;
        if !(m > 0.0) {
            return Err(UsageError(format!("deadline_multiplier must be positive, got {m}")));
        }
        Ok(m)
    }

    pub fn workload(&self) -> Result<SyntheticWorkload, UsageError> {
        let bucket: SizeBucket = self.parsed("bucket")?;
        let burstiness = self.f64("burstiness")?;
        if !(0.5..1.0).contains(&burstiness) {
            return Err(UsageError(format!("burstiness must lie in [0.5, 1), got {burstiness}")));
        }
        let hours = self.f64("hours")?;
        if !(hours > 0.0) {
            return Err(UsageError(format!("hours must be positive, got {hours}")));
        }
        let avg_workers = self.f64("avg_workers")?;
        if !(avg_workers > 0.0) {
            return Err(UsageError(format!("avg_workers must be positive, got {avg_workers}")));
        }
        Ok(SyntheticWorkload {
            bucket,
            burstiness,
            horizon: hours * 3600.0,
            avg_workers,
            base_size: self.request_size()?,
            ..Default::default()
        })
    }

    pub fn scheduler(&self) -> Result<SchedulerKind, UsageError> {
        self.parsed("scheduler")
    }

    pub fn run_options(&self) -> Result<RunOptions, UsageError> {
        let alpha = self.f64("alpha")?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(UsageError(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let dispatch: DispatchPolicy = self.parsed("dispatch")?;
        Ok(RunOptions {
            alpha,
            dispatch,
            k_max: self.u32("k_max")?,
            n_max: self.u32("n_max")?,
        })
    }

    pub fn oracle_intervals(&self) -> Result<Option<usize>, UsageError> {
        match self.auto_u32("oracle.intervals")? {
            Some(0) => Err(UsageError("oracle.intervals must be positive".into())),
            n => Ok(n.map(|n| n as usize)),
        }
    }

    pub fn oracle_fpga_ceiling(&self) -> Result<Option<u32>, UsageError> {
        self.auto_u32("oracle.fpga_ceiling")
    }

    pub fn rate_constraint(&self) -> Result<RateConstraint, UsageError> {
        match self.get("oracle.rate_constraint").trim() {
            "equal" => Ok(RateConstraint::Equal),
            "at-least" => Ok(RateConstraint::AtLeast),
            other => Err(UsageError(format!(
                "oracle.rate_constraint: expected equal or at-least, got '{other}'"
            ))),
        }
    }

    pub fn alphas(&self) -> Result<Vec<f64>, UsageError> {
        parse_list("oracle.alphas", self.get("oracle.alphas"))
    }

    /// Checks every key by building every typed view once.
    pub fn validate(&self) -> Result<(), UsageError> {
        self.sim_config()?;
        self.workload()?;
        self.scheduler()?;
        self.run_options()?;
        self.deadline_multiplier()?;
        self.u64("seed")?;
        if self.u32("repetitions")? == 0 {
            return Err(UsageError("repetitions must be positive".into()));
        }
        self.oracle_intervals()?;
        self.oracle_fpga_ceiling()?;
        self.rate_constraint()?;
        for a in self.alphas()? {
            if !(0.0..=1.0).contains(&a) {
                return Err(UsageError(format!("oracle.alphas: {a} lies outside [0, 1]")));
            }
        }
        for key in ["oracle.cpu_dealloc_j", "oracle.fpga_dealloc_j"] {
            if self.f64(key)? < 0.0 {
                return Err(UsageError(format!("{key} must be non-negative")));
            }
        }
        Ok(())
    }

    /// The resolved table as `key=value` strings in declaration order.
    pub fn comment_lines(&self) -> Vec<String> {
        KEYS.iter()
            .map(|k| format!("{}={}", k.name, self.get(k.name)))
            .collect()
    }
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, UsageError> {
    let out: Vec<f64> = value
        .split(',')
        .map(|s| parse_as::<f64>(key, s, "a comma-separated list of numbers"))
        .collect::<Result<_, _>>()?;
    if out.iter().any(|x| !x.is_finite()) {
        return Err(UsageError(format!("{key}: values must be finite")));
    }
    Ok(out)
}

/// Text of `hyssim config`: every key with its default and meaning.
pub fn describe() -> String {
    let mut out = String::new();
    for k in KEYS {
        out.push_str(&format!("# {}\n{}={}\n", k.doc, k.name, k.default));
    }
    out
}
