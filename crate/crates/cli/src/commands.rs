use std::path::{Path, PathBuf};

use anyhow::Context;
use hyssim::experiment::{simulate, SchedulerKind};
use hyssim::model::SimReport;
use hyssim::oracle::{
    demand_from_rates, emit_lp, pareto_sweep, MilpInstance, MAX_EXACT_FPGAS, MAX_EXACT_INTERVALS,
};
use hyssim::tracegen::{write_arrival_csv, write_rate_csv};
use rayon::prelude::*;

use crate::config::{Config, Source, KEYS};
use crate::output::{mean_cells, report_cells, sig6, Table, REPORT_COLUMNS};
use crate::trace::{self, Loaded};
use crate::UsageError;

fn comments(command: &str, config: &Config) -> Vec<String> {
    let mut out = vec![format!("hyssim {command}")];
    out.extend(config.comment_lines());
    out
}

/// `foo.csv` becomes `foo.arrivals.csv`.
pub fn arrivals_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.arrivals.csv"))
}

pub fn gen(config: &Config, out: &Path, with_arrivals: bool) -> anyhow::Result<()> {
    config.validate()?;
    let seed = config.u64("seed")?;
    let mut trace = config.workload()?.trace(seed)?;
    trace.deadline_multiplier = config.deadline_multiplier()?;
    let mut notes = comments("gen", config);
    notes.push(format!("horizon_s={}", trace.horizon));
    write_rate_csv(out, &trace.rates, &notes).with_context(|| format!("writing {}", out.display()))?;
    if with_arrivals {
        let path = arrivals_path(out);
        write_arrival_csv(&path, &trace, &notes)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn row(kind: SchedulerKind, seed: &str, report: &SimReport) -> anyhow::Result<Vec<String>> {
    let mut cells = vec![kind.name(), seed.to_string()];
    cells.extend(report_cells(report)?);
    Ok(cells)
}

fn report_header(leading: &[&str]) -> Vec<&'static str> {
    let mut cols: Vec<&'static str> = vec!["scheduler"];
    for key in leading {
        let spec = KEYS.iter().find(|k| k.name == *key).expect("declared key");
        cols.push(spec.name);
    }
    cols.push("seed");
    cols.extend_from_slice(REPORT_COLUMNS);
    cols
}

pub fn run(
    config: &Config,
    trace_path: &Path,
    out: Option<&Path>,
    events: Option<&Path>,
) -> anyhow::Result<()> {
    config.validate()?;
    let loaded = trace::load(trace_path, config)?;
    let mut sim = config.sim_config()?;
    sim.record_events = events.is_some();
    let kind = config.scheduler()?;
    let result = simulate(kind, loaded.source(), &sim, &config.run_options()?)?;
    if let Some(level) = result.level {
        eprintln!("{kind}: provisioned level {level}");
    }
    if let Some(path) = events {
        result.output.write_event_log(path)?;
    }
    let seed = loaded.seed().map_or_else(|| "-".to_string(), |s| s.to_string());
    let mut notes = comments("run", config);
    notes.push(format!("trace={}", trace_path.display()));
    let mut table = Table::new(notes, &report_header(&[]));
    table.push(row(kind, &seed, &result.output.report)?);
    table.append(out)
}

/// One axis of a sweep: a config key and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: &'static str,
    pub values: Vec<String>,
}

impl Axis {
    pub fn parse(text: &str) -> Result<Axis, UsageError> {
        let (k, vals) = text
            .split_once('=')
            .ok_or_else(|| UsageError(format!("expected KEY=V1,V2,..., got '{text}'")))?;
        let spec = KEYS
            .iter()
            .find(|s| s.name == k.trim())
            .ok_or_else(|| UsageError(format!("unknown config key '{}'", k.trim())))?;
        if matches!(spec.name, "seed" | "repetitions" | "scheduler") {
            return Err(UsageError(format!(
                "'{}' cannot be swept; use --seeds or --schedulers",
                spec.name
            )));
        }
        let values: Vec<String> = vals.split(',').map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err(UsageError(format!("empty value in '{text}'")));
        }
        Ok(Axis { key: spec.name, values })
    }
}

/// Cross product of axis values in row-major order, first axis slowest.
pub fn grid(axes: &[Axis]) -> Vec<Vec<&str>> {
    let mut points: Vec<Vec<&str>> = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(v.as_str());
                    q
                })
            })
            .collect();
    }
    points
}

pub fn sweep(
    config: &Config,
    schedulers: &[SchedulerKind],
    axes: &[Axis],
    out: Option<&Path>,
) -> anyhow::Result<()> {
    config.validate()?;
    let first_seed = config.u64("seed")?;
    let reps = config.u64("repetitions")?;
    let seeds: Vec<u64> = (first_seed..first_seed + reps).collect();
    let points = grid(axes);

    // Every point is validated before any simulation starts.
    let mut configs = Vec::with_capacity(points.len());
    for point in &points {
        let mut c = config.clone();
        for (axis, value) in axes.iter().zip(point) {
            c.set(axis.key, value, Source::Flag)?;
        }
        c.validate()?;
        configs.push(c);
    }

    let mut tasks: Vec<(usize, SchedulerKind, u64)> = Vec::new();
    for &kind in schedulers {
        for p in 0..points.len() {
            tasks.extend(seeds.iter().map(|&s| (p, kind, s)));
        }
    }
    // Indexed collection keeps the task order whatever the completion order.
    let reports: Vec<SimReport> = tasks
        .par_iter()
        .map(|&(p, kind, seed)| -> anyhow::Result<SimReport> {
            let c = &configs[p];
            let mut trace = c.workload()?.trace(seed)?;
            trace.deadline_multiplier = c.deadline_multiplier()?;
            let result = simulate(kind, &trace, &c.sim_config()?, &c.run_options()?)
                .with_context(|| format!("{kind} seed {seed}"))?;
            Ok(result.output.report)
        })
        .collect::<anyhow::Result<_>>()?;

    let keys: Vec<&str> = axes.iter().map(|a| a.key).collect();
    let mut table = Table::new(comments("sweep", config), &report_header(&keys));
    for (chunk, block) in reports.chunks(seeds.len()).enumerate() {
        let kind = tasks[chunk * seeds.len()].1;
        let point = &points[tasks[chunk * seeds.len()].0];
        let lead = |seed: String| {
            let mut cells = vec![kind.name()];
            cells.extend(point.iter().map(|v| v.to_string()));
            cells.push(seed);
            cells
        };
        for (seed, report) in seeds.iter().zip(block) {
            let mut cells = lead(seed.to_string());
            cells.extend(report_cells(report)?);
            table.push(cells);
        }
        let mut cells = lead("mean".into());
        cells.extend(mean_cells(block)?);
        table.push(cells);
    }
    table.write(out)
}

/// Builds the allocation program for a loaded trace.
pub fn oracle_instance(config: &Config, loaded: &Loaded) -> anyhow::Result<MilpInstance> {
    let platform = config.platform()?;
    let sim = config.sim_config()?;
    let source = loaded.source();
    let horizon = source.horizon();
    if !(horizon > 0.0) {
        return Err(UsageError("the trace is empty".into()).into());
    }
    let intervals = match config.oracle_intervals()? {
        Some(n) => n,
        None => (horizon / sim.interval).ceil().max(1.0) as usize,
    };
    let len = horizon / intervals as f64;
    let (demand, size) = match loaded.rates() {
        Some(rates) => (demand_from_rates(rates, horizon, intervals), rates.base_size),
        None => {
            let mut counts = vec![0.0; intervals];
            let mut total_size = 0.0;
            for r in source.requests() {
                let k = ((r.arrival / len) as usize).min(intervals - 1);
                counts[k] += 1.0;
                total_size += r.base_size;
            }
            let n: f64 = counts.iter().sum();
            let size = if n > 0.0 { total_size / n } else { 1.0 };
            (counts, size)
        }
    };
    let mut inst = MilpInstance::from_platform(demand, &platform, len, size);
    inst.fpga.ceiling = config.oracle_fpga_ceiling()?;
    inst.rate_constraint = config.rate_constraint()?;
    inst.cpu.dealloc_energy = config.f64("oracle.cpu_dealloc_j")?;
    inst.fpga.dealloc_energy = config.f64("oracle.fpga_dealloc_j")?;
    Ok(inst)
}

pub fn oracle(
    config: &Config,
    trace_path: &Path,
    out: Option<&Path>,
    emit: Option<&Path>,
) -> anyhow::Result<()> {
    config.validate()?;
    let loaded = trace::load(trace_path, config)?;
    let inst = oracle_instance(config, &loaded)?;
    if let Some(path) = emit {
        let weighted = inst.blended(config.f64("alpha")?)?;
        emit_lp(&weighted, path).with_context(|| format!("writing {}", path.display()))?;
        return Ok(());
    }
    let front = pareto_sweep(&inst, &config.alphas()?).map_err(|e| match e {
        hyssim::Error::Envelope(msg) => anyhow::Error::new(hyssim::Error::Envelope(format!(
            "{msg}; the exact solver handles at most {MAX_EXACT_INTERVALS} intervals and \
             {MAX_EXACT_FPGAS} FPGAs; lower oracle.intervals or oracle.fpga_ceiling, or write the \
             program with --emit-lp for an external solver"
        ))),
        other => other.into(),
    })?;
    let mut notes = comments("oracle", config);
    notes.push(format!("trace={}", trace_path.display()));
    notes.push(format!(
        "intervals={} interval_s={}",
        inst.intervals(),
        sig6(loaded.source().horizon() / inst.intervals() as f64)?
    ));
    let mut table = Table::new(notes, &["alpha", "energy_j", "cost_usd"]);
    for p in &front {
        table.push(vec![sig6(p.alpha)?, sig6(p.energy)?, sig6(p.cost)?]);
    }
    table.write(out)
}
