//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line
//! before asserting, so `cargo test -- --nocapture` gives a readable
//! summary even when a criterion fails.

mod common;

use std::time::Instant;

use hyssim::dispatch::DispatchPolicy;
use hyssim::experiment::{simulate, RunOptions, SchedulerKind, SporkVariant};
use hyssim::model::{Platform, WorkerClass};
use hyssim::oracle::{
    demand_from_rates, pareto_sweep, restrict_homogeneous, solve_exact, MilpInstance,
};
use hyssim::simengine::SimConfig;
use hyssim::spork::{breakeven_threshold, Objective};
use hyssim::tracegen::{
    bmodel_volumes, write_arrival_csv, write_rate_csv, RequestSource, SyntheticWorkload,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const HOUR: f64 = 3600.0;

fn verdict(n: u32, pass: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn spork(variant: SporkVariant) -> SchedulerKind {
    SchedulerKind::Spork { variant, ideal: false }
}

#[derive(Default, Clone, Copy)]
struct Mean {
    efficiency: f64,
    cost: f64,
    misses: u64,
}

fn mean_over_seeds(
    kind: SchedulerKind,
    workload: &SyntheticWorkload,
    seeds: std::ops::RangeInclusive<u64>,
    policy: DispatchPolicy,
) -> Mean {
    let opts = RunOptions { dispatch: policy, ..Default::default() };
    let config = SimConfig::default();
    let mut m = Mean::default();
    let mut n = 0.0;
    for seed in seeds {
        let trace = workload.trace(seed).unwrap();
        let r = simulate(kind, &trace, &config, &opts).unwrap().output.report;
        m.efficiency += r.efficiency_pct;
        m.cost += r.relative_cost;
        m.misses += r.deadline_misses;
        n += 1.0;
    }
    m.efficiency /= n;
    m.cost /= n;
    m
}

#[test]
fn criterion_1_cpu_dynamic_ratios() {
    let w = SyntheticWorkload { burstiness: 0.6, horizon: 2.0 * HOUR, ..Default::default() };
    let config = SimConfig::default();
    let mut ok = true;
    let mut detail = String::new();
    for seed in 1..=3 {
        let trace = w.trace(seed).unwrap();
        let start = Instant::now();
        let r = simulate(SchedulerKind::CpuDynamic, &trace, &config, &RunOptions::default())
            .unwrap()
            .output
            .report;
        let secs = start.elapsed().as_secs_f64();
        let pass = (r.efficiency_pct - 16.6).abs() <= 1.5
            && (r.relative_cost - 1.36).abs() <= 0.05
            && secs < 30.0;
        ok &= pass;
        detail += &format!(
            " seed{seed}: {:.3}%/{:.4}x in {secs:.1}s;",
            r.efficiency_pct, r.relative_cost
        );
    }
    verdict(1, ok, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn criterion_2_breakeven_closed_forms() {
    let p = Platform::default();
    let (c, f) = (&p.cpu, &p.fpga);
    let energy = breakeven_threshold(&p, 10.0, Objective::Energy).unwrap();
    let cost = breakeven_threshold(&p, 10.0, Objective::Cost).unwrap();
    // Residual r on one FPGA costs idle·T + (busy−idle)·r/S; on CPUs busy·r.
    let energy_ref = 10.0 * f.idle_power / (c.busy_power - (f.busy_power - f.idle_power) / f.speedup);
    // One FPGA-interval of rent against r·S seconds of CPU rent.
    let cost_ref = 10.0 * f.price_per_hour / (f.speedup * c.price_per_hour);
    let ok = (energy - energy_ref).abs() <= 1e-9
        && (cost - cost_ref).abs() <= 1e-9
        && (energy - 1.4815).abs() <= 5e-5
        && (cost - 7.3503).abs() <= 5e-5;
    let detail = format!("energy T_b={energy:.10} cost T_b={cost:.10}");
    verdict(2, ok, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn criterion_3_oracle_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Instant::now();
    let (mut compared, mut mismatches) = (0, 0);
    for _ in 0..400 {
        let inst = common::random_small_instance(&mut rng);
        let brute = common::brute_force(&inst);
        match (solve_exact(&inst), brute) {
            (Ok(sol), Some(b)) => {
                compared += 1;
                if sol.objective != b.objective {
                    mismatches += 1;
                }
            }
            (Err(_), None) => {}
            _ => mismatches += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = compared >= 200 && mismatches == 0 && secs < 60.0;
    let detail = format!("{compared} feasible instances, {mismatches} mismatches, {secs:.1}s");
    verdict(3, ok, &detail);
    assert!(ok, "{detail}");
}

/// Aggregate optimal energies and costs for one burstiness level.
#[derive(Default)]
struct OracleMeans {
    energy_hybrid: f64,
    energy_fpga: f64,
    cost_hybrid: f64,
    cost_fpga: f64,
    cost_cpu: f64,
    endpoint_cost_energy: f64,
    endpoint_cost_cost: f64,
}

/// 1h traces cut into 48 intervals of 75 s, each instance scaled so its
/// busiest interval needs 11.5 FPGAs out of a pool of 12.
fn oracle_means(burstiness: f64) -> OracleMeans {
    const INTERVALS: usize = 48;
    let platform = Platform::default();
    let interval = HOUR / INTERVALS as f64;
    let mut m = OracleMeans::default();
    let seeds = 10;
    for seed in 1..=seeds {
        let w = SyntheticWorkload { horizon: HOUR, burstiness, ..Default::default() };
        let rates = w.rates(seed).unwrap();
        let demand = demand_from_rates(&rates, HOUR, INTERVALS);
        let mut inst = MilpInstance::from_platform(demand, &platform, interval, rates.base_size);
        let peak = inst.demand.iter().copied().fold(0.0, f64::max);
        let k = 11.5 * inst.fpga.rate / peak;
        inst.demand.iter_mut().for_each(|x| *x *= k);
        inst.fpga.ceiling = Some(12);

        let by_energy = inst.clone().with_weights(1.0, 0.0);
        let by_cost = inst.clone().with_weights(0.0, 1.0);
        m.energy_hybrid += solve_exact(&by_energy).unwrap().energy();
        m.energy_fpga +=
            solve_exact(&restrict_homogeneous(&by_energy, WorkerClass::Fpga)).unwrap().energy();
        m.cost_hybrid += solve_exact(&by_cost).unwrap().cost();
        m.cost_fpga += solve_exact(&restrict_homogeneous(&by_cost, WorkerClass::Fpga)).unwrap().cost();
        m.cost_cpu += solve_exact(&restrict_homogeneous(&by_cost, WorkerClass::Cpu)).unwrap().cost();
        let front = pareto_sweep(&inst, &[0.0, 1.0]).unwrap();
        m.endpoint_cost_cost += front[0].cost;
        m.endpoint_cost_energy += front[1].cost;
    }
    m
}

#[test]
fn criterion_4_oracle_trends() {
    let start = Instant::now();
    let flat = oracle_means(0.5);
    let a = flat.energy_hybrid / flat.energy_fpga;
    let mid = oracle_means(0.7);
    let b = mid.cost_hybrid < mid.cost_fpga && mid.cost_hybrid < mid.cost_cpu;
    let bursty = oracle_means(0.75);
    let c = bursty.endpoint_cost_energy / bursty.endpoint_cost_cost;
    let ok = a <= 1.02 && b && c >= 2.0;
    let detail = format!(
        "(a) E_h/E_f={a:.4} [{}] (b) C_h={:.4} C_f={:.4} C_c={:.4} [{}] (c) endpoint cost ratio={c:.3} [{}] in {:.1}s",
        if a <= 1.02 { "ok" } else { "fail" },
        mid.cost_hybrid / 10.0,
        mid.cost_fpga / 10.0,
        mid.cost_cpu / 10.0,
        if b { "ok" } else { "fail" },
        if c >= 2.0 { "ok" } else { "fail" },
        start.elapsed().as_secs_f64(),
    );
    verdict(4, ok, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn criterion_5_dispatch_ordering() {
    let w = SyntheticWorkload { burstiness: 0.6, horizon: HOUR, ..Default::default() };
    let kind = spork(SporkVariant::Energy);
    let ef = mean_over_seeds(kind, &w, 1..=10, DispatchPolicy::EfficientFirst);
    let ip = mean_over_seeds(kind, &w, 1..=10, DispatchPolicy::IndexPacking);
    let rr = mean_over_seeds(kind, &w, 1..=10, DispatchPolicy::RoundRobin);
    let ok = ef.efficiency >= ip.efficiency - 1.0 && ef.efficiency >= rr.efficiency + 3.0;
    let detail = format!(
        "efficient-first {:.2}% index-packing {:.2}% round-robin {:.2}%",
        ef.efficiency, ip.efficiency, rr.efficiency
    );
    verdict(5, ok, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn criterion_6_variant_ordering() {
    let w = SyntheticWorkload { burstiness: 0.7, horizon: HOUR, ..Default::default() };
    let run = |k| mean_over_seeds(k, &w, 1..=10, DispatchPolicy::EfficientFirst);
    let e = run(spork(SporkVariant::Energy));
    let b = run(spork(SporkVariant::Balanced));
    let c = run(spork(SporkVariant::Cost));
    let mark = run(SchedulerKind::MarkIdeal);
    let eff_order = e.efficiency >= b.efficiency && b.efficiency >= c.efficiency;
    let cost_order = c.cost <= b.cost && b.cost <= e.cost;
    let vs_mark = c.efficiency > mark.efficiency && c.cost <= mark.cost * 1.05;
    let ok = eff_order && cost_order && vs_mark;
    let detail = format!(
        "E {:.2}%/{:.4}x B {:.2}%/{:.4}x C {:.2}%/{:.4}x MArk-ideal {:.2}%/{:.4}x; efficiency order [{}] cost order [{}] C vs MArk [{}]",
        e.efficiency, e.cost, b.efficiency, b.cost, c.efficiency, c.cost, mark.efficiency, mark.cost,
        if eff_order { "ok" } else { "fail" },
        if cost_order { "ok" } else { "fail" },
        if vs_mark { "ok" } else { "fail" },
    );
    verdict(6, ok, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn criterion_7_deadlines() {
    let kinds = [
        spork(SporkVariant::Energy),
        spork(SporkVariant::Cost),
        spork(SporkVariant::Balanced),
        SchedulerKind::CpuDynamic,
        SchedulerKind::MarkIdeal,
        SchedulerKind::FpgaStatic,
        SchedulerKind::FpgaDynamic,
    ];
    let config = SimConfig::default();
    let mut detail = String::new();
    let mut total = 0;
    for b in [0.6, 0.75] {
        let w = SyntheticWorkload { burstiness: b, horizon: HOUR, ..Default::default() };
        let trace = w.trace(1).unwrap();
        for kind in kinds {
            let r = simulate(kind, &trace, &config, &RunOptions::default()).unwrap();
            let misses = r.output.report.deadline_misses;
            total += misses;
            if misses > 0 {
                detail += &format!(" {kind}@b={b}: {misses} misses;");
            }
        }
    }
    let ok = total == 0;
    if ok {
        detail = "no misses for any scheduler at b=0.6 and b=0.75".into();
    }
    verdict(7, ok, &detail);
    assert!(ok, "{detail}");
}

fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

#[test]
fn criterion_8_generator_properties() {
    let uniform = (1..=20).all(|seed| {
        let v = bmodel_volumes(1024.0, 64, 0.5, seed).unwrap();
        v.iter().all(|&x| x == v[0])
    });

    let levels = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75];
    let cvs: Vec<f64> = levels
        .iter()
        .map(|&b| {
            let w = SyntheticWorkload { burstiness: b, horizon: HOUR, ..Default::default() };
            (1..=50)
                .map(|seed| coefficient_of_variation(&w.rates(seed).unwrap().rates))
                .sum::<f64>()
                / 50.0
        })
        .collect();
    let increasing = cvs.windows(2).all(|w| w[0] < w[1]);

    let w = SyntheticWorkload {
        burstiness: 0.7,
        horizon: 600.0,
        avg_workers: 2.0,
        ..Default::default()
    };
    let within = (1..=200u64)
        .filter(|&seed| {
            let trace = w.trace(seed).unwrap();
            let expected = trace.rates.expected_count(trace.horizon());
            let n = trace.requests().count() as f64;
            (n - expected).abs() <= 3.0 * expected.sqrt()
        })
        .count();

    let ok = uniform && increasing && within >= 198;
    let detail = format!(
        "uniform at b=0.5 [{}] CV by b {:?} [{}] Poisson within 3 sigma {within}/200",
        if uniform { "ok" } else { "fail" },
        cvs.iter().map(|c| (c * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        if increasing { "ok" } else { "fail" },
    );
    verdict(8, ok, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let w = SyntheticWorkload { burstiness: 0.7, horizon: 600.0, ..Default::default() };
    let config = SimConfig { record_events: true, ..SimConfig::default() };
    let mut hashes_match = true;
    let mut files_match = true;
    for kind in SchedulerKind::ALL {
        let mut hashes = Vec::new();
        let mut logs = Vec::new();
        for round in 0..2 {
            let trace = w.trace(7).unwrap();
            let out = simulate(kind, &trace, &config, &RunOptions::default()).unwrap().output;
            hashes.push(out.event_hash);
            let path = dir.path().join(format!("{kind}-{round}.log"));
            out.write_event_log(&path).unwrap();
            logs.push(std::fs::read(&path).unwrap());
        }
        hashes_match &= hashes[0] == hashes[1];
        files_match &= logs[0] == logs[1];
    }
    for round in 0..2 {
        let trace = w.trace(7).unwrap();
        write_rate_csv(&dir.path().join(format!("rates-{round}.csv")), &trace.rates, &[]).unwrap();
        write_arrival_csv(&dir.path().join(format!("arrivals-{round}.csv")), &trace, &[]).unwrap();
    }
    for name in ["rates", "arrivals"] {
        let a = std::fs::read(dir.path().join(format!("{name}-0.csv"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("{name}-1.csv"))).unwrap();
        files_match &= a == b;
    }
    let ok = hashes_match && files_match;
    let detail = format!(
        "event hashes [{}] event logs and trace files byte-identical [{}]",
        if hashes_match { "ok" } else { "fail" },
        if files_match { "ok" } else { "fail" },
    );
    verdict(9, ok, &detail);
    assert!(ok, "{detail}");
}
