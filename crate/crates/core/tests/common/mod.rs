//! Shared helpers for integration tests.
#![allow(dead_code)]

use hyssim::oracle::{ClassCoeffs, MilpInstance, RateConstraint};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Result of exhaustive enumeration: objective and the first optimal
/// allocation in (FPGA sequence, CPU sequence) lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub objective: f64,
    pub fpga: Vec<u32>,
    pub cpu: Vec<u32>,
}

/// Minimum busy-only cost of serving `x` with `f` FPGAs and `c` CPUs, or
/// `None` when they cannot. Negative premiums saturate their class; the rest
/// of the demand goes to the class with the lower premium per request.
fn busy_cost(inst: &MilpInstance, x: f64, f: u32, c: u32) -> Option<f64> {
    let we = inst.energy_weight;
    let classes = [
        (we * (inst.fpga.busy_energy - inst.fpga.idle_energy), inst.fpga.rate, f as f64),
        (we * (inst.cpu.busy_energy - inst.cpu.idle_energy), inst.cpu.rate, c as f64),
    ];
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        (classes[a].0 / classes[a].1).total_cmp(&(classes[b].0 / classes[b].1))
    });
    let mut left = x;
    let mut cost = 0.0;
    for &i in &order {
        let (k, r, n) = classes[i];
        let busy = if k < 0.0 && inst.rate_constraint == RateConstraint::AtLeast {
            n
        } else {
            (left / r).clamp(0.0, n)
        };
        cost += k * busy;
        left -= busy * r;
    }
    match inst.rate_constraint {
        RateConstraint::Equal if left != 0.0 => None,
        RateConstraint::AtLeast if left > 0.0 => None,
        _ => Some(cost),
    }
}

fn window_holds(y: &[u32], s: usize) -> bool {
    let t_len = y.len();
    let at = |t: usize| if t < t_len { y[t] as i64 } else { 0 };
    (0..t_len.saturating_sub(s)).all(|t| {
        let grown: i64 = (t..=t + s).map(|tau| (at(tau + 1) - at(tau)).max(0)).sum();
        at(t + s) >= grown
    })
}

fn sequences(t_len: usize, max: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..t_len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..=max).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

fn class_cost(inst: &MilpInstance, coef: &ClassCoeffs, y: &[u32]) -> f64 {
    let we = inst.energy_weight;
    let mut total = 0.0;
    let mut prev = 0i64;
    for &v in y.iter().chain(std::iter::once(&0)) {
        let d = v as i64 - prev;
        total += if d > 0 {
            we * coef.alloc_energy * d as f64
        } else {
            we * coef.dealloc_energy * (-d) as f64
        };
        prev = v as i64;
    }
    for &v in y {
        total += (we * coef.idle_energy + inst.cost_weight * coef.price) * v as f64;
    }
    total
}

/// Enumerates every integer allocation up to the ceilings. `None` when no
/// allocation is feasible.
pub fn brute_force(inst: &MilpInstance) -> Option<BruteForce> {
    let t_len = inst.demand.len();
    let nf = inst.fpga.ceiling.expect("brute force needs an FPGA ceiling");
    let nc = inst.cpu.ceiling.expect("brute force needs a CPU ceiling");
    let s = inst.fpga_spin_up_intervals as usize;
    let cpu_seqs = sequences(t_len, nc);
    let mut best: Option<BruteForce> = None;
    for fy in sequences(t_len, nf) {
        if !window_holds(&fy, s) {
            continue;
        }
        let f_cost = class_cost(inst, &inst.fpga, &fy);
        'cpu: for cy in &cpu_seqs {
            let mut total = f_cost + class_cost(inst, &inst.cpu, cy);
            for t in 0..t_len {
                match busy_cost(inst, inst.demand[t], fy[t], cy[t]) {
                    Some(v) => total += v,
                    None => continue 'cpu,
                }
            }
            if best.as_ref().is_none_or(|b| total < b.objective) {
                best = Some(BruteForce {
                    objective: total,
                    fpga: fy.clone(),
                    cpu: cy.clone(),
                });
            }
        }
    }
    best
}

/// Random instance with small integer energies and power-of-two rates so
/// every intermediate value is exactly representable.
pub fn random_small_instance(rng: &mut ChaCha8Rng) -> MilpInstance {
    let t_len = rng.random_range(1..=3);
    let nf = rng.random_range(0..=2);
    let nc = rng.random_range(0..=4);
    let rf = [1.0, 2.0, 4.0][rng.random_range(0..3)];
    let rc = [1.0, 2.0][rng.random_range(0..2)];
    let mut coef = |rate: f64, ceiling: u32| {
        let idle = rng.random_range(0..=8) as f64;
        ClassCoeffs {
            alloc_energy: rng.random_range(0..=40) as f64,
            dealloc_energy: if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0..=10) as f64 },
            busy_energy: idle + rng.random_range(0..=24) as f64,
            idle_energy: idle,
            rate,
            ceiling: Some(ceiling),
            price: rng.random_range(0..=6) as f64,
        }
    };
    let fpga = coef(rf, nf);
    let cpu = coef(rc, nc);
    let cap = (rf * nf as f64 + rc * nc as f64) as u32;
    let demand = (0..t_len)
        .map(|_| {
            // Mostly feasible, occasionally over capacity; halves exercise
            // fractional busy counts.
            rng.random_range(0..=2 * cap + 2) as f64 / 2.0
        })
        .collect();
    MilpInstance {
        demand,
        cpu,
        fpga,
        fpga_spin_up_intervals: rng.random_range(0..=1),
        energy_weight: [0.0, 1.0, 2.0][rng.random_range(0..3)],
        cost_weight: [0.0, 1.0, 4.0][rng.random_range(0..3)],
        rate_constraint: if rng.random_bool(0.5) {
            RateConstraint::Equal
        } else {
            RateConstraint::AtLeast
        },
    }
}
