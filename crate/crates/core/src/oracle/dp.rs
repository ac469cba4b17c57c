//! Exact solver: backward dynamic program over integer allocations.
//!
//! The state before interval `t` is `(f_{t-2}, f_{t-1}, c_{t-1})`. The FPGA
//! history covers the spin-up window for `S_f ≤ 1`. The CPU transition cost is
//! piecewise linear in the allocation change, so the minimum over the next
//! CPU count is a one-dimensional distance transform instead of a quadratic
//! scan.

use super::{evaluate, MilpInstance, MilpSolution, RateConstraint, MAX_EXACT_FPGAS, MAX_EXACT_INTERVALS};
use crate::error::{Error, Result};

/// Busy-fraction choice for one `(f, c)` pair.
#[derive(Clone, Copy)]
struct Inner {
    value: f64,
    busy_f: f64,
    busy_c: f64,
}

const INFEASIBLE: Inner = Inner {
    value: f64::INFINITY,
    busy_f: 0.0,
    busy_c: 0.0,
};

struct Layout {
    f2: usize,
    f: usize,
    c: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.f2 * self.f * self.c
    }

    fn idx(&self, f2: usize, f1: usize, c1: usize) -> usize {
        (f2 * self.f + f1) * self.c + c1
    }
}

fn ceil_div(x: f64, r: f64) -> u32 {
    let q = x / r;
    // Absorb rounding noise so exact multiples do not gain a worker.
    let n = (q - 1e-9 * q.max(1.0)).ceil();
    n.max(0.0) as u32
}

fn resolve_bounds(inst: &MilpInstance) -> Result<(u32, u32)> {
    let peak = inst.demand.iter().copied().fold(0.0, f64::max);
    let fpga = match inst.fpga.ceiling {
        Some(n) if n > MAX_EXACT_FPGAS => {
            return Err(Error::Envelope(format!(
                "FPGA ceiling {n} exceeds {MAX_EXACT_FPGAS}"
            )))
        }
        Some(n) => n,
        None => {
            let need = ceil_div(peak, inst.fpga.rate);
            if need > MAX_EXACT_FPGAS {
                return Err(Error::Envelope(format!(
                    "unbounded FPGAs would need {need}, more than {MAX_EXACT_FPGAS}"
                )));
            }
            need
        }
    };
    // Extra CPUs beyond the peak need only add idle energy and transitions.
    let cpu_need = ceil_div(peak, inst.cpu.rate);
    let cpu = inst.cpu.ceiling.map_or(cpu_need, |n| n.min(cpu_need));
    Ok((fpga, cpu))
}

/// Cheapest busy split for `f` FPGAs and `c` CPUs serving `x` requests.
fn inner(inst: &MilpInstance, x: f64, f: u32, c: u32) -> Inner {
    let (rf, rc) = (inst.fpga.rate, inst.cpu.rate);
    let (ff, cf) = (f as f64, c as f64);
    let tol = 1e-9 * x.max(1.0);
    if x > rf * ff + rc * cf + tol {
        return INFEASIBLE;
    }
    let we = inst.energy_weight;
    let kf = we * (inst.fpga.busy_energy - inst.fpga.idle_energy);
    let kc = we * (inst.cpu.busy_energy - inst.cpu.idle_energy);
    let fixed = (we * inst.fpga.idle_energy + inst.cost_weight * inst.fpga.price) * ff
        + (we * inst.cpu.idle_energy + inst.cost_weight * inst.cpu.price) * cf;

    let mut best = INFEASIBLE;
    let mut consider = |bf: f64, bc: f64| {
        let v = kf * bf + kc * bc;
        if v < best.value {
            best = Inner {
                value: v,
                busy_f: bf,
                busy_c: bc,
            };
        }
    };
    // Vertices where the rate line crosses the box boundary.
    for bf in [0.0, ff] {
        let bc = (x - rf * bf) / rc;
        if bc >= -tol / rc && bc <= cf + tol / rc {
            consider(bf, bc.clamp(0.0, cf));
        }
    }
    for bc in [0.0, cf] {
        let bf = (x - rc * bc) / rf;
        if bf >= -tol / rf && bf <= ff + tol / rf {
            consider(bf.clamp(0.0, ff), bc);
        }
    }
    if inst.rate_constraint == RateConstraint::AtLeast {
        for (bf, bc) in [(0.0, 0.0), (ff, 0.0), (0.0, cf), (ff, cf)] {
            if rf * bf + rc * bc >= x - tol {
                consider(bf, bc);
            }
        }
    }
    best.value += fixed;
    best
}

fn transition(alloc: f64, dealloc: f64, from: u32, to: u32) -> f64 {
    if to >= from {
        alloc * (to - from) as f64
    } else {
        dealloc * (from - to) as f64
    }
}

/// Whether choosing `f0` for interval `t` after `f2, f1` respects the
/// spin-up window.
fn window_ok(spin: u32, t: usize, f2: u32, f1: u32, f0: u32) -> bool {
    match spin {
        0 => t == 0 || f0 <= 2 * f1,
        _ => t < 2 || f1 >= f1.saturating_sub(f2) + f0.saturating_sub(f1),
    }
}

fn close(a: f64, b: f64) -> bool {
    a.is_finite() && (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Solves `inst` exactly. Ties resolve to the lexicographically smallest
/// FPGA sequence, then the smallest CPU sequence.
pub fn solve_exact(inst: &MilpInstance) -> Result<MilpSolution> {
    inst.validate()?;
    let t_len = inst.intervals();
    if t_len > MAX_EXACT_INTERVALS {
        return Err(Error::Envelope(format!(
            "{t_len} intervals exceed {MAX_EXACT_INTERVALS}"
        )));
    }
    let spin = inst.fpga_spin_up_intervals;
    if spin > 1 {
        return Err(Error::Envelope(format!(
            "FPGA spin-up of {spin} intervals; only 0 or 1 are supported"
        )));
    }
    let (nf, nc) = resolve_bounds(inst)?;
    for (t, &x) in inst.demand.iter().enumerate() {
        let cap = inst.fpga.rate * nf as f64 + inst.cpu.rate * nc as f64;
        if x > cap * (1.0 + 1e-9) {
            return Err(Error::Infeasible(format!(
                "interval {t} demand {x} exceeds the capacity {cap} of all allowed workers"
            )));
        }
    }

    let lay = Layout {
        f2: if spin == 1 { nf as usize + 1 } else { 1 },
        f: nf as usize + 1,
        c: nc as usize + 1,
    };
    let we = inst.energy_weight;
    let (af, df) = (we * inst.fpga.alloc_energy, we * inst.fpga.dealloc_energy);
    let (ac, dc) = (we * inst.cpu.alloc_energy, we * inst.cpu.dealloc_energy);

    // Inner costs per interval, indexed [f * lay.c + c].
    let inner_tab: Vec<Vec<Inner>> = inst
        .demand
        .iter()
        .map(|&x| {
            let mut row = Vec::with_capacity(lay.f * lay.c);
            for f in 0..=nf {
                for c in 0..=nc {
                    row.push(inner(inst, x, f, c));
                }
            }
            row
        })
        .collect();

    // values[t] is the cost-to-go from the state before interval t.
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); t_len + 1];
    let mut term = vec![0.0; lay.len()];
    for f2 in 0..lay.f2 {
        for f1 in 0..lay.f {
            for c1 in 0..lay.c {
                term[lay.idx(f2, f1, c1)] = df * f1 as f64 + dc * c1 as f64;
            }
        }
    }
    values[t_len] = term;

    let mut h = vec![0.0; lay.c];
    let mut up = vec![0.0; lay.c];
    let mut reach = vec![0.0; lay.f * lay.f * lay.c];
    for t in (0..t_len).rev() {
        let next = &values[t + 1];
        let tab = &inner_tab[t];
        // reach[(f1, f0, c1)]: best over c0 of CPU transition plus the rest,
        // given FPGA counts f1 then f0.
        for f1 in 0..lay.f {
            for f0 in 0..lay.f {
                let nidx = if spin == 1 { f1 } else { 0 };
                for c0 in 0..lay.c {
                    h[c0] = tab[f0 * lay.c + c0].value + next[lay.idx(nidx, f0, c0)];
                }
                let mut acc = f64::INFINITY;
                for c1 in (0..lay.c).rev() {
                    acc = h[c1].min(acc + ac);
                    up[c1] = acc;
                }
                let base = (f1 * lay.f + f0) * lay.c;
                let mut acc = f64::INFINITY;
                for c1 in 0..lay.c {
                    acc = h[c1].min(acc + dc);
                    reach[base + c1] = up[c1].min(acc);
                }
            }
        }
        let mut cur = vec![f64::INFINITY; lay.len()];
        for f2 in 0..lay.f2 {
            for f1 in 0..lay.f {
                for f0 in 0..lay.f {
                    if !window_ok(spin, t, f2 as u32, f1 as u32, f0 as u32) {
                        continue;
                    }
                    let tf = transition(af, df, f1 as u32, f0 as u32);
                    let base = (f1 * lay.f + f0) * lay.c;
                    for c1 in 0..lay.c {
                        let v = tf + reach[base + c1];
                        let slot = &mut cur[lay.idx(f2, f1, c1)];
                        if v < *slot {
                            *slot = v;
                        }
                    }
                }
            }
        }
        values[t] = cur;
    }

    let total = values[0][lay.idx(0, 0, 0)];
    if !total.is_finite() {
        return Err(Error::Infeasible(
            "no allocation sequence satisfies the spin-up constraint".into(),
        ));
    }

    // Forward pass. Fix the FPGA sequence first: at each interval take the
    // smallest FPGA count reachable on any optimal path that follows the
    // prefix chosen so far. The CPU counts that survive form a set per
    // interval; prune those that cannot finish the fixed FPGA sequence, then
    // pick the smallest CPU count at each step.
    let step = |t: usize, f1: usize, c1: usize, f0: usize, c0: usize| -> f64 {
        let nidx = if spin == 1 { f1 } else { 0 };
        transition(af, df, f1 as u32, f0 as u32)
            + transition(ac, dc, c1 as u32, c0 as u32)
            + inner_tab[t][f0 * lay.c + c0].value
            + values[t + 1][lay.idx(nidx, f0, c0)]
    };
    let prev_f = |path: &[usize], t: usize| -> (usize, usize) {
        let f1 = if t >= 1 { path[t - 1] } else { 0 };
        let f2 = if spin == 1 && t >= 2 { path[t - 2] } else { 0 };
        (f2, f1)
    };
    let mut fpath: Vec<usize> = Vec::with_capacity(t_len);
    let mut reachable = vec![vec![false; lay.c]; t_len + 1];
    reachable[0][0] = true;
    for t in 0..t_len {
        let (f2, f1) = prev_f(&fpath, t);
        let matches = |c1: usize, f0: usize, c0: usize| {
            window_ok(spin, t, f2 as u32, f1 as u32, f0 as u32)
                && close(step(t, f1, c1, f0, c0), values[t][lay.idx(f2, f1, c1)])
        };
        let best_f = (0..lay.f).find(|&f0| {
            (0..lay.c).any(|c1| reachable[t][c1] && (0..lay.c).any(|c0| matches(c1, f0, c0)))
        });
        let f0 = best_f.ok_or_else(|| {
            Error::Contract(format!("exact solver lost its optimal path at interval {t}"))
        })?;
        for c1 in 0..lay.c {
            if reachable[t][c1] {
                for c0 in 0..lay.c {
                    if matches(c1, f0, c0) {
                        reachable[t + 1][c0] = true;
                    }
                }
            }
        }
        fpath.push(f0);
    }
    let mut finishes = reachable.clone();
    for t in (0..t_len).rev() {
        let (f2, f1) = prev_f(&fpath, t);
        let f0 = fpath[t];
        for c1 in 0..lay.c {
            finishes[t][c1] = reachable[t][c1]
                && (0..lay.c).any(|c0| {
                    finishes[t + 1][c0]
                        && close(step(t, f1, c1, f0, c0), values[t][lay.idx(f2, f1, c1)])
                });
        }
    }
    let mut fpga_alloc = Vec::with_capacity(t_len);
    let mut cpu_alloc = Vec::with_capacity(t_len);
    let mut fpga_busy = Vec::with_capacity(t_len);
    let mut cpu_busy = Vec::with_capacity(t_len);
    let mut c1 = 0;
    for t in 0..t_len {
        let (f2, f1) = prev_f(&fpath, t);
        let f0 = fpath[t];
        let c0 = (0..lay.c)
            .find(|&c0| {
                finishes[t + 1][c0]
                    && close(step(t, f1, c1, f0, c0), values[t][lay.idx(f2, f1, c1)])
            })
            .ok_or_else(|| {
                Error::Contract(format!("exact solver lost its optimal path at interval {t}"))
            })?;
        let cell = inner_tab[t][f0 * lay.c + c0];
        fpga_alloc.push(f0 as u32);
        cpu_alloc.push(c0 as u32);
        fpga_busy.push(cell.busy_f);
        cpu_busy.push(cell.busy_c);
        c1 = c0;
    }

    let breakdown = evaluate(inst, &fpga_alloc, &cpu_alloc, &fpga_busy, &cpu_busy);
    Ok(MilpSolution {
        objective: inst.energy_weight * breakdown.energy() + inst.cost_weight * breakdown.cost,
        cpu_alloc,
        fpga_alloc,
        cpu_busy,
        fpga_busy,
        breakdown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Platform;

    #[test]
    fn inner_prefers_cheaper_busy_class() {
        let inst = MilpInstance::from_platform(vec![3000.0], &Platform::default(), 10.0, 0.01);
        let cell = inner(&inst, 3000.0, 1, 2);
        // Saturate the FPGA and put the remaining 1000 requests on one CPU.
        assert_eq!(cell.busy_f, 1.0);
        assert_eq!(cell.busy_c, 1.0);
        assert!(inner(&inst, 3000.0, 1, 0).value.is_infinite());
    }

    #[test]
    fn window_semantics() {
        assert!(window_ok(0, 0, 0, 0, 7));
        assert!(window_ok(0, 3, 0, 2, 4));
        assert!(!window_ok(0, 3, 0, 2, 5));
        // Growth 1 -> 3 consumes the whole window, so no further growth.
        assert!(window_ok(1, 2, 1, 3, 3));
        assert!(window_ok(1, 2, 1, 3, 4));
        assert!(!window_ok(1, 2, 1, 3, 5));
        assert!(window_ok(1, 2, 3, 3, 6));
        assert!(window_ok(1, 1, 0, 0, 12));
    }

    #[test]
    fn spin_up_window_limits_growth() {
        let mut inst =
            MilpInstance::from_platform(vec![0.0, 0.0, 8000.0], &Platform::default(), 10.0, 0.01);
        inst.cpu.ceiling = Some(0);
        inst.fpga.ceiling = Some(4);
        inst.fpga_spin_up_intervals = 0;
        // Doubling per interval forces idle FPGAs ahead of the burst.
        let s = solve_exact(&inst).unwrap();
        assert_eq!(s.fpga_alloc, vec![1, 2, 4]);
    }

    #[test]
    fn ceiling_rounding_is_exact_on_multiples() {
        assert_eq!(ceil_div(4000.0, 2000.0), 2);
        assert_eq!(ceil_div(4000.1, 2000.0), 3);
        assert_eq!(ceil_div(0.0, 2000.0), 0);
    }
}
