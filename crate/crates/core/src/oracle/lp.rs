//! LP file format emitter.
//!
//! Writes the allocation program in the textual CPLEX LP format so that
//! instances outside the exact envelope can go to an external solver.
//! Positive and negative allocation changes are linearized with auxiliary
//! variables `u_t ≥ Y_t − Y_{t−1}` and `v_t ≥ Y_{t−1} − Y_t`, where the
//! allocations before the first and after the last interval are zero.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::{MilpInstance, RateConstraint};
use crate::error::Result;

/// Writes `inst` to `path` as a single-application program.
pub fn emit_lp(inst: &MilpInstance, path: &Path) -> Result<()> {
    write_lp(inst, &[inst.demand.clone()], path)
}

/// Writes a program whose workers are shared by several applications, one
/// demand vector per application. `inst.demand` is ignored.
pub fn write_lp(inst: &MilpInstance, apps: &[Vec<f64>], path: &Path) -> Result<()> {
    let text = render(inst, apps);
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

/// Number formatting that LP readers accept: no exponent for ordinary
/// magnitudes and full round-trip precision.
fn num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:?}")
    }
}

struct Terms(String);

impl Terms {
    fn new() -> Self {
        Terms(String::new())
    }

    fn add(&mut self, coef: f64, var: &str) {
        if coef == 0.0 {
            return;
        }
        let sign = if coef < 0.0 { "-" } else { "+" };
        if self.0.is_empty() {
            if coef < 0.0 {
                self.0.push_str("- ");
            }
        } else {
            let _ = write!(self.0, " {sign} ");
        }
        let _ = write!(self.0, "{} {var}", num(coef.abs()));
    }

    fn finish(self) -> String {
        if self.0.is_empty() {
            "0 yf_0".to_string()
        } else {
            self.0
        }
    }
}

fn wrap(out: &mut String, line: &str) {
    // LP readers cap line length; break between terms.
    let mut width = 0;
    for (i, tok) in line.split(' ').enumerate() {
        if width > 200 && (tok == "+" || tok == "-") {
            out.push_str("\n   ");
            width = 3;
        } else if i > 0 {
            out.push(' ');
            width += 1;
        }
        out.push_str(tok);
        width += tok.len();
    }
    out.push('\n');
}

pub(crate) fn render(inst: &MilpInstance, apps: &[Vec<f64>]) -> String {
    let t_len = apps.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let we = inst.energy_weight;
    let wc = inst.cost_weight;
    let classes = [("f", &inst.fpga), ("c", &inst.cpu)];

    let mut out = String::from("\\ hybrid worker allocation program\nMinimize\n");
    let mut obj = Terms::new();
    for (k, coef) in classes {
        for t in 0..t_len {
            obj.add(we * coef.idle_energy + wc * coef.price, &format!("y{k}_{t}"));
            for j in 0..apps.len() {
                obj.add(we * (coef.busy_energy - coef.idle_energy), &format!("b{k}_{j}_{t}"));
            }
        }
        for t in 0..=t_len {
            obj.add(we * coef.alloc_energy, &format!("u{k}_{t}"));
            obj.add(we * coef.dealloc_energy, &format!("v{k}_{t}"));
        }
    }
    wrap(&mut out, &format!(" obj: {}", obj.finish()));

    out.push_str("Subject To\n");
    let rel = match inst.rate_constraint {
        RateConstraint::Equal => "=",
        RateConstraint::AtLeast => ">=",
    };
    for (j, demand) in apps.iter().enumerate() {
        for t in 0..t_len {
            let mut row = Terms::new();
            row.add(inst.fpga.rate, &format!("bf_{j}_{t}"));
            row.add(inst.cpu.rate, &format!("bc_{j}_{t}"));
            let x = demand.get(t).copied().unwrap_or(0.0);
            wrap(&mut out, &format!(" rate_{j}_{t}: {} {rel} {}", row.finish(), num(x)));
        }
    }
    for (k, _) in classes {
        for t in 0..t_len {
            let mut line = String::new();
            for j in 0..apps.len() {
                let _ = write!(line, "b{k}_{j}_{t} + ");
            }
            let line = line.trim_end_matches(" + ");
            wrap(&mut out, &format!(" cap{k}_{t}: {line} - y{k}_{t} <= 0"));
        }
        // Transitions into interval t; interval t_len is the final teardown.
        for t in 0..=t_len {
            let cur = (t < t_len).then(|| format!("y{k}_{t}"));
            let prev = (t > 0).then(|| format!("y{k}_{}", t - 1));
            let mut up = format!("u{k}_{t}");
            let mut dn = format!("v{k}_{t}");
            if let Some(c) = &cur {
                up.push_str(&format!(" - {c}"));
                dn.push_str(&format!(" + {c}"));
            }
            if let Some(p) = &prev {
                up.push_str(&format!(" + {p}"));
                dn.push_str(&format!(" - {p}"));
            }
            wrap(&mut out, &format!(" up{k}_{t}: {up} >= 0"));
            wrap(&mut out, &format!(" dn{k}_{t}: {dn} >= 0"));
        }
    }
    let s = inst.fpga_spin_up_intervals as usize;
    for t in 0..t_len.saturating_sub(s) {
        let mut line = format!("yf_{}", t + s);
        for tau in t..=t + s {
            line.push_str(&format!(" - uf_{}", tau + 1));
        }
        wrap(&mut out, &format!(" spin_{t}: {line} >= 0"));
    }

    out.push_str("Bounds\n");
    for (k, coef) in classes {
        for t in 0..t_len {
            match coef.ceiling {
                Some(n) => {
                    let _ = writeln!(out, " 0 <= y{k}_{t} <= {n}");
                }
                None => {
                    let _ = writeln!(out, " y{k}_{t} >= 0");
                }
            }
        }
    }
    out.push_str("Generals\n");
    for (k, _) in classes {
        let names: Vec<String> = (0..t_len).map(|t| format!("y{k}_{t}")).collect();
        wrap(&mut out, &format!(" {}", names.join(" ")));
    }
    out.push_str("End\n");
    out
}
