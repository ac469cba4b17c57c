//! CSV output with fixed number formatting.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use hyssim::model::SimReport;

/// Renders `x` with six significant digits, trailing zeros removed.
/// Plain decimal notation is used between 1e-5 and 1e15.
pub fn sig6(x: f64) -> anyhow::Result<String> {
    if !x.is_finite() {
        bail!("refusing to write non-finite value {x}");
    }
    if x == 0.0 {
        return Ok("0".into());
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (5..15).contains(&exp) {
        // Whole numbers: keep six digits, pad the rest with zeros.
        let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
        let sign = if x < 0.0 { "-" } else { "" };
        Ok(format!("{sign}{digits}{}", "0".repeat(exp as usize - 5)))
    } else if (-5..5).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        Ok(trim_zeros(format!("{x:.decimals$}")))
    } else {
        Ok(format!("{}e{exp}", trim_zeros(mantissa.to_string())))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// A CSV document: comment lines, a header and rows.
pub struct Table {
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(comments: Vec<String>, header: &[&str]) -> Self {
        Table {
            comments,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn render_rows(&self, out: &mut String) {
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        self.render_rows(&mut out);
        out
    }

    /// Writes the whole table to `path`, or to stdout when `path` is `None`.
    pub fn write(&self, path: Option<&Path>) -> anyhow::Result<()> {
        emit(path, &self.render(), false)
    }

    /// Appends only the rows when `path` already holds data, otherwise
    /// writes the full table.
    pub fn append(&self, path: Option<&Path>) -> anyhow::Result<()> {
        match path {
            Some(p) if std::fs::metadata(p).map(|m| m.len() > 0).unwrap_or(false) => {
                let mut rows = String::new();
                self.render_rows(&mut rows);
                emit(Some(p), &rows, true)
            }
            _ => self.write(path),
        }
    }
}

fn emit(path: Option<&Path>, text: &str, append: bool) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            let mut file = OpenOptions::new()
                .create(true)
                .write(true)
                .append(append)
                .truncate(!append)
                .open(p)
                .with_context(|| format!("opening {}", p.display()))?;
            file.write_all(text.as_bytes())
                .with_context(|| format!("writing {}", p.display()))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).context("writing to stdout")?;
        }
    }
    Ok(())
}

pub const REPORT_COLUMNS: &[&str] = &[
    "efficiency_pct",
    "relative_cost",
    "deadline_misses",
    "fpga_spinups",
    "cpu_spinups",
    "energy_busy_j",
    "energy_idle_j",
    "energy_spin_j",
    "cost_usd",
];

/// Report cells in [`REPORT_COLUMNS`] order.
pub fn report_cells(r: &SimReport) -> anyhow::Result<Vec<String>> {
    Ok(vec![
        sig6(r.efficiency_pct)?,
        sig6(r.relative_cost)?,
        r.deadline_misses.to_string(),
        r.fpga_spin_ups.to_string(),
        r.cpu_spin_ups.to_string(),
        sig6(r.energy.busy())?,
        sig6(r.energy.idle())?,
        sig6(r.energy.transitions())?,
        sig6(r.total_cost_usd())?,
    ])
}

/// Column-wise means of reports, in [`REPORT_COLUMNS`] order.
pub fn mean_cells(reports: &[SimReport]) -> anyhow::Result<Vec<String>> {
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&SimReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    [
        mean(&|r| r.efficiency_pct),
        mean(&|r| r.relative_cost),
        mean(&|r| r.deadline_misses as f64),
        mean(&|r| r.fpga_spin_ups as f64),
        mean(&|r| r.cpu_spin_ups as f64),
        mean(&|r| r.energy.busy()),
        mean(&|r| r.energy.idle()),
        mean(&|r| r.energy.transitions()),
        mean(&|r| r.total_cost_usd()),
    ]
    .into_iter()
    .map(sig6)
    .collect()
}
