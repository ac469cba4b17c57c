//! Loading trace files given on the command line.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::Context;
use hyssim::tracegen::{
    header_comments, ingest_arrival_csv, ingest_rate_csv, ArrivalTrace, PoissonTrace, RateTrace,
    RequestSource,
};

use crate::config::{Config, Source};

pub enum Loaded {
    /// A rate trace replayed as Poisson arrivals.
    Rates(PoissonTrace),
    Arrivals { trace: ArrivalTrace, seed: Option<u64> },
}

impl Loaded {
    pub fn source(&self) -> &dyn RequestSource {
        match self {
            Loaded::Rates(t) => t,
            Loaded::Arrivals { trace, .. } => trace,
        }
    }

    /// Seed reported alongside results.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Loaded::Rates(t) => Some(t.seed),
            Loaded::Arrivals { seed, .. } => *seed,
        }
    }

    pub fn rates(&self) -> Option<&RateTrace> {
        match self {
            Loaded::Rates(t) => Some(&t.rates),
            Loaded::Arrivals { .. } => None,
        }
    }
}

fn first_data_line(path: &Path) -> anyhow::Result<String> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    for line in BufReader::new(file).lines() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if !line.starts_with('#') {
            return Ok(line.trim().to_string());
        }
    }
    Ok(String::new())
}

fn comment_value<T: std::str::FromStr>(path: &Path, key: &str) -> anyhow::Result<Option<T>> {
    Ok(header_comments(path)?
        .into_iter()
        .find(|(k, _)| k == key)
        .and_then(|(_, v)| v.parse().ok()))
}

/// Reads a rate CSV or an arrival CSV, telling them apart by header.
///
/// A rate trace is replayed with the configured seed when one was given
/// explicitly, else with the seed recorded in the file, else the default.
pub fn load(path: &Path, config: &Config) -> anyhow::Result<Loaded> {
    let header = first_data_line(path)?;
    let file_seed: Option<u64> = comment_value(path, "seed")?;
    let seed = match (config.source("seed"), file_seed) {
        (Source::Default, Some(s)) => s,
        _ => config.u64("seed")?,
    };
    if header.starts_with("arrival_s") {
        let trace = ingest_arrival_csv(path, config.deadline_multiplier()?)?;
        let seed = match config.source("seed") {
            Source::Default => file_seed,
            _ => Some(seed),
        };
        return Ok(Loaded::Arrivals { trace, seed });
    }
    let rates = ingest_rate_csv(path, config.request_size()?)?;
    let horizon = comment_value(path, "horizon_s")?.unwrap_or_else(|| rates.duration());
    let mut trace = PoissonTrace::new(rates, horizon, seed)?;
    trace.deadline_multiplier = config.deadline_multiplier()?;
    Ok(Loaded::Rates(trace))
}
