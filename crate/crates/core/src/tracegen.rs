//! Workload generation: b-model rate traces, rescaling to a target worker
//! count, non-homogeneous Poisson arrivals by thinning, request-size buckets,
//! and CSV ingestion of rate and arrival traces.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::model::{Request, DEFAULT_DEADLINE_MULTIPLIER};

/// Per-minute slots, as in production rate traces.
pub const DEFAULT_SLOT_LENGTH: f64 = 60.0;

// Independent RNG streams derived from one user seed.
const STREAM_SIZE: u64 = 1;
const STREAM_BMODEL: u64 = 2;
const STREAM_ARRIVALS: u64 = 3;

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Request rates per slot for one application.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTrace {
    pub slot_length: f64,
    /// Requests per second, one value per slot.
    pub rates: Vec<f64>,
    /// CPU service time of every request in the trace.
    pub base_size: f64,
}

impl RateTrace {
    pub fn new(slot_length: f64, rates: Vec<f64>, base_size: f64) -> Result<Self> {
        let t = RateTrace {
            slot_length,
            rates,
            base_size,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::param("rate trace has no slots"));
        }
        if !(self.slot_length > 0.0 && self.slot_length.is_finite()) {
            return Err(Error::param("slot length must be positive"));
        }
        if !(self.base_size > 0.0 && self.base_size.is_finite()) {
            return Err(Error::param("request size must be positive"));
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::param(format!("invalid rate {r}")));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.rates.len() as f64 * self.slot_length
    }

    pub fn mean_rate(&self) -> f64 {
        self.rates.iter().sum::<f64>() / self.rates.len() as f64
    }

    /// Instantaneous rate: linear between slot midpoints, constant in the
    /// outer half-slots.
    pub fn rate_at(&self, t: f64) -> f64 {
        let n = self.rates.len();
        let pos = t / self.slot_length - 0.5;
        if pos <= 0.0 {
            return self.rates[0];
        }
        let lo = pos.floor() as usize;
        if lo + 1 >= n {
            return self.rates[n - 1];
        }
        let frac = pos - lo as f64;
        self.rates[lo] + frac * (self.rates[lo + 1] - self.rates[lo])
    }

    /// Expected request count over `[0, horizon)` under [`Self::rate_at`].
    pub fn expected_count(&self, horizon: f64) -> f64 {
        // Integrate the piecewise-linear rate exactly over its linear pieces.
        let l = self.slot_length;
        let n = self.rates.len();
        let mut knots = vec![0.0];
        knots.extend((0..n).map(|i| (i as f64 + 0.5) * l));
        knots.push(f64::INFINITY);
        let mut total = 0.0;
        for w in knots.windows(2) {
            let a = w[0].min(horizon);
            let b = w[1].min(horizon);
            if b > a {
                total += 0.5 * (self.rate_at(a) + self.rate_at(b)) * (b - a);
            }
        }
        total
    }
}

/// Per-slot volumes from the b-model: each range's volume splits into
/// `(bias, 1 - bias)` fractions with a seeded-random orientation, down to
/// single slots.
pub fn bmodel_volumes(total_volume: f64, num_slots: usize, bias: f64, seed: u64) -> Result<Vec<f64>> {
    if num_slots == 0 || !num_slots.is_power_of_two() {
        return Err(Error::param(format!(
            "b-model slot count must be a power of two, got {num_slots}"
        )));
    }
    if !(0.5..1.0).contains(&bias) {
        return Err(Error::param(format!("b-model bias must be in [0.5, 1), got {bias}")));
    }
    if !(total_volume >= 0.0 && total_volume.is_finite()) {
        return Err(Error::param("b-model volume must be >= 0"));
    }
    let mut rng = rng_for(seed, STREAM_BMODEL);
    let mut level = vec![total_volume];
    while level.len() < num_slots {
        let mut next = Vec::with_capacity(level.len() * 2);
        for v in level {
            let heavy = v * bias;
            let light = v - heavy;
            if rng.random::<bool>() {
                next.extend([heavy, light]);
            } else {
                next.extend([light, heavy]);
            }
        }
        level = next;
    }
    Ok(level)
}

pub fn bmodel_rates(
    total_volume: f64,
    num_slots: usize,
    bias: f64,
    seed: u64,
    slot_length: f64,
    base_size: f64,
) -> Result<RateTrace> {
    let volumes = bmodel_volumes(total_volume, num_slots, bias, seed)?;
    RateTrace::new(
        slot_length,
        volumes.into_iter().map(|v| v / slot_length).collect(),
        base_size,
    )
}

/// Rescales rates so that, on average, `avg_workers` CPU workers are busy.
pub fn scale_to_workers(rates: &RateTrace, avg_workers: f64, base_size: f64) -> Result<RateTrace> {
    if !(avg_workers > 0.0 && avg_workers.is_finite()) {
        return Err(Error::param("average worker count must be positive"));
    }
    if !(base_size > 0.0 && base_size.is_finite()) {
        return Err(Error::param("request size must be positive"));
    }
    let mean = rates.mean_rate();
    if !(mean > 0.0) {
        return Err(Error::param("cannot rescale a trace with zero mean rate"));
    }
    let factor = avg_workers / (mean * base_size);
    RateTrace::new(
        rates.slot_length,
        rates.rates.iter().map(|r| r * factor).collect(),
        base_size,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeBucket {
    Short,
    Medium,
    Long,
}

impl SizeBucket {
    /// Inclusive CPU service-time bounds in seconds.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            SizeBucket::Short => (0.01, 0.1),
            SizeBucket::Medium => (0.1, 1.0),
            SizeBucket::Long => (1.0, 10.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SizeBucket::Short => "short",
            SizeBucket::Medium => "medium",
            SizeBucket::Long => "long",
        }
    }
}

impl FromStr for SizeBucket {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(SizeBucket::Short),
            "medium" => Ok(SizeBucket::Medium),
            "long" => Ok(SizeBucket::Long),
            _ => Err(Error::param(format!("unknown size bucket '{s}'"))),
        }
    }
}

/// Log-uniform request size within the bucket.
pub fn sample_request_size(bucket: SizeBucket, seed: u64) -> f64 {
    let (lo, hi) = bucket.bounds();
    let mut rng = rng_for(seed, STREAM_SIZE);
    let u: f64 = rng.random();
    (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
}

/// Parameters of a synthetic evaluation workload.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorkload {
    pub bucket: SizeBucket,
    pub burstiness: f64,
    pub horizon: f64,
    pub avg_workers: f64,
    pub slot_length: f64,
    /// Fixed request size; sampled from `bucket` when `None`.
    pub base_size: Option<f64>,
}

impl Default for SyntheticWorkload {
    fn default() -> Self {
        SyntheticWorkload {
            bucket: SizeBucket::Short,
            burstiness: 0.6,
            horizon: 2.0 * 3600.0,
            avg_workers: 100.0,
            slot_length: DEFAULT_SLOT_LENGTH,
            base_size: None,
        }
    }
}

impl SyntheticWorkload {
    /// Size sample, b-model rates over enough power-of-two slots to cover
    /// the horizon (truncated), then rescaled to the target worker count.
    pub fn rates(&self, seed: u64) -> Result<RateTrace> {
        if !(self.horizon > 0.0 && self.slot_length > 0.0) {
            return Err(Error::param("horizon and slot length must be positive"));
        }
        let size = match self.base_size {
            Some(s) => s,
            None => sample_request_size(self.bucket, seed),
        };
        let slots = (self.horizon / self.slot_length).ceil() as usize;
        let generated = slots.max(1).next_power_of_two();
        let mut volumes = bmodel_volumes(generated as f64, generated, self.burstiness, seed)?;
        volumes.truncate(slots);
        let raw = RateTrace::new(
            self.slot_length,
            volumes.into_iter().map(|v| v / self.slot_length).collect(),
            size,
        )?;
        scale_to_workers(&raw, self.avg_workers, size)
    }

    pub fn trace(&self, seed: u64) -> Result<PoissonTrace> {
        Ok(PoissonTrace {
            rates: self.rates(seed)?,
            horizon: self.horizon,
            seed,
            deadline_multiplier: DEFAULT_DEADLINE_MULTIPLIER,
        })
    }
}

/// A replayable stream of requests sorted by arrival.
pub trait RequestSource {
    fn requests(&self) -> Box<dyn Iterator<Item = Request> + '_>;
    /// Arrivals lie strictly within `[0, horizon)`.
    fn horizon(&self) -> f64;
}

/// A materialized arrival trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalTrace {
    pub requests: Vec<Request>,
    pub horizon: f64,
}

impl ArrivalTrace {
    pub fn new(requests: Vec<Request>, horizon: f64) -> Result<Self> {
        let t = ArrivalTrace { requests, horizon };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        for (i, r) in self.requests.iter().enumerate() {
            if r.id != i as u64 {
                return Err(Error::param(format!("request ids must be dense, found {} at {i}", r.id)));
            }
            if !(r.arrival >= 0.0 && r.arrival < self.horizon) {
                return Err(Error::param(format!(
                    "arrival {} outside [0, {})",
                    r.arrival, self.horizon
                )));
            }
            if r.arrival < prev {
                return Err(Error::param("arrivals must be sorted"));
            }
            if !(r.base_size > 0.0) || !(r.deadline > r.arrival) {
                return Err(Error::param(format!("request {} has invalid size or deadline", r.id)));
            }
            prev = r.arrival;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }
}

impl RequestSource for ArrivalTrace {
    fn requests(&self) -> Box<dyn Iterator<Item = Request> + '_> {
        Box::new(self.requests.iter().copied())
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Poisson arrivals generated lazily and identically on every replay.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonTrace {
    pub rates: RateTrace,
    pub horizon: f64,
    pub seed: u64,
    pub deadline_multiplier: f64,
}

impl PoissonTrace {
    pub fn new(rates: RateTrace, horizon: f64, seed: u64) -> Result<Self> {
        rates.validate()?;
        if !(horizon >= 0.0) || horizon > rates.duration() * (1.0 + 1e-12) {
            return Err(Error::param(format!(
                "horizon {horizon} exceeds the rate trace duration {}",
                rates.duration()
            )));
        }
        Ok(PoissonTrace {
            rates,
            horizon,
            seed,
            deadline_multiplier: DEFAULT_DEADLINE_MULTIPLIER,
        })
    }

    pub fn iter(&self) -> PoissonArrivals<'_> {
        PoissonArrivals {
            rates: &self.rates,
            horizon: self.horizon,
            deadline_multiplier: self.deadline_multiplier,
            rng: rng_for(self.seed, STREAM_ARRIVALS),
            slot: 0,
            slot_end: 0.0,
            slot_max: 0.0,
            t: 0.0,
            next_id: 0,
            started: false,
        }
    }

    pub fn materialize(&self) -> ArrivalTrace {
        ArrivalTrace {
            requests: self.iter().collect(),
            horizon: self.horizon,
        }
    }
}

impl RequestSource for PoissonTrace {
    fn requests(&self) -> Box<dyn Iterator<Item = Request> + '_> {
        Box::new(self.iter())
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Thinning sampler: candidates at the slot's maximum rate, accepted with
/// probability `rate(t) / max`.
pub struct PoissonArrivals<'a> {
    rates: &'a RateTrace,
    horizon: f64,
    deadline_multiplier: f64,
    rng: ChaCha8Rng,
    slot: usize,
    slot_end: f64,
    slot_max: f64,
    t: f64,
    next_id: u64,
    started: bool,
}

impl PoissonArrivals<'_> {
    fn enter_slot(&mut self, slot: usize) {
        let l = self.rates.slot_length;
        self.slot = slot;
        self.t = slot as f64 * l;
        self.slot_end = ((slot + 1) as f64 * l).min(self.horizon);
        // The interpolant is linear on each half-slot, so its max is at a knot.
        self.slot_max = self
            .rates
            .rate_at(self.t)
            .max(self.rates.rates[slot])
            .max(self.rates.rate_at(self.slot_end));
    }
}

impl Iterator for PoissonArrivals<'_> {
    type Item = Request;

    fn next(&mut self) -> Option<Request> {
        if !self.started {
            self.started = true;
            if self.horizon <= 0.0 {
                return None;
            }
            self.enter_slot(0);
        }
        loop {
            if self.slot_max > 0.0 {
                let gap: f64 = Exp1.sample(&mut self.rng);
                self.t += gap / self.slot_max;
                if self.t < self.slot_end {
                    let u: f64 = self.rng.random();
                    if u * self.slot_max < self.rates.rate_at(self.t) {
                        let id = self.next_id;
                        self.next_id += 1;
                        return Some(Request::new(
                            id,
                            self.t,
                            self.rates.base_size,
                            self.deadline_multiplier,
                        ));
                    }
                    continue;
                }
            }
            let next = self.slot + 1;
            if next >= self.rates.rates.len() || next as f64 * self.rates.slot_length >= self.horizon {
                self.slot_max = 0.0;
                self.slot_end = f64::INFINITY;
                self.t = f64::INFINITY;
                return None;
            }
            self.enter_slot(next);
        }
    }
}

/// Materialized non-homogeneous Poisson arrivals over `[0, horizon)`.
pub fn poisson_arrivals(rates: &RateTrace, horizon: f64, seed: u64) -> Result<ArrivalTrace> {
    Ok(PoissonTrace::new(rates.clone(), horizon, seed)?.materialize())
}

/// Summed FPGA service time of the arrivals in each interval `[k*len, (k+1)*len)`.
pub fn interval_demand(
    source: &(impl RequestSource + ?Sized),
    interval: f64,
    fpga_speedup: f64,
) -> Vec<f64> {
    let n = (source.horizon() / interval).ceil().max(0.0) as usize;
    let mut demand = vec![0.0; n];
    for r in source.requests() {
        let k = (r.arrival / interval) as usize;
        if k >= demand.len() {
            demand.resize(k + 1, 0.0);
        }
        demand[k] += r.base_size / fpga_speedup;
    }
    demand
}

fn ingest_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads `key=value` pairs from leading `#` comment lines.
pub fn header_comments(path: &Path) -> Result<Vec<(String, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        for part in rest.split_whitespace() {
            if let Some((k, v)) = part.split_once('=') {
                out.push((k.to_string(), v.to_string()));
            }
        }
    }
    Ok(out)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => ingest_err(path, 1, format!("{other:?}")),
        })?)
}

fn check_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let headers = reader
        .headers()
        .map_err(|e| ingest_err(path, 1, e.to_string()))?
        .clone();
    let line = headers.position().map_or(1, |p| p.line());
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(ingest_err(
            path,
            line,
            format!("expected header '{}', found '{}'", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn parse_cell(path: &Path, line: u64, record: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    let cell = record
        .get(idx)
        .ok_or_else(|| ingest_err(path, line, format!("missing column '{name}'")))?
        .trim();
    let v: f64 = cell
        .parse()
        .map_err(|_| ingest_err(path, line, format!("non-numeric {name} '{cell}'")))?;
    if !v.is_finite() {
        return Err(ingest_err(path, line, format!("non-finite {name} '{cell}'")));
    }
    Ok(v)
}

/// Reads a `minute,rate` CSV (rates in requests per second). The request
/// size comes from `size_override` or else a `# size_ms=<float>` comment.
pub fn ingest_rate_csv(path: &Path, size_override: Option<f64>) -> Result<RateTrace> {
    let base_size = match size_override {
        Some(s) => s,
        None => header_comments(path)?
            .into_iter()
            .find(|(k, _)| k == "size_ms")
            .map(|(_, v)| {
                v.parse::<f64>()
                    .map(|ms| ms / 1000.0)
                    .map_err(|_| ingest_err(path, 1, format!("invalid size_ms '{v}'")))
            })
            .transpose()?
            .ok_or_else(|| ingest_err(path, 1, "request size not given (no size_ms comment)"))?,
    };
    if !(base_size > 0.0 && base_size.is_finite()) {
        return Err(ingest_err(path, 1, "request size must be positive"));
    }
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &["minute", "rate"])?;
    let mut rates = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ingest_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let minute = parse_cell(path, line, &record, 0, "minute")?;
        let rate = parse_cell(path, line, &record, 1, "rate")?;
        if minute != rates.len() as f64 {
            return Err(ingest_err(
                path,
                line,
                format!("expected minute {}, found {minute}", rates.len()),
            ));
        }
        if rate < 0.0 {
            return Err(ingest_err(path, line, format!("negative rate {rate}")));
        }
        rates.push(rate);
    }
    if rates.is_empty() {
        return Err(ingest_err(path, 2, "no data rows"));
    }
    RateTrace::new(DEFAULT_SLOT_LENGTH, rates, base_size)
}

/// Reads an `arrival_s,size_s` CSV. The horizon is taken from a
/// `# horizon_s=<float>` comment when present, else just past the last arrival.
pub fn ingest_arrival_csv(path: &Path, deadline_multiplier: f64) -> Result<ArrivalTrace> {
    let declared_horizon = header_comments(path)?
        .into_iter()
        .find(|(k, _)| k == "horizon_s")
        .and_then(|(_, v)| v.parse::<f64>().ok());
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &["arrival_s", "size_s"])?;
    let mut requests = Vec::new();
    let mut prev = 0.0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ingest_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let arrival = parse_cell(path, line, &record, 0, "arrival_s")?;
        let size = parse_cell(path, line, &record, 1, "size_s")?;
        if arrival < prev {
            return Err(ingest_err(path, line, "arrivals must be non-negative and sorted"));
        }
        if size <= 0.0 {
            return Err(ingest_err(path, line, format!("non-positive size {size}")));
        }
        prev = arrival;
        requests.push(Request::new(requests.len() as u64, arrival, size, deadline_multiplier));
    }
    let horizon = match declared_horizon {
        Some(h) => h,
        None => requests
            .last()
            .map_or(0.0, |r| next_up(r.arrival)),
    };
    ArrivalTrace::new(requests, horizon).map_err(|e| ingest_err(path, 0, e.to_string()))
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        f64::from_bits(1)
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

/// Writes the rate trace as `minute,rate` with size metadata in a comment.
pub fn write_rate_csv(path: &Path, trace: &RateTrace, comments: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "# size_ms={}", trace.base_size * 1000.0)?;
    writeln!(w, "minute,rate")?;
    for (i, r) in trace.rates.iter().enumerate() {
        writeln!(w, "{i},{r}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_arrival_csv(path: &Path, source: &(impl RequestSource + ?Sized), comments: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "# horizon_s={}", source.horizon())?;
    writeln!(w, "arrival_s,size_s")?;
    for r in source.requests() {
        writeln!(w, "{},{}", r.arrival, r.base_size)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn bmodel_uniform_at_half_bias() {
        for seed in 0..5 {
            let v = bmodel_volumes(1000.0, 16, 0.5, seed).unwrap();
            assert!(v.iter().all(|x| *x == 1000.0 / 16.0));
        }
    }

    #[test]
    fn bmodel_one_and_two_levels() {
        let v = sorted(bmodel_volumes(100.0, 2, 0.7, 3).unwrap());
        assert_relative_eq!(v[0], 30.0, max_relative = 1e-12);
        assert_relative_eq!(v[1], 70.0, max_relative = 1e-12);

        let v = sorted(bmodel_volumes(100.0, 4, 0.7, 9).unwrap());
        for (got, want) in v.iter().zip([9.0, 21.0, 21.0, 49.0]) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn bmodel_orientation_depends_on_seed() {
        let firsts: Vec<f64> = (0..32)
            .map(|s| bmodel_volumes(100.0, 2, 0.7, s).unwrap()[0])
            .collect();
        assert!(firsts.contains(&70.0));
        assert!(firsts.iter().any(|v| (*v - 30.0).abs() < 1e-9));
    }

    #[test]
    fn bmodel_rejects_bad_params() {
        assert!(bmodel_volumes(1.0, 6, 0.6, 0).is_err());
        assert!(bmodel_volumes(1.0, 0, 0.6, 0).is_err());
        assert!(bmodel_volumes(1.0, 8, 0.49, 0).is_err());
        assert!(bmodel_volumes(1.0, 8, 1.0, 0).is_err());
    }

    #[test]
    fn scaling_examples() {
        let t = RateTrace::new(60.0, vec![5.0; 8], 0.01).unwrap();
        let s = scale_to_workers(&t, 100.0, 0.01).unwrap();
        for r in &s.rates {
            assert_relative_eq!(*r, 10_000.0, max_relative = 1e-12);
        }
        let s = scale_to_workers(&t, 1.0, 1.0).unwrap();
        assert_relative_eq!(s.mean_rate(), 1.0, max_relative = 1e-12);

        let bursty = bmodel_rates(1.0, 64, 0.75, 4, 60.0, 0.02).unwrap();
        let s = scale_to_workers(&bursty, 100.0, 0.02).unwrap();
        assert!((s.mean_rate() * 0.02 - 100.0).abs() <= 1e-9 * 100.0);

        let zero = RateTrace::new(60.0, vec![0.0; 4], 0.01).unwrap();
        assert!(scale_to_workers(&zero, 100.0, 0.01).is_err());
    }

    #[test]
    fn interpolation_anchors_midpoints() {
        let t = RateTrace::new(60.0, vec![0.0, 120.0], 0.01).unwrap();
        assert_eq!(t.rate_at(0.0), 0.0);
        assert_eq!(t.rate_at(30.0), 0.0);
        assert_relative_eq!(t.rate_at(60.0), 60.0, max_relative = 1e-12);
        assert_eq!(t.rate_at(90.0), 120.0);
        assert_eq!(t.rate_at(119.0), 120.0);
        // 30s at 0, a 60s ramp to 120, 30s at 120.
        assert_relative_eq!(t.expected_count(120.0), 3600.0 + 3600.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_rates_give_empty_trace() {
        let t = RateTrace::new(60.0, vec![0.0; 3], 0.01).unwrap();
        assert!(poisson_arrivals(&t, 180.0, 1).unwrap().is_empty());
    }

    #[test]
    fn poisson_output_is_sorted_dense_and_deterministic() {
        let t = RateTrace::new(10.0, vec![50.0, 5.0, 80.0], 0.02).unwrap();
        let a = poisson_arrivals(&t, 30.0, 11).unwrap();
        let b = poisson_arrivals(&t, 30.0, 11).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        for (i, r) in a.requests.iter().enumerate() {
            assert_eq!(r.id, i as u64);
            assert_eq!(r.base_size, 0.02);
            assert_relative_eq!(r.deadline, r.arrival + 0.2, max_relative = 1e-12);
        }
        let c = poisson_arrivals(&t, 30.0, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn horizon_truncates_arrivals() {
        let t = RateTrace::new(10.0, vec![100.0; 4], 0.01).unwrap();
        let a = poisson_arrivals(&t, 15.0, 2).unwrap();
        assert!(a.requests.iter().all(|r| r.arrival < 15.0));
        assert!(poisson_arrivals(&t, 41.0, 2).is_err());
    }

    #[test]
    fn request_size_buckets() {
        for seed in 0..200 {
            let s = sample_request_size(SizeBucket::Short, seed);
            assert!((0.01..=0.1).contains(&s));
            let l = sample_request_size(SizeBucket::Long, seed);
            assert!((1.0..=10.0).contains(&l));
        }
        assert_eq!(
            sample_request_size(SizeBucket::Medium, 5),
            sample_request_size(SizeBucket::Medium, 5)
        );
    }

    #[test]
    fn synthetic_workload_matches_target_load() {
        let w = SyntheticWorkload {
            horizon: 7200.0,
            ..Default::default()
        };
        let r = w.rates(3).unwrap();
        assert_eq!(r.rates.len(), 120);
        assert!((r.mean_rate() * r.base_size - 100.0).abs() < 1e-9);
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn rate_csv_parses() {
        let f = write_tmp("minute,rate\n0,100\n1,200\n");
        let t = ingest_rate_csv(f.path(), Some(0.01)).unwrap();
        assert_eq!(t.rates, vec![100.0, 200.0]);
        assert_eq!(t.slot_length, 60.0);
        assert_eq!(t.base_size, 0.01);

        let f = write_tmp("# size_ms=25\nminute,rate\n0,1.5\n");
        let t = ingest_rate_csv(f.path(), None).unwrap();
        assert_relative_eq!(t.base_size, 0.025, max_relative = 1e-12);
    }

    #[test]
    fn rate_csv_errors_name_lines() {
        let f = write_tmp("minute,rate\n");
        assert!(matches!(ingest_rate_csv(f.path(), Some(0.01)), Err(Error::Ingest { .. })));

        let f = write_tmp("minute,rate\n0,100\n1,-5\n");
        match ingest_rate_csv(f.path(), Some(0.01)) {
            Err(Error::Ingest { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }

        let f = write_tmp("minute,rate\n0,abc\n");
        match ingest_rate_csv(f.path(), Some(0.01)) {
            Err(Error::Ingest { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("non-numeric"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let f = write_tmp("0,100\n1,200\n");
        assert!(matches!(ingest_rate_csv(f.path(), Some(0.01)), Err(Error::Ingest { line: 1, .. })));

        let f = write_tmp("minute,rate\n0,100\n");
        assert!(ingest_rate_csv(f.path(), None).is_err());
    }

    #[test]
    fn arrival_csv_round_trip() {
        let t = RateTrace::new(5.0, vec![20.0, 40.0], 0.05).unwrap();
        let a = poisson_arrivals(&t, 10.0, 4).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_arrival_csv(f.path(), &a, &[]).unwrap();
        let b = ingest_arrival_csv(f.path(), DEFAULT_DEADLINE_MULTIPLIER).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn interval_demand_sums_fpga_time() {
        let reqs = vec![
            Request::new(0, 0.5, 1.0, 10.0),
            Request::new(1, 9.9, 1.0, 10.0),
            Request::new(2, 10.0, 4.0, 10.0),
        ];
        let a = ArrivalTrace::new(reqs, 30.0).unwrap();
        assert_eq!(interval_demand(&a, 10.0, 2.0), vec![1.0, 2.0, 0.0]);
    }
}
