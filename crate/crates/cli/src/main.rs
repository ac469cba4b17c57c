//! `hyssim`: generate traces, simulate schedulers, sweep parameters and
//! solve the offline allocation program from the command line.

mod commands;
mod config;
mod output;
mod trace;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyssim::experiment::SchedulerKind;

use config::Config;

/// A problem with the flags or configuration rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "hyssim", version, about = "Hybrid FPGA/CPU serverless scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key=value` configuration file; see `hyssim config` for the keys.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides one configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic rate trace and its Poisson arrivals.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bucket: Option<String>,
        #[arg(long)]
        burstiness: Option<f64>,
        #[arg(long)]
        hours: Option<f64>,
        #[arg(long)]
        avg_workers: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Rate CSV path; arrivals go to `<stem>.arrivals.csv` beside it.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Skip the arrival CSV.
        #[arg(long)]
        no_arrivals: bool,
    },
    /// Simulate one scheduler on a trace and append a report row.
    Run {
        #[command(flatten)]
        common: Common,
        /// Rate CSV (`minute,rate`) or arrival CSV (`arrival_s,size_s`).
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
        #[arg(long)]
        scheduler: Option<String>,
        /// Poisson seed for a rate trace; defaults to the seed recorded in it.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        dispatch: Option<String>,
        /// Report CSV to append to; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Also write the event log here.
        #[arg(long, value_name = "FILE")]
        events: Option<PathBuf>,
    },
    /// Simulate schedulers over a cross product of parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated scheduler names; defaults to the configured one.
        #[arg(long, value_delimiter = ',')]
        schedulers: Vec<String>,
        /// An axis such as `burstiness=0.5,0.6,0.7`; may be repeated.
        #[arg(long, value_name = "KEY=V1,V2,...")]
        vary: Vec<String>,
        /// Seeds per point (the `repetitions` key).
        #[arg(long)]
        seeds: Option<u32>,
        /// First seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        hours: Option<f64>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Solve the offline allocation program for a trace.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
        /// Comma-separated energy weights in [0, 1].
        #[arg(long)]
        alphas: Option<String>,
        /// Number of allocation intervals.
        #[arg(long)]
        intervals: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Pareto CSV; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Write the program (weighted by `alpha`) as an LP file instead of solving.
        #[arg(long, value_name = "FILE")]
        emit_lp: Option<PathBuf>,
    },
    /// Print every configuration key with its default.
    Config,
}

fn base_config(common: &Common) -> anyhow::Result<Config> {
    let mut config = Config::load(common.config.as_deref())?;
    for s in &common.set {
        config.set_assignment(s)?;
    }
    Ok(config)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen { common, bucket, burstiness, hours, avg_workers, seed, out, no_arrivals } => {
            let mut c = base_config(&common)?;
            c.flag("bucket", bucket)?;
            c.flag("burstiness", burstiness)?;
            c.flag("hours", hours)?;
            c.flag("avg_workers", avg_workers)?;
            c.flag("seed", seed)?;
            commands::gen(&c, &out, !no_arrivals)
        }
        Command::Run { common, trace, scheduler, seed, alpha, dispatch, out, events } => {
            let mut c = base_config(&common)?;
            c.flag("scheduler", scheduler)?;
            c.flag("seed", seed)?;
            c.flag("alpha", alpha)?;
            c.flag("dispatch", dispatch)?;
            commands::run(&c, &trace, out.as_deref(), events.as_deref())
        }
        Command::Sweep { common, schedulers, vary, seeds, seed, hours, out } => {
            let mut c = base_config(&common)?;
            c.flag("repetitions", seeds)?;
            c.flag("seed", seed)?;
            c.flag("hours", hours)?;
            let kinds: Vec<SchedulerKind> = if schedulers.is_empty() {
                vec![c.scheduler()?]
            } else {
                schedulers
                    .iter()
                    .map(|s| s.trim().parse().map_err(|e: hyssim::Error| UsageError(e.to_string())))
                    .collect::<Result<_, _>>()?
            };
            let axes = vary
                .iter()
                .map(|v| commands::Axis::parse(v))
                .collect::<Result<Vec<_>, _>>()?;
            commands::sweep(&c, &kinds, &axes, out.as_deref())
        }
        Command::Oracle { common, trace, alphas, intervals, seed, out, emit_lp } => {
            let mut c = base_config(&common)?;
            c.flag("oracle.alphas", alphas)?;
            c.flag("oracle.intervals", intervals)?;
            c.flag("seed", seed)?;
            commands::oracle(&c, &trace, out.as_deref(), emit_lp.as_deref())
        }
        Command::Config => {
            print!("{}", config::describe());
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    if let Some(e) = err.downcast_ref::<hyssim::Error>() {
        return match e {
            hyssim::Error::Param(_) => EXIT_USAGE,
            hyssim::Error::Provisioning(_)
            | hyssim::Error::Infeasible(_)
            | hyssim::Error::Envelope(_) => EXIT_INFEASIBLE,
            hyssim::Error::Io(_) | hyssim::Error::Ingest { .. } => EXIT_IO,
            hyssim::Error::Contract(_) | hyssim::Error::NotDrained(_) => 1,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return EXIT_IO;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("hyssim: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
