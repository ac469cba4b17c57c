//! Discrete-event simulation of hybrid FPGA/CPU serverless platforms.
//!
//! The crate models worker lifecycles, generates self-similar request
//! traces, simulates schedulers against them and solves the rate-based
//! allocation MILP exactly on small instances.

pub mod baselines;
pub mod dispatch;
pub mod error;
pub mod experiment;
pub mod model;
pub mod oracle;
pub mod simengine;
pub mod spork;
pub mod tracegen;

pub use error::{Error, Result};
