//! Probabilistic forecasting of emergency-department waiting times.
//!
//! The crate covers the whole pipeline: a discrete-event simulator that
//! produces synthetic event logs, cleaning and splitting of those logs,
//! feature engineering at registration and at initial assessment, quantile
//! regression forests, the benchmark forecasters, proper scoring rules and a
//! travel-plus-wait hospital routing experiment.

pub mod baselines;
pub mod calendar;
pub mod distribution;
pub mod edsim;
pub mod error;
pub mod eventlog;
pub mod features;
pub mod qrf;
pub mod routing;
pub mod scoring;
pub mod seed;

pub use distribution::ForecastDistribution;
pub use error::{Error, Result};
