pub mod autoscaler;
pub mod baselines;
pub mod decomposition;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod longterm;
pub mod nn;
pub mod series;
pub mod shortterm;
pub mod synthetic;
pub mod trace;

pub use error::{Error, Result};
pub use series::{NormalizationStats, TimeSeries};
