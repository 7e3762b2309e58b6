//! Growth-versus-defensive style timing: data assembly, factor attribution,
//! the smooth macro-state score, the bounded EWMA policy, benchmarks and
//! validation studies.

pub mod attribution;
pub mod baskets;
pub mod benchmarks;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod market_data;
pub mod policy;
pub mod report;
pub mod signals;
pub mod synth;

pub use error::{Error, Result};

pub const TRADING_DAYS: usize = 252;
