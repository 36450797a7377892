//! Gaussian-process forecasting of PV power from power history and
//! satellite HRV cloud cover.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod geo;
pub mod gp;
pub mod kernels;
pub mod pipeline;

pub use error::{Error, Result};
