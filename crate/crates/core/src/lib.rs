//! Expected-cost minimisation for electricity bought across a day-ahead
//! market, an intra-day market and a penalty-priced balancing purchase.

pub mod backtest;
pub mod cli;
pub mod cost_model;
pub mod distributions;
pub mod error;
pub mod exec;
pub mod expectation;
pub mod optimizer;
pub mod quadrature;
pub mod scenario_lab;
pub mod stats;

pub use error::{Error, Result};
