//! Trend-following high-frequency trader order-book model.
//!
//! The crate covers the microscopic Monte Carlo engine ([`microsim`]), the
//! closed-form mean-field results it is checked against ([`kinetics`]), the
//! tick-time price iteration ([`langevin`]), the estimators applied to
//! simulated records ([`stats`]) and a zero-intelligence order-book baseline
//! ([`ziob`]).

pub mod config;
pub mod experiments;
pub mod kinetics;
pub mod langevin;
pub mod microsim;
pub mod par;
pub mod quad;
pub mod recipe;
pub mod records;
pub mod report;
pub mod rng;
pub mod spread;
pub mod stats;
pub mod ziob;

pub use config::{validate_config, ConfigError, ExperimentConfig, FieldError};
pub use rng::RngStream;
pub use spread::{sample_spread, SpreadDistribution};
