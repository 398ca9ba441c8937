//! File formats, Monte-Carlo driver and reference scenarios on top of
//! `clearnet-core`.

pub mod config;
pub mod montecarlo;
pub mod output;
pub mod scenarios;

pub use config::{ConfigError, Scenario};
pub use montecarlo::{run_monte_carlo, McError, McSummary};
pub use scenarios::{run_scenario_suite, SuiteOptions, SuiteReport};
