//! Command-line harness for collapse-model trajectory ensembles:
//! declarative TOML experiment configs, deterministic parallel execution,
//! table/tree result serialization, and a self-verification suite.

pub mod config;
pub mod output;
pub mod runner;
pub mod verify;
