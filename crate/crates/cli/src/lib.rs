//! Configuration-driven experiments on top of `sparq-core`: TOML configs,
//! parallel replication, trace and summary CSVs, post-hoc analysis.

pub mod config;
pub mod diagnostics;
pub mod experiment;
pub mod report;
pub mod sweep;
