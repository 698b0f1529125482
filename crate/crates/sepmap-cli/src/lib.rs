//! Scan engine and configuration handling behind the `sepscan` binary.

pub mod config;
pub mod scan;
