//! Batch orchestration, configuration and report rendering behind the
//! `ctxvuln` binary.

pub mod config;
pub mod pipeline;
pub mod report;
